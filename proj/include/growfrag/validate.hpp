#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "growfrag/eigen.hpp"
#include "growfrag/errors.hpp"
#include "growfrag/extinction.hpp"
#include "growfrag/model.hpp"
#include "growfrag/pde.hpp"
#include "growfrag/simulate.hpp"

namespace growfrag {

/// Per-time comparison of the Monte Carlo weighted sum e^{-Lambda t} <eta_t, phi>
/// against its conserved value phi(x0).
struct MartingaleCheck {
    std::vector<double> times;
    std::vector<double> scaled_means;  // e^{-Lambda t} * mean of sum phi(X_t^i)
    std::vector<double> z_scores;
    double phi_x0 = 0.0;
    bool passed = false;  // all |z| <= 3
};

inline MartingaleCheck check_martingale(const ModelSpec& spec, double lambda,
                                        const WeightFunction& phi, double x0,
                                        const std::vector<double>& times,
                                        std::size_t replicas, std::uint64_t seed,
                                        std::size_t workers = 1) {
    MartingaleCheck mc;
    mc.times = times;
    mc.phi_x0 = phi(x0);
    const auto stats =
        weighted_expectation(spec, x0, phi, times, replicas, seed,
                             {std::numeric_limits<std::size_t>::max() / 2, 20000000, true},
                             workers);
    mc.passed = true;
    for (const auto& st : stats) {
        const double damp = std::exp(-lambda * st.time);
        const double scaled_mean = damp * st.mean;
        const double scaled_se =
            damp * st.stddev / std::sqrt(static_cast<double>(replicas));
        double z = 0.0;
        if (scaled_se > 0.0)
            z = (scaled_mean - mc.phi_x0) / scaled_se;
        else if (std::abs(scaled_mean - mc.phi_x0) > 1e-12)
            z = std::numeric_limits<double>::infinity();
        mc.scaled_means.push_back(scaled_mean);
        mc.z_scores.push_back(z);
        if (!(std::abs(z) <= 3.0)) mc.passed = false;
    }
    return mc;
}

/// Flat-trend test of E[N_t] e^{-Lambda t}: the sequence must stay inside a
/// band of ratio <= 10 with no systematic exponential drift.
struct GrowthBoundCheck {
    std::vector<double> times;
    std::vector<double> scaled_means;  // E[N_t] e^{-Lambda t}
    double band_ratio = 0.0;
    double log_slope = 0.0;
    bool passed = false;
    std::string note;
};

inline GrowthBoundCheck check_growth_bound(const ModelSpec& spec, double lambda,
                                           double x0, const std::vector<double>& times,
                                           std::size_t replicas, std::uint64_t seed,
                                           std::size_t workers = 1) {
    GrowthBoundCheck gb;
    gb.times = times;
    const auto stats = weighted_expectation(
        spec, x0, [](double) { return 1.0; }, times, replicas, seed,
        {std::numeric_limits<std::size_t>::max() / 2, 20000000, true}, workers);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& st : stats) {
        const double scaled = std::exp(-lambda * st.time) * st.mean;
        gb.scaled_means.push_back(scaled);
        if (scaled <= 0.0) {
            gb.note = "scaled population mean vanished";
            gb.passed = false;
            return gb;
        }
        lo = std::min(lo, scaled);
        hi = std::max(hi, scaled);
        sx += st.time;
        sy += std::log(scaled);
        sxx += st.time * st.time;
        sxy += st.time * std::log(scaled);
    }
    const double n = static_cast<double>(stats.size());
    gb.band_ratio = hi / lo;
    gb.log_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    gb.passed = gb.band_ratio <= 10.0 && std::abs(gb.log_slope) <= 0.05;
    return gb;
}

enum class Regime { Supercritical, Subcritical, NearCritical, NoDivision };

inline std::string to_string(Regime r) {
    switch (r) {
        case Regime::Supercritical: return "supercritical";
        case Regime::Subcritical: return "subcritical";
        case Regime::NearCritical: return "near-critical";
        default: return "no-division";
    }
}

struct CrosscheckOptions {
    std::size_t grid_n = 200;
    std::size_t pde_n = 400;
    double pde_horizon = 40.0;
    double x0 = 0.5;
    double horizon = 30.0;
    std::size_t replicas = 2000;
    std::vector<double> martingale_times{1.0, 2.0, 4.0};
    std::size_t martingale_replicas = 4000;
    std::vector<double> growth_times{0.0, 1.0, 2.0, 4.0, 7.0, 10.0};
    std::size_t growth_replicas = 2000;
    std::uint64_t seed = 20240917;
    std::size_t workers = 1;
    double near_critical_band = 0.1;
    double dichotomy_margin = 1e-3;
    double lambda_perturbation = 0.0;  // negative-control knob; 0 in normal runs
    SimulationCaps caps{500, 2000000, true};
};

/// Cross-route fitness report: eigenvalue, transient growth rate, extinction
/// profile and Monte Carlo survival, with the sign-consistency verdicts.
struct CrossCheckReport {
    Regime regime = Regime::NearCritical;
    bool ran_eigen = false, ran_pde = false, ran_picard = false, ran_mc = false;
    double lambda_eigen = 0.0;   // after the death shift
    double lambda_pde = 0.0;
    double pde_gap = 0.0;        // |lambda_eigen - lambda_pde|
    double p_x0 = 0.0;           // Picard extinction probability at x0
    double p_min = 0.0, p_max = 0.0;
    Dichotomy dichotomy_verdict = Dichotomy::Inconclusive;
    SurvivalEstimate mc;
    MartingaleCheck martingale;
    GrowthBoundCheck growth_bound;
    bool martingale_ran = false, growth_bound_ran = false;
    bool criterion_consistent = false;
    bool all_passed = false;
    std::vector<std::string> notes;
};

/// Evaluate the sign criterion across all routes: positive eigenvalue must
/// come with positive Monte Carlo survival and an extinction profile below
/// one; negative eigenvalue with certain extinction on both stochastic
/// routes. Sub-solver failures mark their route not-run, never silently pass.
inline CrossCheckReport check_criterion(const ModelSpec& spec,
                                        const CrosscheckOptions& opts) {
    CrossCheckReport rep;
    const MassGrid grid = MassGrid::uniform_trapezoid(spec.max_mass(), opts.grid_n);

    try {
        EigenOptions eopts;
        eopts.workers = opts.workers;
        EigenAssembler assembler(spec, grid, eopts);
        const ContinuationResult cont = continuation(assembler);
        rep.lambda_eigen = cont.lambda0 - spec.death_rate();
        rep.ran_eigen = true;
        if (!cont.accepted) rep.notes.push_back("eigen continuation not accepted");
    } catch (const std::exception& e) {
        rep.notes.push_back(std::string("eigen route not run: ") + e.what());
    }

    try {
        const MassGrid pde_grid =
            MassGrid::uniform_trapezoid(spec.max_mass(), opts.pde_n);
        TransientSolver solver(spec, pde_grid);
        const GrowthRateEstimate est =
            pde_growth_rate(solver, solver.default_initial_state(), opts.pde_horizon);
        rep.lambda_pde = est.lambda_hat;
        rep.ran_pde = true;
    } catch (const std::exception& e) {
        rep.notes.push_back(std::string("pde route not run: ") + e.what());
    }

    try {
        PicardOptions popts;
        popts.workers = opts.workers;
        PicardSolver solver(spec, grid, popts);
        const ExtinctionProfile prof = solver.solve();
        if (!prof.converged) rep.notes.push_back("picard iteration not converged");
        rep.dichotomy_verdict = dichotomy(prof, opts.dichotomy_margin);
        rep.p_min = *std::min_element(prof.values.begin(), prof.values.end());
        rep.p_max = *std::max_element(prof.values.begin(), prof.values.end());
        std::vector<double> xs{0.0}, ys{1.0};
        for (std::size_t i = 0; i < grid.size(); ++i) {
            xs.push_back(grid.node(i));
            ys.push_back(prof.values[i]);
        }
        rep.p_x0 = PchipInterpolant(xs, ys).eval_clamped(opts.x0);
        rep.ran_picard = true;
    } catch (const std::exception& e) {
        rep.notes.push_back(std::string("picard route not run: ") + e.what());
    }

    try {
        rep.mc = estimate_survival(spec, opts.x0, opts.horizon, opts.caps, opts.replicas,
                                   opts.seed, opts.workers);
        rep.ran_mc = true;
    } catch (const std::exception& e) {
        rep.notes.push_back(std::string("mc route not run: ") + e.what());
    }

    if (rep.ran_pde && rep.ran_eigen) rep.pde_gap = std::abs(rep.lambda_eigen - rep.lambda_pde);

    if (!rep.ran_eigen) {
        rep.regime = Regime::NoDivision;
        // Without an eigenvalue the remaining routes must still agree with
        // each other; for the no-division edge that means certain extinction.
        rep.criterion_consistent =
            rep.ran_picard && rep.ran_mc &&
            rep.dichotomy_verdict == Dichotomy::ExtinctionCertain && rep.mc.p_surv == 0.0;
    } else if (rep.lambda_eigen >= opts.near_critical_band) {
        rep.regime = Regime::Supercritical;
        const bool ci_excludes_zero = rep.mc.p_surv - rep.mc.ci_halfwidth > 0.0;
        const bool picard_agrees =
            rep.dichotomy_verdict == Dichotomy::SurvivalPossible;
        const double sigma =
            std::sqrt(std::max(rep.mc.p_surv * (1.0 - rep.mc.p_surv), 1e-12) /
                      static_cast<double>(opts.replicas));
        const bool mc_matches_picard =
            std::abs((1.0 - rep.p_x0) - rep.mc.p_surv) <= 3.0 * sigma;
        rep.criterion_consistent = rep.ran_mc && rep.ran_picard && ci_excludes_zero &&
                                   picard_agrees && mc_matches_picard;
        if (!mc_matches_picard)
            rep.notes.push_back("MC survival and Picard profile disagree beyond 3 sigma");
    } else if (rep.lambda_eigen <= -opts.near_critical_band) {
        rep.regime = Regime::Subcritical;
        const bool all_extinct = rep.mc.p_surv == 0.0;
        const bool picard_agrees = rep.p_min >= 1.0 - 1e-2;
        rep.criterion_consistent = rep.ran_mc && rep.ran_picard && all_extinct &&
                                   picard_agrees;
    } else {
        rep.regime = Regime::NearCritical;
        rep.notes.push_back("near-critical eigenvalue: criterion informational only");
        rep.criterion_consistent = true;
    }
    return rep;
}

/// Full battery: sign criterion, then the martingale and population-growth
/// checks against the eigen pair (skipped when the eigen route refused).
inline CrossCheckReport run_crosscheck(const ModelSpec& spec,
                                       const CrosscheckOptions& opts) {
    CrossCheckReport rep = check_criterion(spec, opts);

    if (rep.ran_eigen) {
        const MassGrid grid = MassGrid::uniform_trapezoid(spec.max_mass(), opts.grid_n);
        EigenOptions eopts;
        eopts.workers = opts.workers;
        const EigenSolution sol = solve_eigenproblem(spec, grid, eopts);
        std::vector<double> xs{0.0}, ys{0.0};
        for (std::size_t i = 0; i < grid.size(); ++i) {
            xs.push_back(grid.node(i));
            ys.push_back(sol.phi[i]);
        }
        const PchipInterpolant phi_interp(std::move(xs), std::move(ys));
        const WeightFunction phi = [phi_interp](double x) {
            return phi_interp.eval_clamped(x);
        };
        const double lambda_used = rep.lambda_eigen + opts.lambda_perturbation;
        rep.martingale =
            check_martingale(spec, lambda_used, phi, opts.x0, opts.martingale_times,
                             opts.martingale_replicas, opts.seed + 1, opts.workers);
        rep.martingale_ran = true;
        rep.growth_bound =
            check_growth_bound(spec, lambda_used, opts.x0, opts.growth_times,
                               opts.growth_replicas, opts.seed + 2, opts.workers);
        rep.growth_bound_ran = true;
    } else {
        rep.notes.push_back("martingale and growth-bound checks not run (no eigen pair)");
    }

    rep.all_passed = rep.criterion_consistent &&
                     (!rep.martingale_ran || rep.martingale.passed) &&
                     (!rep.growth_bound_ran || rep.growth_bound.passed);
    return rep;
}

} // namespace growfrag
