#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "growfrag/errors.hpp"
#include "growfrag/interp.hpp"
#include "growfrag/model.hpp"

namespace growfrag {

/// Transient density on a uniform mass grid. The density is stored up to an
/// exponential factor exp(log_scale) so long supercritical runs never
/// overflow; totals and growth-rate estimates account for it.
struct PdeState {
    std::vector<double> density;
    double time = 0.0;
    double log_scale = 0.0;
};

/// First-order finite-volume solver for the transport-division-death
/// equation. Cells are [0, 1.5h], [(i-.5)h, (i+.5)h], [(n-.5)h, M] around
/// the uniform-trapezoid nodes, so the outer faces sit exactly at 0 and M
/// where the growth speed vanishes: transport is conservative by
/// construction. Upwind flux (g >= 0), explicit Euler in time, division
/// gain by the grid quadrature.
class TransientSolver {
public:
    TransientSolver(const ModelSpec& spec, const MassGrid& grid)
        : spec_(spec), grid_(grid) {
        if (grid.scheme() != GridScheme::UniformTrapezoid)
            throw domain_error("TransientSolver: requires the uniform grid scheme");
        const std::size_t n = grid.size();
        const double h = grid.node(0);
        max_g_ = spec.max_growth_rate();
        face_speed_.resize(n);
        for (std::size_t i = 0; i + 1 < n; ++i)
            face_speed_[i] = spec.growth_rate(grid.node(i) + 0.5 * h);
        face_speed_[n - 1] = 0.0;  // outer face at M, g(M) = 0
        decay_.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            decay_[i] = spec.death_rate() + spec.division_rate(grid.node(i));
        gain_.assign(n * n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double z = grid.node(j);
            const double factor = 2.0 * grid.weight(j) * spec.division_rate(z) / z;
            for (std::size_t i = 0; i < n; ++i)
                gain_[i * n + j] = factor * spec.kernel_density_ext(grid.node(i) / z);
        }
    }

    const MassGrid& grid() const { return grid_; }

    double cfl_limit(double cfl = 0.9) const {
        const double h = grid_.node(0);
        return max_g_ > 0.0 ? cfl * h / max_g_ : 1e9;
    }

    /// Gaussian bump at M/2 with width M/10, normalized to total 1.
    PdeState default_initial_state() const {
        PdeState s;
        s.density.resize(grid_.size());
        const double M = grid_.max_mass();
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            const double z = (grid_.node(i) - 0.5 * M) / (0.1 * M);
            s.density[i] = std::exp(-0.5 * z * z);
        }
        const double total = grid_.integrate(s.density);
        for (auto& d : s.density) d /= total;
        return s;
    }

    PdeState state_from(const std::vector<double>& density) const {
        if (density.size() != grid_.size())
            throw domain_error("TransientSolver: density size mismatch");
        PdeState s;
        s.density = density;
        return s;
    }

    /// One explicit step. Rejects dt above the transport CFL bound (and the
    /// reaction positivity bound) before touching the state.
    void step(PdeState& state, double dt) const {
        if (dt <= 0.0) throw domain_error("pde step: dt must be positive");
        if (dt > cfl_limit() * (1.0 + 1e-12)) {
            std::ostringstream os;
            os << "pde step: dt = " << dt << " violates CFL limit " << cfl_limit();
            throw numerical_error(os.str());
        }
        const double worst_decay =
            spec_.death_rate() + spec_.division_rate_bound();
        if (dt * worst_decay > 1.0)
            throw numerical_error("pde step: dt too large for explicit reaction term");

        const std::size_t n = grid_.size();
        const std::vector<double>& r = state.density;
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double flux_out = face_speed_[i] * r[i];
            const double flux_in = i > 0 ? face_speed_[i - 1] * r[i - 1] : 0.0;
            const double* gi = gain_.data() + i * n;
            double gain = 0.0;
            for (std::size_t j = 0; j < n; ++j) gain += gi[j] * r[j];
            next[i] = r[i] - dt / grid_.weight(i) * (flux_out - flux_in) -
                      dt * decay_[i] * r[i] + dt * gain;
            if (next[i] < 0.0) next[i] = 0.0;  // roundoff guard, scheme is positive
        }
        state.density = std::move(next);
        state.time += dt;
        renormalize(state);
    }

    /// Natural log of the total population, including the carried scale.
    double log_total(const PdeState& state) const {
        const double total = grid_.integrate(state.density);
        if (!(total > 0.0))
            throw numerical_error("pde: total mass vanished");
        return std::log(total) + state.log_scale;
    }

private:
    void renormalize(PdeState& state) const {
        const double total = grid_.integrate(state.density);
        if (total > 1e100 || (total > 0.0 && total < 1e-100)) {
            for (auto& d : state.density) d /= total;
            state.log_scale += std::log(total);
        }
    }

    const ModelSpec& spec_;
    const MassGrid& grid_;
    double max_g_ = 0.0;
    std::vector<double> face_speed_;
    std::vector<double> decay_;
    std::vector<double> gain_;
};

/// One-off step (spec-level convenience; long runs should hold a solver).
inline PdeState pde_step(const ModelSpec& spec, const MassGrid& grid,
                         const PdeState& state, double dt) {
    TransientSolver solver(spec, grid);
    PdeState out = state;
    solver.step(out, dt);
    return out;
}

struct GrowthRateEstimate {
    double lambda_hat = 0.0;        // log-slope over [T/2, T]
    double lambda_previous = 0.0;   // log-slope over [T/4, T/2]
    double stabilization_gap = 0.0; // |difference| of the two windows
    double horizon = 0.0;
    std::size_t steps = 0;
};

/// Long-run exponential growth rate of the total population:
///   lambda_hat = [ln N(T) - ln N(T/2)] / (T/2),
/// with the quarter-window slope as a stabilization diagnostic. Invariant
/// under density rescaling by construction.
inline GrowthRateEstimate pde_growth_rate(const TransientSolver& solver, PdeState state,
                                          double horizon, double dt = 0.0) {
    if (horizon <= 0.0) throw domain_error("pde_growth_rate: horizon must be positive");
    if (dt <= 0.0) dt = solver.cfl_limit();
    GrowthRateEstimate est;
    est.horizon = horizon;
    double log_q = 0.0, log_h = 0.0;
    const double t0 = state.time;
    bool got_q = false, got_h = false;
    while (state.time - t0 < horizon - 1e-12) {
        const double remaining = horizon - (state.time - t0);
        solver.step(state, std::min(dt, remaining));
        ++est.steps;
        const double el = state.time - t0;
        if (!got_q && el >= 0.25 * horizon) {
            log_q = solver.log_total(state);
            got_q = true;
        }
        if (!got_h && el >= 0.5 * horizon) {
            log_h = solver.log_total(state);
            got_h = true;
        }
    }
    const double log_T = solver.log_total(state);
    est.lambda_hat = (log_T - log_h) / (0.5 * horizon);
    est.lambda_previous = (log_h - log_q) / (0.25 * horizon);
    est.stabilization_gap = std::abs(est.lambda_hat - est.lambda_previous);
    return est;
}

/// L1 distance between the renormalized transient profile and a reference
/// density on the same grid.
inline double profile_distance(const TransientSolver& solver, const PdeState& state,
                               const std::vector<double>& reference) {
    const MassGrid& grid = solver.grid();
    if (reference.size() != grid.size())
        throw domain_error("profile_distance: reference size mismatch");
    const double total = grid.integrate(state.density);
    if (!(total > 0.0)) throw numerical_error("profile_distance: empty profile");
    double acc = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        acc += grid.weight(i) * std::abs(state.density[i] / total - reference[i]);
    return acc;
}

/// Resample a density given on one grid onto another, renormalized to
/// integrate to 1 (used to push the eigenprofile onto the pde grid).
inline std::vector<double> resample_density(const MassGrid& from,
                                            const std::vector<double>& values,
                                            const MassGrid& to) {
    if (values.size() != from.size())
        throw domain_error("resample_density: values size mismatch");
    std::vector<double> xs, ys;
    xs.reserve(from.size() + 2);
    ys.reserve(from.size() + 2);
    xs.push_back(0.0);
    ys.push_back(0.0);
    for (std::size_t i = 0; i < from.size(); ++i) {
        xs.push_back(from.node(i));
        ys.push_back(std::max(values[i], 0.0));
    }
    xs.push_back(from.max_mass());
    ys.push_back(std::max(values.back(), 0.0));
    const PchipInterpolant interp(std::move(xs), std::move(ys));
    std::vector<double> out(to.size());
    for (std::size_t i = 0; i < to.size(); ++i) out[i] = interp.eval_clamped(to.node(i));
    const double total = to.integrate(out);
    if (total > 0.0)
        for (auto& v : out) v /= total;
    return out;
}

} // namespace growfrag
