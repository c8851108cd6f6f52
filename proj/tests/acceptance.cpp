// Acceptance battery: every release gate runs here, one printed line per
// criterion. The default benchmark model is Gompertz a=1 on [0,1] with a
// Beta(2,2) split kernel and ramp division rate bbar=3 above m_div=0.25.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "growfrag/eigen.hpp"
#include "growfrag/extinction.hpp"
#include "growfrag/pde.hpp"
#include "growfrag/simulate.hpp"
#include "growfrag/validate.hpp"
#include "specs.hpp"

using namespace growfrag;
using Catch::Approx;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int id, const char* name, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %02d %-22s %s\n", ok ? "PASS" : "FAIL", id, name,
                detail.c_str());
    std::fflush(stdout);
}

EigenOptions opts4() {
    EigenOptions o;
    o.workers = 4;
    return o;
}

// Shared expensive artifacts, built once.
struct Shared {
    ModelSpec spec0 = testspec::default_spec(0.0);
    MassGrid g200 = MassGrid::uniform_trapezoid(1.0, 200);
    MassGrid g400 = MassGrid::uniform_trapezoid(1.0, 400);
    EigenAssembler assem200{spec0, g200, opts4()};
    double lambda0_200 = 0.0;   // death-free eigenvalue, n = 200
    double lambda0_400 = 0.0;
    std::vector<double> psi400;
    double continuation_seconds_400 = 0.0;

    Shared() {
        lambda0_200 = continuation(assem200).lambda0;
        const auto t0 = std::chrono::steady_clock::now();
        EigenAssembler assem400{spec0, g400, opts4()};
        const ContinuationResult c = continuation(assem400);
        continuation_seconds_400 = seconds_since(t0);
        lambda0_400 = c.lambda0;
        psi400 = c.psi;
    }
};

const Shared& shared() {
    static const Shared s;
    return s;
}

struct BatteryEntry {
    const char* name;
    ModelSpec spec;
};

std::vector<BatteryEntry> battery() {
    const double l0 = shared().lambda0_200;
    std::vector<BatteryEntry> specs;
    specs.push_back({"default D=0", testspec::default_spec(0.0)});
    specs.push_back({"default supercritical", testspec::default_spec(l0 - 0.3)});
    specs.push_back({"default subcritical", testspec::default_spec(l0 + 0.3)});
    specs.push_back(
        {"beta3 low threshold",
         ModelSpec(GompertzGrowth{1.0}, RampDivision{2.0, 0.1},
                   SymmetricBetaKernel{3.0}, 0.1, 1.0)});
    specs.push_back(
        {"power-logistic growth",
         ModelSpec(PowerLogisticGrowth{1.0, 1.5}, RampDivision{3.0, 0.25},
                   SymmetricBetaKernel{2.0}, 0.15, 1.0)});
    return specs;
}

}  // namespace

TEST_CASE("criterion 01: mu-limit at small lambda", "[acceptance]") {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelSpec spec = testspec::default_spec(0.0);
    const MassGrid grid = MassGrid::uniform_trapezoid(1.0, 200);
    EigenAssembler assembler(spec, grid, opts4());
    const OperatorMatrix K = assembler.assemble(1e-4, 1e-3);
    const PowerResult pr = dominant_eigen(K, 1e-12);
    const double elapsed = seconds_since(t0);
    const bool ok = std::abs(pr.mu - 2.0) <= 1e-2 && elapsed < 30.0;
    report(1, "mu-limit", ok,
           "mu(1e-4, 1e-3) = " + std::to_string(pr.mu) + ", " +
               std::to_string(elapsed) + " s");
    CHECK(std::abs(pr.mu - 2.0) <= 1e-2);
    CHECK(elapsed < 30.0);
}

TEST_CASE("criterion 02: fixed point", "[acceptance]") {
    const LambdaSolveResult ls = solve_lambda(shared().assem200, 1e-3);
    const bool ok = ls.mu_residual <= 1e-8 && ls.lambda_eps > 0.0;
    report(2, "fixed point", ok,
           "Lambda_eps = " + std::to_string(ls.lambda_eps) +
               ", |mu-1| = " + std::to_string(ls.mu_residual));
    CHECK(ls.mu_residual <= 1e-8);
    CHECK(ls.lambda_eps > 0.0);
}

TEST_CASE("criterion 03: death-rate shift law", "[acceptance]") {
    const ShiftCheckReport rep = eigenvalue_shift_check(
        shared().spec0, shared().g200, {0.1, 0.25, 0.5}, 1e-3, opts4());
    double worst = 0.0;
    for (const auto& e : rep.entries) worst = std::max(worst, e.gap);
    report(3, "shift law", rep.passed, "max |Lambda(D)-(Lambda(0)-D)| = " +
                                           std::to_string(worst));
    for (const auto& e : rep.entries) CHECK(e.gap <= 1e-8);
    CHECK(rep.passed);
}

TEST_CASE("criterion 04: Rayleigh identity at n=400", "[acceptance]") {
    const auto& sh = shared();
    EigenAssembler assembler(sh.spec0, sh.g400, opts4());
    const std::vector<double> u = build_u(assembler, sh.lambda0_400, sh.psi400);
    const double gap = rayleigh_gap(sh.spec0, sh.g400, sh.lambda0_400, u);
    const bool ok = gap <= 1e-3;
    report(4, "Rayleigh identity", ok, "gap = " + std::to_string(gap));
    CHECK(gap <= 1e-3);
}

TEST_CASE("criterion 05: eigen vs transient oracle", "[acceptance]") {
    const auto& sh = shared();
    const auto t0 = std::chrono::steady_clock::now();
    TransientSolver solver(sh.spec0, sh.g400);
    const GrowthRateEstimate est =
        pde_growth_rate(solver, solver.default_initial_state(), 40.0);
    const double elapsed = seconds_since(t0) + sh.continuation_seconds_400;
    const double gap = std::abs(sh.lambda0_400 - est.lambda_hat);
    const bool ok = gap <= 5e-2 && elapsed < 120.0;
    report(5, "transient oracle", ok,
           "lambda_eigen = " + std::to_string(sh.lambda0_400) +
               ", lambda_pde = " + std::to_string(est.lambda_hat) + ", combined " +
               std::to_string(elapsed) + " s");
    CHECK(gap <= 5e-2);
    CHECK(elapsed < 120.0);
}

TEST_CASE("criterion 06: criterion equivalence", "[acceptance]") {
    const auto& sh = shared();
    const SimulationCaps caps{500, 2000000, true};

    // Supercritical leg: D tuned so Lambda = +0.3 exactly by the shift law.
    {
        const auto t0 = std::chrono::steady_clock::now();
        const ModelSpec spec = testspec::default_spec(sh.lambda0_200 - 0.3);
        PicardOptions popts;
        popts.workers = 4;
        PicardSolver solver(spec, sh.g200, popts);
        const ExtinctionProfile prof = solver.solve();
        std::vector<double> xs{0.0}, ys{1.0};
        for (std::size_t i = 0; i < sh.g200.size(); ++i) {
            xs.push_back(sh.g200.node(i));
            ys.push_back(prof.values[i]);
        }
        const double p_x0 = PchipInterpolant(xs, ys).eval_clamped(0.5);
        const SurvivalEstimate mc =
            estimate_survival(spec, 0.5, 30.0, caps, 2000, 20240917, 4);
        const double sigma = std::sqrt(mc.p_surv * (1.0 - mc.p_surv) / 2000.0);
        const double elapsed = seconds_since(t0);
        const bool ci_positive = mc.p_surv - mc.ci_halfwidth > 0.0;
        const bool agree = std::abs((1.0 - p_x0) - mc.p_surv) <= 3.0 * sigma;
        const bool ok = ci_positive && agree && elapsed < 120.0;
        report(6, "equivalence (super)", ok,
               "p_surv = " + std::to_string(mc.p_surv) + ", 1-p(0.5) = " +
                   std::to_string(1.0 - p_x0) + ", " + std::to_string(elapsed) + " s");
        CHECK(ci_positive);
        CHECK(agree);
        CHECK(elapsed < 120.0);
    }

    // Subcritical leg: Lambda = -0.3; every replica must die out.
    {
        const auto t0 = std::chrono::steady_clock::now();
        const ModelSpec spec = testspec::default_spec(sh.lambda0_200 + 0.3);
        PicardOptions popts;
        popts.workers = 4;
        PicardSolver solver(spec, sh.g200, popts);
        const ExtinctionProfile prof = solver.solve();
        double pmin = 1.0;
        for (double v : prof.values) pmin = std::min(pmin, v);
        const SurvivalEstimate mc =
            estimate_survival(spec, 0.5, 30.0, caps, 2000, 20240917, 4);
        const double elapsed = seconds_since(t0);
        const bool ok = mc.p_surv == 0.0 && pmin >= 1.0 - 1e-2 && elapsed < 120.0;
        report(6, "equivalence (sub)", ok,
               "survivors = " + std::to_string(mc.survived) +
                   "/2000, min p = " + std::to_string(pmin) + ", " +
                   std::to_string(elapsed) + " s");
        CHECK(mc.p_surv == 0.0);
        CHECK(pmin >= 1.0 - 1e-2);
        CHECK(elapsed < 120.0);
    }
}

TEST_CASE("criterion 07: dichotomy across the battery", "[acceptance]") {
    bool all_ok = true;
    std::string detail;
    for (const auto& entry : battery()) {
        PicardOptions popts;
        popts.workers = 4;
        PicardSolver solver(entry.spec, shared().g200, popts);
        const ExtinctionProfile prof = solver.solve();
        const Dichotomy verdict = dichotomy(prof, 1e-3);
        const bool ok = prof.converged && verdict != Dichotomy::Inconclusive;
        all_ok = all_ok && ok;
        detail += std::string(entry.name) + "=" + to_string(verdict) + " ";
        CHECK(prof.converged);
        CHECK(verdict != Dichotomy::Inconclusive);
    }
    report(7, "dichotomy", all_ok, detail);
}

TEST_CASE("criterion 08: martingale test", "[acceptance]") {
    const auto& sh = shared();
    const ModelSpec spec = testspec::default_spec(0.25);
    const EigenSolution sol = solve_eigenproblem(spec, sh.g200, opts4());
    std::vector<double> xs{0.0}, ys{0.0};
    for (std::size_t i = 0; i < sh.g200.size(); ++i) {
        xs.push_back(sh.g200.node(i));
        ys.push_back(sol.phi[i]);
    }
    const PchipInterpolant interp(std::move(xs), std::move(ys));
    const WeightFunction phi = [interp](double x) { return interp.eval_clamped(x); };

    const MartingaleCheck mc =
        check_martingale(spec, sol.lambda, phi, 0.5, {1.0, 2.0, 4.0}, 4000, 20240918, 4);
    const MartingaleCheck control = check_martingale(spec, sol.lambda + 0.2, phi, 0.5,
                                                     {1.0, 2.0, 4.0}, 4000, 20240918, 4);
    double zmax = 0.0;
    for (double z : mc.z_scores) zmax = std::max(zmax, std::abs(z));
    const bool ok = mc.passed && !control.passed;
    report(8, "martingale", ok,
           "max |z| = " + std::to_string(zmax) + ", negative control " +
               (control.passed ? "PASSED (bad)" : "failed as designed"));
    CHECK(mc.passed);
    CHECK_FALSE(control.passed);
}

TEST_CASE("criterion 09: monotone Picard and the unit fixed point", "[acceptance]") {
    bool all_ok = true;
    for (const auto& entry : battery()) {
        PicardOptions popts;
        popts.workers = 4;
        popts.snapshot_limit = 1000000;  // keep every iterate
        PicardSolver solver(entry.spec, shared().g200, popts);
        const ExtinctionProfile prof = solver.solve();  // throws on any decrease
        bool monotone = true;
        for (std::size_t k = 1; k < prof.generation_curves.size(); ++k)
            for (std::size_t i = 0; i < prof.generation_curves[k].size(); ++i)
                monotone = monotone && prof.generation_curves[k][i] >=
                                           prof.generation_curves[k - 1][i] - 1e-12;
        const std::vector<double> ones(shared().g200.size(), 1.0);
        const std::vector<double> mapped = solver.apply(ones);
        double unit_gap = 0.0;
        for (double v : mapped) unit_gap = std::max(unit_gap, std::abs(v - 1.0));
        all_ok = all_ok && monotone && unit_gap <= 1e-6;
        CHECK(monotone);
        CHECK(unit_gap <= 1e-6);
    }
    report(9, "monotone Picard", all_ok, "all iterates monotone, p==1 fixed to 1e-6");
}

TEST_CASE("criterion 10: exactness unit suite", "[acceptance]") {
    const ModelSpec spec = testspec::default_spec(0.25);
    bool ok = true;

    // Gompertz closed forms.
    for (double x : {0.05, std::exp(-1.0), 0.5, 0.9}) {
        for (double t : {0.25, std::log(2.0), 1.0, 3.0}) {
            const double ref = std::pow(x, std::exp(-t));
            ok = ok && std::abs(spec.flow(x, t) - ref) <= 1e-10;
            CHECK(spec.flow(x, t) == Approx(ref).margin(1e-10));
        }
    }
    const double t_hit = spec.hitting_time(std::exp(-1.0), std::exp(-0.5)).value();
    ok = ok && std::abs(t_hit - std::log(2.0)) <= 1e-10;
    CHECK(t_hit == Approx(std::log(2.0)).margin(1e-10));

    // Kernel normalization and symmetry.
    const QuadratureRule rule = gauss_legendre(64, 0.0, 1.0);
    double mass = 0.0, mean = 0.0, asym = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        mass += rule.weights[i] * spec.kernel_density(rule.nodes[i]);
        mean += rule.weights[i] * rule.nodes[i] * spec.kernel_density(rule.nodes[i]);
        asym = std::max(asym, std::abs(spec.kernel_density(rule.nodes[i]) -
                                       spec.kernel_density(1.0 - rule.nodes[i])));
    }
    ok = ok && std::abs(mass - 1.0) <= 1e-10 && std::abs(mean - 0.5) <= 1e-10 &&
         asym <= 1e-10;
    CHECK(mass == Approx(1.0).margin(1e-10));
    CHECK(mean == Approx(0.5).margin(1e-10));
    CHECK(asym <= 1e-10);

    // Bitwise-identical event logs for the same seed.
    const SimulationCaps caps{500, 2000000, true};
    const SimulationSummary a = simulate(spec, 0.5, 10.0, caps, 5150, 3, {}, {}, true);
    const SimulationSummary b = simulate(spec, 0.5, 10.0, caps, 5150, 3, {}, {}, true);
    bool identical = a.events.size() == b.events.size() && !a.events.empty();
    for (std::size_t k = 0; identical && k < a.events.size(); ++k) {
        identical = a.events[k].time == b.events[k].time &&
                    a.events[k].alpha == b.events[k].alpha &&
                    a.events[k].parent_id == b.events[k].parent_id &&
                    a.events[k].mass_at_event == b.events[k].mass_at_event;
    }
    ok = ok && identical;
    CHECK(identical);

    report(10, "exactness suite", ok, "closed forms, kernel, determinism");
}
