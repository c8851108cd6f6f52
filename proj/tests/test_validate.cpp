#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "growfrag/validate.hpp"
#include "specs.hpp"

using namespace growfrag;
using Catch::Approx;

namespace {
// Shared eigen pair for the default model with D = 0.25, computed once.
struct EigenFixture {
    MassGrid grid = MassGrid::uniform_trapezoid(1.0, 200);
    double lambda = 0.0;
    PchipInterpolant phi_interp;
    EigenFixture() {
        const ModelSpec spec = testspec::default_spec(0.25);
        EigenOptions opts;
        opts.workers = 4;
        const EigenSolution sol = solve_eigenproblem(spec, grid, opts);
        lambda = sol.lambda;
        std::vector<double> xs{0.0}, ys{0.0};
        for (std::size_t i = 0; i < grid.size(); ++i) {
            xs.push_back(grid.node(i));
            ys.push_back(sol.phi[i]);
        }
        phi_interp = PchipInterpolant(xs, ys);
    }
    WeightFunction phi() const {
        const PchipInterpolant& p = phi_interp;
        return [p](double x) { return p.eval_clamped(x); };
    }
};

const EigenFixture& fixture() {
    static const EigenFixture f;
    return f;
}
}  // namespace

TEST_CASE("martingale statistic", "[validate][slow]") {
    const ModelSpec spec = testspec::default_spec(0.25);
    const auto& fx = fixture();

    SECTION("time zero is exact") {
        const MartingaleCheck mc =
            check_martingale(spec, fx.lambda, fx.phi(), 0.5, {0.0}, 100, 7, 4);
        CHECK(mc.z_scores.at(0) == 0.0);
        CHECK(mc.scaled_means.at(0) == Approx(fx.phi()(0.5)).margin(1e-12));
    }
    SECTION("scaled means stay flat at the eigen rate") {
        const MartingaleCheck mc = check_martingale(spec, fx.lambda, fx.phi(), 0.5,
                                                    {1.0, 2.0, 4.0}, 4000, 1234, 4);
        for (double z : mc.z_scores) CHECK(std::abs(z) <= 3.0);
        CHECK(mc.passed);
    }
    SECTION("a wrong rate is rejected (negative control)") {
        const MartingaleCheck mc = check_martingale(spec, fx.lambda + 0.2, fx.phi(), 0.5,
                                                    {1.0, 2.0, 4.0}, 4000, 1234, 4);
        CHECK_FALSE(mc.passed);
    }
    SECTION("fixed seeds give bitwise-reproducible z-scores") {
        const MartingaleCheck a = check_martingale(spec, fx.lambda, fx.phi(), 0.5,
                                                   {1.0, 2.0}, 500, 99, 1);
        const MartingaleCheck b = check_martingale(spec, fx.lambda, fx.phi(), 0.5,
                                                   {1.0, 2.0}, 500, 99, 4);
        CHECK(a.z_scores == b.z_scores);
    }
}

TEST_CASE("population growth bound", "[validate][slow]") {
    const ModelSpec spec = testspec::default_spec(0.25);
    const auto& fx = fixture();

    SECTION("time zero contributes exactly one individual") {
        const GrowthBoundCheck gb =
            check_growth_bound(spec, fx.lambda, 0.5, {0.0}, 50, 3, 4);
        CHECK(gb.scaled_means.at(0) == 1.0);
    }
    SECTION("flat trend at the eigen rate") {
        const GrowthBoundCheck gb = check_growth_bound(
            spec, fx.lambda, 0.5, {0.0, 1.0, 2.0, 4.0, 7.0, 10.0}, 2000, 4321, 4);
        CHECK(gb.band_ratio <= 10.0);
        CHECK(std::abs(gb.log_slope) <= 0.05);
        CHECK(gb.passed);
    }
    SECTION("a perturbed rate drifts exponentially (negative control)") {
        const GrowthBoundCheck gb = check_growth_bound(
            spec, fx.lambda - 0.3, 0.5, {0.0, 1.0, 2.0, 4.0, 7.0, 10.0}, 2000, 4321, 4);
        CHECK_FALSE(gb.passed);
    }
}

TEST_CASE("criterion equivalence across routes", "[validate][slow]") {
    CrosscheckOptions opts;
    opts.workers = 4;
    opts.grid_n = 150;
    opts.pde_n = 300;
    opts.replicas = 600;

    SECTION("supercritical: all routes agree on survival") {
        const CrossCheckReport rep = check_criterion(testspec::default_spec(0.25), opts);
        REQUIRE(rep.ran_eigen);
        CHECK(rep.regime == Regime::Supercritical);
        CHECK(rep.lambda_eigen > 0.1);
        CHECK(rep.pde_gap <= 5e-2);
        CHECK(rep.criterion_consistent);
    }
    SECTION("subcritical: all routes agree on extinction") {
        const CrossCheckReport rep = check_criterion(testspec::default_spec(1.06), opts);
        REQUIRE(rep.ran_eigen);
        CHECK(rep.regime == Regime::Subcritical);
        CHECK(rep.mc.p_surv == 0.0);
        CHECK(rep.p_min >= 0.99);
        CHECK(rep.criterion_consistent);
    }
    SECTION("no-division edge: eigen refuses, stochastic routes agree") {
        const CrossCheckReport rep = check_criterion(testspec::no_division_spec(0.5), opts);
        CHECK_FALSE(rep.ran_eigen);
        CHECK(rep.regime == Regime::NoDivision);
        CHECK(rep.dichotomy_verdict == Dichotomy::ExtinctionCertain);
        CHECK(rep.mc.p_surv == 0.0);
        CHECK(rep.criterion_consistent);
    }
}
