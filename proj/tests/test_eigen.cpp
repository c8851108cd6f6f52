#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "growfrag/eigen.hpp"
#include "specs.hpp"

using namespace growfrag;
using Catch::Approx;

namespace {
EigenOptions fast_opts() {
    EigenOptions o;
    o.workers = 4;
    return o;
}
}  // namespace

TEST_CASE("operator assembly", "[eigen]") {
    const ModelSpec spec = testspec::default_spec(0.0);
    const MassGrid grid = MassGrid::uniform_trapezoid(1.0, 60);
    EigenAssembler assembler(spec, grid, fast_opts());

    SECTION("strict positivity for eps > 0") {
        const OperatorMatrix K = assembler.assemble(0.5, 1e-3);
        double mn = 1e300;
        for (double e : K.entries) mn = std::min(mn, e);
        CHECK(mn > 0.0);
    }
    SECTION("row sums obey the envelope bound") {
        const double cbq = kernel_product_bound(spec);
        for (double lam : {0.05, 0.5, 2.0}) {
            const double eps = 1e-3;
            const OperatorMatrix K = assembler.assemble(lam, eps);
            const double bound = 2.0 * (cbq * 1.0 + eps) / (lam + eps);
            for (std::size_t i = 0; i < K.n; ++i) {
                double row = 0.0;
                for (std::size_t j = 0; j < K.n; ++j) row += K.at(i, j);
                CHECK(row <= bound * (1.0 + 1e-6));
            }
        }
    }
    SECTION("no division and no regularization gives the zero operator") {
        const ModelSpec dead = testspec::no_division_spec(0.0);
        EigenAssembler a2(dead, grid, fast_opts());
        const OperatorMatrix K = a2.assemble(0.3, 0.0);
        for (double e : K.entries) CHECK(e == 0.0);
    }
    SECTION("shared-orbit and per-column quadratures agree") {
        for (double lam : {0.2, 0.9}) {
            const OperatorMatrix Kf = assembler.assemble(lam, 1e-3);
            const OperatorMatrix Kd = assembler.assemble_direct(lam, 1e-3);
            double scale = 0.0;
            for (double e : Kf.entries) scale = std::max(scale, std::abs(e));
            double worst = 0.0;
            for (std::size_t k = 0; k < Kf.entries.size(); ++k)
                worst = std::max(worst, std::abs(Kf.entries[k] - Kd.entries[k]));
            CHECK(worst <= 2e-5 * scale);
        }
    }
}

TEST_CASE("dominant eigenvalue limits", "[eigen]") {
    const ModelSpec spec = testspec::default_spec(0.0);
    const MassGrid grid = MassGrid::uniform_trapezoid(1.0, 200);
    EigenAssembler assembler(spec, grid, fast_opts());

    SECTION("mu tends to 2 as lambda -> 0") {
        const OperatorMatrix K = assembler.assemble(1e-4, 1e-3);
        const PowerResult pr = dominant_eigen(K, 1e-12);
        CHECK(pr.mu == Approx(2.0).margin(1e-2));
    }
    SECTION("mu tends to 0 as lambda -> infinity") {
        const OperatorMatrix K = assembler.assemble(1e3, 1e-3);
        const PowerResult pr = dominant_eigen(K, 1e-12);
        CHECK(pr.mu < 0.1);
        const double cbq = kernel_product_bound(spec);
        const OperatorMatrix K2 = assembler.assemble(1e3 * (cbq + 1e-3), 1e-3);
        CHECK(dominant_eigen(K2, 1e-12).mu < 0.1);
    }
    SECTION("eigen residual: K N = mu N") {
        const OperatorMatrix K = assembler.assemble(0.5, 1e-3);
        const PowerResult pr = dominant_eigen(K, 1e-13);
        const std::vector<double> w = K.apply(pr.vector);
        for (std::size_t i = 0; i < K.n; ++i)
            CHECK(w[i] == Approx(pr.mu * pr.vector[i]).margin(1e-10));
        CHECK(*std::max_element(pr.vector.begin(), pr.vector.end()) == Approx(1.0));
    }
}

TEST_CASE("fixed point in lambda", "[eigen]") {
    const ModelSpec spec = testspec::default_spec(0.0);
    const MassGrid grid = MassGrid::uniform_trapezoid(1.0, 200);
    EigenAssembler assembler(spec, grid, fast_opts());
    const LambdaSolveResult ls = solve_lambda(assembler, 1e-3);

    CHECK(ls.lambda_eps > 0.0);
    CHECK(ls.mu_residual <= 1e-8);
    CHECK(ls.mu_monotone);
    // Independent discretization of the same operator puts the root near 0.76.
    CHECK(ls.lambda_eps == Approx(0.76).margin(0.03));

    SECTION("solver refuses models without division") {
        const ModelSpec dead = testspec::no_division_spec(0.0);
        EigenAssembler a2(dead, grid, fast_opts());
        CHECK_THROWS_AS(solve_lambda(a2, 1e-3), domain_error);
    }
}

TEST_CASE("epsilon continuation", "[eigen][slow]") {
    const ModelSpec spec = testspec::default_spec(0.0);
    const MassGrid grid = MassGrid::uniform_trapezoid(1.0, 200);
    EigenAssembler assembler(spec, grid, fast_opts());
    const ContinuationResult cont = continuation(assembler);

    CHECK(cont.accepted);
    CHECK(cont.lambda0 > 0.0);
    REQUIRE(cont.epsilon_trace.size() >= 3);
    SECTION("trace gaps shrink as eps decreases") {
        for (std::size_t k = 2; k < cont.epsilon_trace.size(); ++k) {
            const double g1 = std::abs(cont.epsilon_trace[k - 1].second -
                                       cont.epsilon_trace[k - 2].second);
            const double g2 = std::abs(cont.epsilon_trace[k].second -
                                       cont.epsilon_trace[k - 1].second);
            CHECK(g2 <= g1 + 1e-12);
        }
    }
    SECTION("reported eigenvalue keeps Lambda + D positive") {
        const double d = 0.25;
        const double lambda_reported = cont.lambda0 - d;
        CHECK(lambda_reported + d > 0.0);
    }
}

TEST_CASE("eigenfunction construction", "[eigen][slow]") {
    const ModelSpec spec = testspec::default_spec(0.0);
    const MassGrid grid = MassGrid::uniform_trapezoid(1.0, 400);
    EigenOptions opts = fast_opts();
    EigenAssembler assembler(spec, grid, opts);
    const ContinuationResult cont = continuation(assembler);
    const std::vector<double> u = build_u(assembler, cont.lambda0, cont.psi);

    SECTION("u is a normalized nonnegative density") {
        double total = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            CHECK(u[i] >= 0.0);
            total += grid.weight(i) * u[i];
        }
        CHECK(total == Approx(1.0).margin(1e-10));
    }
    SECTION("Rayleigh identity") {
        CHECK(rayleigh_gap(spec, grid, cont.lambda0, u) <= 1e-3);
    }
    SECTION("stationary equation residual") {
        CHECK(stationary_residual(spec, grid, cont.lambda0, u) <= 1e-2);
    }
    SECTION("adjoint eigenfunction") {
        const std::vector<double> phi = build_phi(assembler, cont.epsilon_trace, u);
        std::vector<double> uphi(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            CHECK(phi[i] > 0.0);
            uphi[i] = u[i] * phi[i];
        }
        CHECK(grid.integrate(uphi) == Approx(1.0).margin(1e-8));

        // Adjoint consistency of the discretization for a random test vector.
        const OperatorMatrix K = assembler.assemble(cont.lambda0, 1e-6);
        std::mt19937 gen(99);
        std::uniform_real_distribution<double> ud(0.1, 1.0);
        std::vector<double> f(grid.size());
        for (auto& x : f) x = ud(gen);
        const std::vector<double> Kf = K.apply(f);
        const std::vector<double> Ksphi = K.apply_adjoint(grid.weights(), phi);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            lhs += grid.weight(i) * Kf[i] * phi[i];
            rhs += grid.weight(i) * f[i] * Ksphi[i];
        }
        CHECK(lhs == Approx(rhs).epsilon(1e-10));

        // The reproductive value dies out toward mass zero.
        CHECK(phi.front() == *std::min_element(phi.begin(), phi.end()));
    }
}

TEST_CASE("death-rate shift", "[eigen][slow]") {
    const ModelSpec spec = testspec::default_spec(0.0);
    const MassGrid grid = MassGrid::uniform_trapezoid(1.0, 200);
    const ShiftCheckReport rep =
        eigenvalue_shift_check(spec, grid, {0.1, 0.25, 0.5}, 1e-3, fast_opts());
    CHECK(rep.passed);
    for (const auto& e : rep.entries) CHECK(e.gap <= 1e-8);
    CHECK(rep.restart_mu_gap <= 1e-10);
}

TEST_CASE("grid refinement convergence", "[eigen][slow]") {
    const ModelSpec spec = testspec::default_spec(0.0);
    const MassGrid g1 = MassGrid::uniform_trapezoid(1.0, 200);
    const MassGrid g2 = MassGrid::uniform_trapezoid(1.0, 400);
    EigenAssembler a1(spec, g1, fast_opts());
    EigenAssembler a2(spec, g2, fast_opts());
    const double l1 = continuation(a1).lambda0;
    const double l2 = continuation(a2).lambda0;
    CHECK(std::abs(l1 - l2) <= 1e-3);
}
