#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "growfrag/extinction.hpp"
#include "oracles.hpp"
#include "specs.hpp"

using namespace growfrag;
using Catch::Approx;

namespace {
const MassGrid& grid100() {
    static const MassGrid g = MassGrid::uniform_trapezoid(1.0, 100);
    return g;
}
}  // namespace

TEST_CASE("picard map fixed points", "[extinction]") {
    SECTION("D = 0 maps the zero profile to zero exactly") {
        const ModelSpec spec = testspec::default_spec(0.0);
        PicardSolver solver(spec, grid100());
        const std::vector<double> p(grid100().size(), 0.0);
        for (double v : solver.apply(p)) CHECK(v == 0.0);
    }
    SECTION("without division, one step lands on certain extinction") {
        const ModelSpec spec = testspec::no_division_spec(0.5);
        PicardSolver solver(spec, grid100());
        const std::vector<double> p(grid100().size(), 0.0);
        for (double v : solver.apply(p)) CHECK(v == Approx(1.0).margin(1e-6));
        const ExtinctionProfile prof = solver.solve();
        CHECK(prof.converged);
        CHECK(prof.iterations <= 2);
        for (double v : prof.values) CHECK(v == Approx(1.0).margin(1e-6));
    }
    SECTION("the all-ones profile is a quadrature fixed point") {
        const ModelSpec spec = testspec::default_spec(0.25);
        PicardSolver solver(spec, grid100());
        const std::vector<double> p(grid100().size(), 1.0);
        for (double v : solver.apply(p)) CHECK(v == Approx(1.0).margin(1e-6));
    }
    SECTION("profile values outside [0,1] are rejected") {
        const ModelSpec spec = testspec::default_spec(0.25);
        PicardSolver solver(spec, grid100());
        std::vector<double> bad(grid100().size(), 0.5);
        bad[3] = 1.2;
        CHECK_THROWS_AS(solver.apply(bad), domain_error);
    }
}

TEST_CASE("death-before-division probability", "[extinction]") {
    const ModelSpec spec = testspec::default_spec(0.25);
    // Independent route: Richardson quadrature over the closed-form flow.
    auto integrand = [](double t) {
        auto hazard = [&](double s) {
            const double z = oracle::gompertz_flow(1.0, 1.0, 0.5, s);
            return z <= 0.25 ? 0.0 : 3.0 * (z - 0.25) / 0.75;
        };
        const double H = oracle::richardson_quadrature(hazard, t, 1e-10);
        return 0.25 * std::exp(-0.25 * t - H);
    };
    const double ref = oracle::simpson(integrand, 60.0, 4096);
    CHECK(ref == Approx(0.1397349346042058).margin(1e-7));
    CHECK(PicardSolver::death_before_division(spec, 0.5) ==
          Approx(0.1397349346042058).margin(1e-6));
}

TEST_CASE("extinction solve on the default model", "[extinction][slow]") {
    SECTION("supercritical: p stays away from 1 on every node") {
        const ModelSpec spec = testspec::default_spec(0.2);
        const ExtinctionProfile prof = solve_extinction(spec, grid100());
        REQUIRE(prof.converged);
        for (double v : prof.values) {
            CHECK(v < 1.0 - 1e-3);
            CHECK(v >= 0.0);
        }
        CHECK(dichotomy(prof, 1e-3) == Dichotomy::SurvivalPossible);
    }
    SECTION("iterates increase pointwise") {
        const ModelSpec spec = testspec::default_spec(0.2);
        PicardOptions opts;
        opts.snapshot_limit = 40;
        PicardSolver solver(spec, grid100(), opts);
        const ExtinctionProfile prof = solver.solve();
        REQUIRE(prof.generation_curves.size() >= 10);
        for (std::size_t k = 1; k < prof.generation_curves.size(); ++k) {
            const auto& a = prof.generation_curves[k - 1];
            const auto& b = prof.generation_curves[k];
            for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] >= a[i] - 1e-12);
        }
    }
    SECTION("the limit from the all-ones start dominates the minimal solution") {
        const ModelSpec spec = testspec::default_spec(0.2);
        PicardSolver solver(spec, grid100());
        const ExtinctionProfile from_zero = solver.solve(false);
        const ExtinctionProfile from_one = solver.solve(true);
        for (std::size_t i = 0; i < from_zero.values.size(); ++i)
            CHECK(from_one.values[i] >= from_zero.values[i] - 1e-9);
    }
}

TEST_CASE("step wrapper and iteration caps", "[extinction]") {
    const ModelSpec spec = testspec::default_spec(0.25);
    SECTION("picard_step advances the profile once") {
        ExtinctionProfile p0;
        p0.values.assign(grid100().size(), 0.0);
        const ExtinctionProfile p1 = picard_step(spec, grid100(), p0);
        CHECK(p1.iterations == 1);
        CHECK(p1.residual > 0.0);
        for (std::size_t i = 0; i < p1.values.size(); ++i)
            CHECK(p1.values[i] >= p0.values[i]);
    }
    SECTION("hitting max_iter flags the result as non-converged") {
        const ExtinctionProfile p = solve_extinction(spec, grid100(), 1e-8, 3);
        CHECK_FALSE(p.converged);
        CHECK(p.iterations == 3);
        CHECK(p.residual > 1e-8);
    }
    SECTION("tolerance must be positive") {
        CHECK_THROWS_AS(solve_extinction(spec, grid100(), 0.0), domain_error);
    }
}

TEST_CASE("dichotomy classification", "[extinction]") {
    SECTION("no division means certain extinction") {
        const ModelSpec spec = testspec::no_division_spec(0.5);
        const ExtinctionProfile prof = solve_extinction(spec, grid100());
        CHECK(dichotomy(prof, 1e-3) == Dichotomy::ExtinctionCertain);
    }
    SECTION("an artificially mixed profile is inconclusive") {
        ExtinctionProfile fake;
        fake.values.assign(10, 0.2);
        fake.values[7] = 0.9999;
        fake.converged = true;
        CHECK(dichotomy(fake, 1e-3) == Dichotomy::Inconclusive);
    }
}
