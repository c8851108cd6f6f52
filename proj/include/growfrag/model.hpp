#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "growfrag/errors.hpp"
#include "growfrag/interp.hpp"
#include "growfrag/quadrature.hpp"

namespace growfrag {

// ---------------------------------------------------------------------------
// Rate-law descriptors
// ---------------------------------------------------------------------------

/// g(x) = a * x * ln(M / x); vanishes at 0 and M.
struct GompertzGrowth {
    double a = 1.0;
};

/// g(x) = a * x^theta * (1 - x/M); vanishes at 0 and M, theta >= 1.
struct PowerLogisticGrowth {
    double a = 1.0;
    double theta = 1.0;
};

/// Monotone-cubic interpolation of (x, g) samples spanning [0, M].
struct TabulatedCurve {
    PchipInterpolant curve;
};

using GrowthLaw = std::variant<GompertzGrowth, PowerLogisticGrowth, TabulatedCurve>;

/// b(x) = 0 for x <= m_div, then rises linearly to bbar at M.
struct RampDivision {
    double bbar = 1.0;
    double m_div = 0.0;
};

using DivisionRate = std::variant<RampDivision, TabulatedCurve>;

/// q(a) = a^(beta-1) (1-a)^(beta-1) / B(beta, beta) on [0, 1].
struct SymmetricBetaKernel {
    double beta = 2.0;
};

using FragmentationKernel = std::variant<SymmetricBetaKernel, TabulatedCurve>;

namespace detail {

inline double beta_function(double a, double b) {
    return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
}

} // namespace detail

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

/// A growth-fragmentation-death model instance: growth law g, division rate b,
/// fragmentation density q, death rate D and maximal mass M. Immutable after
/// construction; all evaluation methods are pure.
class ModelSpec {
public:
    ModelSpec(GrowthLaw growth, DivisionRate division, FragmentationKernel kernel,
              double death_rate, double max_mass, double flow_tol = 1e-13)
        : growth_(std::move(growth)),
          division_(std::move(division)),
          kernel_(std::move(kernel)),
          death_rate_(death_rate),
          max_mass_(max_mass),
          flow_tol_(flow_tol) {
        if (max_mass_ <= 0.0) throw domain_error("ModelSpec: max_mass must be positive");
        if (death_rate_ < 0.0) throw domain_error("ModelSpec: death rate must be >= 0");
        if (flow_tol_ <= 0.0) throw domain_error("ModelSpec: flow tolerance must be > 0");
        validate_tables();
        cache_division_bounds();
        cache_kernel_cdf();
    }

    double max_mass() const { return max_mass_; }
    double death_rate() const { return death_rate_; }
    double flow_tolerance() const { return flow_tol_; }

    /// Upper bound bbar on the division rate (thinning envelope).
    double division_rate_bound() const { return bbar_; }
    /// Threshold mass below which the division rate vanishes.
    double division_threshold() const { return m_div_; }

    const GrowthLaw& growth_law() const { return growth_; }
    const DivisionRate& division_law() const { return division_; }
    const FragmentationKernel& kernel_law() const { return kernel_; }

    double growth_rate(double x) const {
        check_mass(x, "growth_rate");
        return growth_rate_unchecked(x);
    }

    double division_rate(double x) const {
        check_mass(x, "division_rate");
        return division_rate_unchecked(x);
    }

    /// (g(x), b(x)) in one call.
    std::pair<double, double> eval_rates(double x) const {
        check_mass(x, "eval_rates");
        return {growth_rate_unchecked(x), division_rate_unchecked(x)};
    }

    double kernel_density(double alpha) const {
        if (alpha < 0.0 || alpha > 1.0)
            throw domain_error("kernel_density: proportion outside [0, 1]");
        return kernel_unchecked(alpha);
    }

    /// Kernel with the convention q(a) = 0 for a > 1 (used when a = x/z can
    /// exceed 1 inside operator assembly).
    double kernel_density_ext(double alpha) const {
        if (alpha < 0.0 || alpha > 1.0) return 0.0;
        return kernel_unchecked(alpha);
    }

    /// Inverse-CDF lookup for tabulated kernels; empty for analytic ones.
    const std::optional<PchipInterpolant>& kernel_inverse_cdf() const {
        return kernel_inv_cdf_;
    }

    /// Maximum of g over [0, M], used for CFL bounds.
    double max_growth_rate() const {
        double m = 0.0;
        const int n = 4096;
        for (int i = 1; i < n; ++i)
            m = std::max(m, growth_rate_unchecked(max_mass_ * i / n));
        return m;
    }

    // -- Growth flow -------------------------------------------------------

    /// A_t(x): mass after flowing for time t from x. Adaptive embedded RK
    /// pair; the state is clamped into [0, M] after each step (both ends are
    /// fixed points of the flow, so clamping only removes roundoff).
    double flow(double x, double t) const {
        check_mass(x, "flow");
        if (t < 0.0) throw domain_error("flow: time must be >= 0");
        double state[2] = {x, 0.0};
        integrate(state, 0.0, t, /*with_hazard=*/false);
        return state[0];
    }

    /// Integral of b along the flow: H(t) = int_0^t b(A_s(x)) ds.
    double cumulative_hazard(double x, double t) const {
        check_mass(x, "cumulative_hazard");
        if (t < 0.0) throw domain_error("cumulative_hazard: time must be >= 0");
        double state[2] = {x, 0.0};
        integrate(state, 0.0, t, /*with_hazard=*/true);
        return state[1];
    }

    /// Advance (mass, hazard) in place from time t0 to t1.
    void advance(double state[2], double t0, double t1) const {
        integrate(state, t0, t1, /*with_hazard=*/true);
    }

    /// First hitting time of mass y from mass x (x <= y required).
    /// Returns nullopt when y >= M: the flow only reaches M in the limit.
    std::optional<double> hitting_time(double x, double y) const {
        if (x <= 0.0 || x > max_mass_)
            throw domain_error("hitting_time: start mass outside (0, M]");
        if (y < x) throw domain_error("hitting_time: target below start mass");
        if (y >= max_mass_) return std::nullopt;
        if (y == x) return 0.0;
        if (const auto* gz = std::get_if<GompertzGrowth>(&growth_)) {
            // Closed form: A_t(x) = M (x/M)^(exp(-a t)).
            return std::log(std::log(max_mass_ / x) / std::log(max_mass_ / y)) / gz->a;
        }
        // Monotone flow: bracket by doubling, then bisect.
        double lo = 0.0, hi = 1.0;
        while (flow(x, hi) < y) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e10)
                throw numerical_error("hitting_time: target not reached by t = 1e10");
        }
        for (int i = 0; i < 200 && (hi - lo) > 1e-13 * std::max(1.0, hi); ++i) {
            const double mid = 0.5 * (lo + hi);
            (flow(x, mid) < y ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

private:
    void check_mass(double x, const char* who) const {
        if (!(x >= 0.0 && x <= max_mass_)) {
            std::ostringstream os;
            os << who << ": mass " << x << " outside [0, " << max_mass_ << "]";
            throw domain_error(os.str());
        }
    }

    double growth_rate_unchecked(double x) const {
        return std::visit(
            [&](const auto& law) -> double {
                using T = std::decay_t<decltype(law)>;
                if constexpr (std::is_same_v<T, GompertzGrowth>) {
                    if (x <= 0.0 || x >= max_mass_) return 0.0;
                    return law.a * x * std::log(max_mass_ / x);
                } else if constexpr (std::is_same_v<T, PowerLogisticGrowth>) {
                    if (x <= 0.0 || x >= max_mass_) return 0.0;
                    return law.a * std::pow(x, law.theta) * (1.0 - x / max_mass_);
                } else {
                    return law.curve(x);
                }
            },
            growth_);
    }

    double division_rate_unchecked(double x) const {
        return std::visit(
            [&](const auto& law) -> double {
                using T = std::decay_t<decltype(law)>;
                if constexpr (std::is_same_v<T, RampDivision>) {
                    if (x <= law.m_div) return 0.0;
                    return law.bbar * (x - law.m_div) / (max_mass_ - law.m_div);
                } else {
                    return law.curve(x);
                }
            },
            division_);
    }

    double kernel_unchecked(double alpha) const {
        return std::visit(
            [&](const auto& law) -> double {
                using T = std::decay_t<decltype(law)>;
                if constexpr (std::is_same_v<T, SymmetricBetaKernel>) {
                    if (alpha <= 0.0 || alpha >= 1.0)
                        return law.beta > 1.0 ? 0.0
                               : (law.beta == 1.0 ? 1.0
                                                  : std::numeric_limits<double>::infinity());
                    return std::pow(alpha * (1.0 - alpha), law.beta - 1.0) /
                           detail::beta_function(law.beta, law.beta);
                } else {
                    return law.curve(alpha);
                }
            },
            kernel_);
    }

    void validate_tables() {
        if (const auto* t = std::get_if<TabulatedCurve>(&growth_)) {
            if (t->curve.x_min() > 0.0 || t->curve.x_max() < max_mass_)
                throw domain_error("ModelSpec: tabulated growth must span [0, M]");
        }
        if (const auto* t = std::get_if<TabulatedCurve>(&division_)) {
            if (t->curve.x_min() > 0.0 || t->curve.x_max() < max_mass_)
                throw domain_error("ModelSpec: tabulated division rate must span [0, M]");
        }
        if (const auto* t = std::get_if<TabulatedCurve>(&kernel_)) {
            if (t->curve.x_min() > 0.0 || t->curve.x_max() < 1.0)
                throw domain_error("ModelSpec: tabulated kernel must span [0, 1]");
        }
        if (const auto* r = std::get_if<RampDivision>(&division_)) {
            if (r->bbar < 0.0) throw domain_error("ModelSpec: bbar must be >= 0");
            if (r->m_div < 0.0 || r->m_div >= max_mass_)
                throw domain_error("ModelSpec: m_div must lie in [0, M)");
        }
        if (const auto* k = std::get_if<SymmetricBetaKernel>(&kernel_)) {
            if (k->beta <= 0.0) throw domain_error("ModelSpec: kernel beta must be > 0");
        }
    }

    void cache_division_bounds() {
        if (const auto* r = std::get_if<RampDivision>(&division_)) {
            bbar_ = r->bbar;
            m_div_ = r->m_div;
            return;
        }
        // Tabulated: pchip never overshoots its samples, so the sample
        // maximum bounds b; the threshold is the last mass before b > 0.
        const auto& t = std::get<TabulatedCurve>(division_);
        bbar_ = 0.0;
        for (double v : t.curve.ordinates()) bbar_ = std::max(bbar_, v);
        m_div_ = 0.0;
        const int n = 8192;
        for (int i = 1; i <= n; ++i) {
            const double x = max_mass_ * i / n;
            if (t.curve(std::min(x, max_mass_)) > 0.0) break;
            m_div_ = x;
        }
    }

    void cache_kernel_cdf() {
        if (!std::holds_alternative<TabulatedCurve>(kernel_)) return;
        // Cumulative of the tabulated density on a fine mesh, then the
        // inverse CDF as a pchip of (cdf, alpha) for sampling.
        const int n = 2048;
        std::vector<double> alpha(n + 1), cdf(n + 1);
        double acc = 0.0;
        alpha[0] = 0.0;
        cdf[0] = 0.0;
        double prev = kernel_unchecked(0.0);
        for (int i = 1; i <= n; ++i) {
            const double a = static_cast<double>(i) / n;
            const double cur = kernel_unchecked(a);
            acc += 0.5 * (prev + cur) / n;
            prev = cur;
            alpha[i] = a;
            cdf[i] = acc;
        }
        for (auto& c : cdf) c /= acc;
        // Deduplicate flat runs so the inverse is well defined.
        std::vector<double> cx, cy;
        cx.push_back(cdf[0]);
        cy.push_back(alpha[0]);
        for (int i = 1; i <= n; ++i) {
            if (cdf[i] > cx.back() + 1e-12) {
                cx.push_back(cdf[i]);
                cy.push_back(alpha[i]);
            }
        }
        kernel_inv_cdf_.emplace(std::move(cx), std::move(cy));
    }

    // Embedded Cash-Karp RK pair on (mass, hazard). The hazard component is
    // skipped when with_hazard is false.
    void integrate(double state[2], double t0, double t1, bool with_hazard) const {
        static constexpr double a21 = 1.0 / 5.0;
        static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
        static constexpr double a41 = 3.0 / 10.0, a42 = -9.0 / 10.0, a43 = 6.0 / 5.0;
        static constexpr double a51 = -11.0 / 54.0, a52 = 5.0 / 2.0, a53 = -70.0 / 27.0,
                                a54 = 35.0 / 27.0;
        static constexpr double a61 = 1631.0 / 55296.0, a62 = 175.0 / 512.0,
                                a63 = 575.0 / 13824.0, a64 = 44275.0 / 110592.0,
                                a65 = 253.0 / 4096.0;
        static constexpr double b1 = 37.0 / 378.0, b3 = 250.0 / 621.0, b4 = 125.0 / 594.0,
                                b6 = 512.0 / 1771.0;
        static constexpr double e1 = b1 - 2825.0 / 27648.0, e3 = b3 - 18575.0 / 48384.0,
                                e4 = b4 - 13525.0 / 55296.0, e5 = -277.0 / 14336.0,
                                e6 = b6 - 1.0 / 4.0;

        if (t1 <= t0) return;
        const int dim = with_hazard ? 2 : 1;
        double t = t0;
        double h = std::min(0.1, t1 - t0);
        const double tol = flow_tol_;
        const double t_done = t1 - 1e-15 * std::max(1.0, std::abs(t1));
        int guard = 0;
        auto rhs = [&](const double y[2], double dy[2]) {
            dy[0] = growth_rate_unchecked(std::clamp(y[0], 0.0, max_mass_));
            if (with_hazard)
                dy[1] = division_rate_unchecked(std::clamp(y[0], 0.0, max_mass_));
        };
        while (t < t_done) {
            if (++guard > 2000000)
                throw numerical_error("flow: step budget exhausted");
            h = std::min(h, t1 - t);
            double k1[2], k2[2], k3[2], k4[2], k5[2], k6[2], y[2];
            rhs(state, k1);
            for (int d = 0; d < dim; ++d) y[d] = state[d] + h * a21 * k1[d];
            rhs(y, k2);
            for (int d = 0; d < dim; ++d)
                y[d] = state[d] + h * (a31 * k1[d] + a32 * k2[d]);
            rhs(y, k3);
            for (int d = 0; d < dim; ++d)
                y[d] = state[d] + h * (a41 * k1[d] + a42 * k2[d] + a43 * k3[d]);
            rhs(y, k4);
            for (int d = 0; d < dim; ++d)
                y[d] = state[d] +
                       h * (a51 * k1[d] + a52 * k2[d] + a53 * k3[d] + a54 * k4[d]);
            rhs(y, k5);
            for (int d = 0; d < dim; ++d)
                y[d] = state[d] + h * (a61 * k1[d] + a62 * k2[d] + a63 * k3[d] +
                                       a64 * k4[d] + a65 * k5[d]);
            rhs(y, k6);
            double err = 0.0;
            double next[2];
            for (int d = 0; d < dim; ++d) {
                next[d] = state[d] +
                          h * (b1 * k1[d] + b3 * k3[d] + b4 * k4[d] + b6 * k6[d]);
                const double ed = h * (e1 * k1[d] + e3 * k3[d] + e4 * k4[d] +
                                       e5 * k5[d] + e6 * k6[d]);
                err = std::max(err, std::abs(ed));
            }
            if (err <= tol) {
                t += h;
                state[0] = std::clamp(next[0], 0.0, max_mass_);
                if (with_hazard) state[1] = std::max(next[1], state[1]);
            }
            const double scale =
                err > 0.0 ? 0.9 * std::pow(tol / err, 0.2) : 5.0;
            h *= std::clamp(scale, 0.2, 5.0);
            if (h < 1e-14 * std::max(1.0, t)) {
                std::ostringstream os;
                os << "flow: tolerance " << tol << " not met at t = " << t
                   << ", mass = " << state[0];
                throw numerical_error(os.str());
            }
        }
    }

    GrowthLaw growth_;
    DivisionRate division_;
    FragmentationKernel kernel_;
    double death_rate_;
    double max_mass_;
    double flow_tol_;
    double bbar_ = 0.0;
    double m_div_ = 0.0;
    std::optional<PchipInterpolant> kernel_inv_cdf_;
};

// ---------------------------------------------------------------------------
// MassGrid
// ---------------------------------------------------------------------------

enum class GridScheme { UniformTrapezoid, GaussLegendreComposite };

inline std::string to_string(GridScheme s) {
    return s == GridScheme::UniformTrapezoid ? "uniform-trapezoid"
                                             : "gauss-legendre-composite";
}

inline GridScheme grid_scheme_from_string(const std::string& s) {
    if (s == "uniform-trapezoid") return GridScheme::UniformTrapezoid;
    if (s == "gauss-legendre-composite") return GridScheme::GaussLegendreComposite;
    throw config_error("unknown grid scheme '" + s + "'");
}

/// Discretization of (0, M): strictly interior nodes with positive quadrature
/// weights. Shared by the extinction, eigen and pde modules.
class MassGrid {
public:
    static MassGrid uniform_trapezoid(double max_mass, std::size_t n) {
        if (n < 2) throw domain_error("MassGrid: need at least 2 nodes");
        MassGrid g;
        g.scheme_ = GridScheme::UniformTrapezoid;
        g.max_mass_ = max_mass;
        const double h = max_mass / static_cast<double>(n + 1);
        g.nodes_.resize(n);
        g.weights_.assign(n, h);
        for (std::size_t i = 0; i < n; ++i)
            g.nodes_[i] = h * static_cast<double>(i + 1);
        // The half-open boundary cells are absorbed into the end weights so
        // the weights sum to M exactly.
        g.weights_.front() = 1.5 * h;
        g.weights_.back() = 1.5 * h;
        return g;
    }

    static MassGrid gauss_legendre_composite(double max_mass, std::size_t n) {
        if (n < 2) throw domain_error("MassGrid: need at least 2 nodes");
        MassGrid g;
        g.scheme_ = GridScheme::GaussLegendreComposite;
        g.max_mass_ = max_mass;
        const std::size_t panels = std::max<std::size_t>(1, (n + 11) / 12);
        const std::size_t base = n / panels;
        std::size_t extra = n % panels;
        double left = 0.0;
        const double width = max_mass / static_cast<double>(panels);
        for (std::size_t p = 0; p < panels; ++p) {
            const std::size_t k = base + (p < extra ? 1 : 0);
            const QuadratureRule rule = gauss_legendre(k, left, left + width);
            g.nodes_.insert(g.nodes_.end(), rule.nodes.begin(), rule.nodes.end());
            g.weights_.insert(g.weights_.end(), rule.weights.begin(), rule.weights.end());
            left += width;
        }
        return g;
    }

    static MassGrid make(GridScheme scheme, double max_mass, std::size_t n) {
        return scheme == GridScheme::UniformTrapezoid
                   ? uniform_trapezoid(max_mass, n)
                   : gauss_legendre_composite(max_mass, n);
    }

    std::size_t size() const { return nodes_.size(); }
    double max_mass() const { return max_mass_; }
    GridScheme scheme() const { return scheme_; }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& weights() const { return weights_; }
    double node(std::size_t i) const { return nodes_[i]; }
    double weight(std::size_t i) const { return weights_[i]; }

    double integrate(const std::vector<double>& values) const {
        if (values.size() != nodes_.size())
            throw domain_error("MassGrid::integrate: size mismatch");
        double acc = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) acc += weights_[i] * values[i];
        return acc;
    }

private:
    GridScheme scheme_ = GridScheme::UniformTrapezoid;
    double max_mass_ = 1.0;
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Hypothesis audit
// ---------------------------------------------------------------------------

/// sup of b(x)/x over (0, M], sampled.
inline double division_over_mass_bound(const ModelSpec& spec) {
    double c = 0.0;
    const double M = spec.max_mass();
    for (int i = 1; i <= 4096; ++i)
        c = std::max(c, spec.division_rate(M * i / 4096.0) / (M * i / 4096.0));
    return c;
}

/// sup of the fragmentation density, sampled.
inline double kernel_sup(const ModelSpec& spec) {
    double q = 0.0;
    for (int i = 0; i <= 2048; ++i)
        q = std::max(q, spec.kernel_density(static_cast<double>(i) / 2048.0));
    return q;
}

/// C_bq: sup over (x, y) of (b(y)/y) q(x/y). The two factors maximize
/// independently, so the bound separates.
inline double kernel_product_bound(const ModelSpec& spec) {
    return division_over_mass_bound(spec) * kernel_sup(spec);
}

struct HypothesisCheck {
    bool passed = false;
    double worst_value = 0.0;
    double worst_node = 0.0;
    std::string note;
};

/// Numerical audit of the standing model assumptions and the integrability
/// condition behind the eigenproblem. Report-only: nothing throws.
struct HypothesisReport {
    HypothesisCheck kernel_symmetry;
    HypothesisCheck kernel_normalization;
    HypothesisCheck kernel_mean;
    HypothesisCheck kernel_endpoints;
    HypothesisCheck growth_endpoints;
    HypothesisCheck growth_positive_interior;
    HypothesisCheck division_shape;
    HypothesisCheck division_over_mass_bounded;
    HypothesisCheck integrability;

    double c_bq = 0.0;            // sup over (x,y) of (b(y)/y) q(x/y)
    double c_b_over_x = 0.0;      // sup of b(x)/x
    double integrability_value = 0.0;
    bool lower_growth_bound_hint = false;  // g(x) >= a x^(1+eps) near 0, eps < 1
    std::vector<std::string> notes;

    bool all_passed() const {
        return kernel_symmetry.passed && kernel_normalization.passed &&
               kernel_mean.passed && kernel_endpoints.passed &&
               growth_endpoints.passed && growth_positive_interior.passed &&
               division_shape.passed && division_over_mass_bounded.passed &&
               integrability.passed;
    }
};

inline HypothesisReport audit_hypotheses(const ModelSpec& spec, const MassGrid& grid) {
    HypothesisReport rep;
    const double M = spec.max_mass();

    // Kernel symmetry about 1/2.
    {
        double worst = 0.0, at = 0.0;
        for (int i = 0; i <= 512; ++i) {
            const double a = static_cast<double>(i) / 512.0;
            const double r = std::abs(spec.kernel_density(a) - spec.kernel_density(1.0 - a));
            if (r > worst) {
                worst = r;
                at = a;
            }
        }
        rep.kernel_symmetry = {worst <= 1e-9, worst, at, "sup |q(a) - q(1-a)|"};
    }

    // Kernel normalization and mean fraction.
    {
        const QuadratureRule rule = gauss_legendre(128, 0.0, 1.0);
        double mass = 0.0, mean = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double q = spec.kernel_density(rule.nodes[i]);
            mass += rule.weights[i] * q;
            mean += rule.weights[i] * rule.nodes[i] * q;
        }
        rep.kernel_normalization = {std::abs(mass - 1.0) <= 1e-8, mass, 0.0, "int q"};
        rep.kernel_mean = {std::abs(mean - 0.5) <= 1e-8, mean, 0.0, "int a q"};
    }

    // Kernel endpoint vanishing.
    {
        const double q0 = spec.kernel_density(0.0);
        const double q1 = spec.kernel_density(1.0);
        const double worst = std::max(q0, q1);
        rep.kernel_endpoints = {worst <= 1e-12, worst, q0 >= q1 ? 0.0 : 1.0,
                                "q(0) and q(1)"};
    }

    // Growth endpoints and interior positivity.
    {
        const double g0 = std::abs(spec.growth_rate(0.0));
        const double gM = std::abs(spec.growth_rate(M));
        rep.growth_endpoints = {std::max(g0, gM) <= 1e-10, std::max(g0, gM),
                                g0 >= gM ? 0.0 : M, "g at 0 and M"};
        double worst = std::numeric_limits<double>::infinity(), at = 0.0;
        for (double x : grid.nodes()) {
            const double g = spec.growth_rate(x);
            if (g < worst) {
                worst = g;
                at = x;
            }
        }
        rep.growth_positive_interior = {worst > 0.0, worst, at, "min g on nodes"};
    }

    // Division rate shape: zero below the threshold, in (0, bbar] above.
    {
        bool ok = true;
        double worst = 0.0, at = 0.0;
        const double mdiv = spec.division_threshold();
        const double bbar = spec.division_rate_bound();
        for (int i = 0; i <= 2048; ++i) {
            const double x = M * i / 2048.0;
            const double b = spec.division_rate(x);
            if (x <= mdiv && std::abs(b) > 1e-12) {
                ok = false;
                worst = b;
                at = x;
            }
            if (x > mdiv && x < M && (b <= 0.0 || b > bbar * (1.0 + 1e-12))) {
                ok = false;
                worst = b;
                at = x;
            }
        }
        if (bbar <= 0.0) {
            ok = false;
            rep.notes.push_back("division rate vanishes identically (bbar = 0)");
        }
        rep.division_shape = {ok, worst, at, "b = 0 below m_div, 0 < b <= bbar above"};
    }

    // Boundedness of b(x)/x and the kernel-product constant.
    {
        double c = 0.0, at = 0.0;
        for (int i = 1; i <= 4096; ++i) {
            const double x = M * i / 4096.0;
            const double r = spec.division_rate(x) / x;
            if (r > c) {
                c = r;
                at = x;
            }
        }
        const double qmax = kernel_sup(spec);
        // Diverging b/x near 0 shows up as growth between probe scales.
        bool bounded = true;
        double prev = 0.0;
        for (double x : {1e-3 * M, 1e-5 * M, 1e-7 * M}) {
            const double r = spec.division_rate(x) / x;
            if (r > std::max(10.0 * c, prev * 4.0 + 1.0)) bounded = false;
            prev = r;
        }
        rep.c_b_over_x = c;
        rep.c_bq = c * qmax;
        rep.division_over_mass_bounded = {bounded, c, at, "sup b(x)/x"};
    }

    // Integrability of the no-division survival mass:
    //   int_0^inf int_0^M exp(-int_0^t b(A_s(y)) ds) dy dt.
    {
        double total = 0.0;
        bool converged = true;
        double worst_node = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const double y = grid.node(j);
            double state[2] = {y, 0.0};
            double t = 0.0, inner = 0.0;
            const double dt = 0.25;
            bool node_ok = false;
            while (t < 1e4) {
                const double h_before = state[1];
                spec.advance(state, t, t + dt);
                // Trapezoid in t of exp(-H).
                inner += 0.5 * dt * (std::exp(-h_before) + std::exp(-state[1]));
                t += dt;
                if (state[1] > 34.0) {
                    node_ok = true;
                    break;
                }
                // Orbit parked at a fixed point with no hazard accrual:
                // the inner integral cannot converge, stop scanning.
                if (t > 50.0 && state[1] - h_before < 1e-12 &&
                    spec.division_rate(state[0]) < 1e-12)
                    break;
            }
            if (!node_ok) {
                converged = false;
                worst_node = y;
            }
            total += grid.weight(j) * inner;
        }
        rep.integrability_value = total;
        rep.integrability = {converged, total, worst_node,
                             "int int exp(-int b) finite (hazard diverges on every orbit)"};
        if (!converged)
            rep.notes.push_back("hazard did not diverge along some orbit; "
                                "integrability estimate truncated at t = 1e4");
    }

    // Sufficient-condition hint: b bounded below beyond some m < M and
    // g(x) >= a x^(1+eps) with eps < 1 near zero.
    {
        const double m = 0.5 * (spec.division_threshold() + M);
        double binf = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 256; ++i)
            binf = std::min(binf, spec.division_rate(m + (M - m) * i / 256.0 * 0.999));
        bool ratio_ok = true;
        double prev = 0.0;
        for (double x : {1e-3 * M, 1e-4 * M, 1e-5 * M, 1e-6 * M}) {
            const double r = spec.growth_rate(x) / std::pow(x, 1.99);
            if (prev > 0.0 && r < 0.95 * prev) ratio_ok = false;
            prev = r;
        }
        rep.lower_growth_bound_hint = (binf > 0.0) && ratio_ok;
    }

    return rep;
}

} // namespace growfrag
