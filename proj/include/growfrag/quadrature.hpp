#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "growfrag/errors.hpp"

namespace growfrag {

/// Nodes and weights of a quadrature rule on some interval.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Legendre rule on [-1, 1], computed by Newton iteration on the
/// Legendre polynomial roots. Exact to machine precision for n <= ~100.
inline QuadratureRule gauss_legendre(std::size_t n) {
    if (n == 0) throw domain_error("gauss_legendre: n must be positive");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        // Chebyshev-based initial guess for the i-th root.
        double x = std::cos(pi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // Evaluate P_n and P_n' by the three-term recurrence.
            double p0 = 1.0, p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

/// Gauss-Legendre rule mapped onto [a, b].
inline QuadratureRule gauss_legendre(std::size_t n, double a, double b) {
    QuadratureRule rule = gauss_legendre(n);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    for (std::size_t i = 0; i < n; ++i) {
        rule.nodes[i] = mid + half * rule.nodes[i];
        rule.weights[i] *= half;
    }
    return rule;
}

/// Composite Simpson over samples at uniform spacing h.
/// Requires an odd number of points (even number of intervals).
inline double simpson_uniform(const std::vector<double>& f, double h) {
    const std::size_t m = f.size();
    if (m < 3 || m % 2 == 0)
        throw domain_error("simpson_uniform: need an odd number of points >= 3");
    double acc = f.front() + f.back();
    for (std::size_t k = 1; k + 1 < m; ++k) acc += (k % 2 == 1 ? 4.0 : 2.0) * f[k];
    return acc * h / 3.0;
}

/// One Simpson panel [a, b] from endpoint and midpoint values.
inline double simpson_panel(double fa, double fmid, double fb, double width) {
    return width * (fa + 4.0 * fmid + fb) / 6.0;
}

} // namespace growfrag
