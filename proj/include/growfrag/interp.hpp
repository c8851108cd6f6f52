#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "growfrag/errors.hpp"

namespace growfrag {

/// Shape-preserving piecewise-cubic Hermite interpolant (Fritsch-Carlson
/// slope limiting). Monotone data produce a monotone interpolant, so values
/// never overshoot the data range on any monotone run.
class PchipInterpolant {
public:
    PchipInterpolant() = default;

    PchipInterpolant(std::vector<double> xs, std::vector<double> ys)
        : xs_(std::move(xs)), ys_(std::move(ys)) {
        const std::size_t n = xs_.size();
        if (n < 2 || ys_.size() != n)
            throw domain_error("PchipInterpolant: need >= 2 matching samples");
        for (std::size_t i = 1; i < n; ++i)
            if (!(xs_[i] > xs_[i - 1]))
                throw domain_error("PchipInterpolant: abscissae must be strictly increasing");
        slopes_ = compute_slopes(xs_, ys_);
    }

    double x_min() const { return xs_.front(); }
    double x_max() const { return xs_.back(); }

    /// Evaluate inside [x_min, x_max]; outside is a domain error.
    double operator()(double x) const {
        if (x < xs_.front() || x > xs_.back())
            throw domain_error("PchipInterpolant: abscissa outside sample range");
        return eval_clamped(x);
    }

    /// Evaluate with constant extension outside the sample range.
    double eval_clamped(double x) const {
        if (x <= xs_.front()) return ys_.front();
        if (x >= xs_.back()) return ys_.back();
        const std::size_t i = interval(x);
        const double h = xs_[i + 1] - xs_[i];
        const double t = (x - xs_[i]) / h;
        const double t2 = t * t;
        const double t3 = t2 * t;
        const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        const double h10 = t3 - 2.0 * t2 + t;
        const double h01 = -2.0 * t3 + 3.0 * t2;
        const double h11 = t3 - t2;
        return h00 * ys_[i] + h10 * h * slopes_[i] + h01 * ys_[i + 1] +
               h11 * h * slopes_[i + 1];
    }

    const std::vector<double>& abscissae() const { return xs_; }
    const std::vector<double>& ordinates() const { return ys_; }

private:
    std::size_t interval(double x) const {
        const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
        std::size_t i = static_cast<std::size_t>(it - xs_.begin());
        if (i == 0) return 0;
        if (i >= xs_.size()) return xs_.size() - 2;
        return i - 1;
    }

    static std::vector<double> compute_slopes(const std::vector<double>& x,
                                              const std::vector<double>& y) {
        const std::size_t n = x.size();
        std::vector<double> h(n - 1), delta(n - 1), d(n, 0.0);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h[i] = x[i + 1] - x[i];
            delta[i] = (y[i + 1] - y[i]) / h[i];
        }
        if (n == 2) {
            d[0] = d[1] = delta[0];
            return d;
        }
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (delta[i - 1] * delta[i] <= 0.0) {
                d[i] = 0.0;
            } else {
                // Weighted harmonic mean keeps the interpolant monotone.
                const double w1 = 2.0 * h[i] + h[i - 1];
                const double w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = endpoint_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = endpoint_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        return d;
    }

    static double endpoint_slope(double h0, double h1, double del0, double del1) {
        double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
        if (d * del0 <= 0.0)
            d = 0.0;
        else if (del0 * del1 < 0.0 && std::abs(d) > 3.0 * std::abs(del0))
            d = 3.0 * del0;
        return d;
    }

    std::vector<double> xs_;
    std::vector<double> ys_;
    std::vector<double> slopes_;
};

/// Linear interpolation over a uniform mesh [x0, x0 + (n-1)*dx], clamped at
/// the ends. Used for cheap lookup tables on fine meshes.
class UniformLinearTable {
public:
    UniformLinearTable() = default;
    UniformLinearTable(double x0, double dx, std::vector<double> values)
        : x0_(x0), dx_(dx), values_(std::move(values)) {
        if (values_.size() < 2 || dx_ <= 0.0)
            throw domain_error("UniformLinearTable: need >= 2 values, dx > 0");
    }

    double operator()(double x) const {
        const double s = (x - x0_) / dx_;
        if (s <= 0.0) return values_.front();
        const double smax = static_cast<double>(values_.size() - 1);
        if (s >= smax) return values_.back();
        const std::size_t i = static_cast<std::size_t>(s);
        const double t = s - static_cast<double>(i);
        return (1.0 - t) * values_[i] + t * values_[i + 1];
    }

private:
    double x0_ = 0.0;
    double dx_ = 1.0;
    std::vector<double> values_;
};

} // namespace growfrag
