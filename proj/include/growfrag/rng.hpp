#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace growfrag {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

} // namespace detail

/// 128-bit stream key. Child streams are derived by hashing, never by
/// splitting counters, so a stream's draws are independent of how many
/// siblings were created before it.
struct StreamKey {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;

    static StreamKey root(std::uint64_t seed) {
        return {detail::mix64(seed + 0x9E3779B97F4A7C15ULL),
                detail::mix64(seed ^ 0xC2B2AE3D27D4EB4FULL)};
    }

    /// Deterministic child key. salt encodes the branch taken
    /// (replica index at the root, 0/1 for left/right daughter).
    StreamKey derive(std::uint64_t salt) const {
        const std::uint64_t s = detail::mix64(salt + 0x165667B19E3779F9ULL);
        return {detail::mix64(hi ^ s), detail::mix64(lo + (s | 1ULL))};
    }
};

/// Counter-based generator: output k depends only on (key, k). Streams with
/// distinct keys are independent for simulation purposes and a stream never
/// depends on scheduling or worker count.
class CounterRng {
public:
    CounterRng() : CounterRng(StreamKey::root(0)) {}
    explicit CounterRng(StreamKey key) : key_(key) {}

    std::uint64_t next_u64() {
        std::uint64_t z = counter_++ * 0x9E3779B97F4A7C15ULL + key_.hi;
        z = detail::mix64(z);
        z ^= key_.lo;
        return detail::mix64(z);
    }

    /// Uniform draw in the open interval (0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    /// Exponential draw with the given rate; +inf when rate <= 0.
    double exponential(double rate) {
        if (rate <= 0.0) return std::numeric_limits<double>::infinity();
        return -std::log(uniform()) / rate;
    }

    double normal() {
        // Marsaglia polar method, cached second draw discarded for
        // reproducibility independent of call pairing.
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        return u * std::sqrt(-2.0 * std::log(s) / s);
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang squeeze.
    double gamma(double shape) {
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0);
            return g * std::pow(uniform(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Beta(a, a) draw, strictly inside (0, 1).
    double beta_symmetric(double a) {
        const double g1 = gamma(a);
        const double g2 = gamma(a);
        double r = g1 / (g1 + g2);
        const double eps = 1e-12;
        if (r < eps) r = eps;
        if (r > 1.0 - eps) r = 1.0 - eps;
        return r;
    }

    const StreamKey& key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    StreamKey key_;
    std::uint64_t counter_ = 0;
};

} // namespace growfrag
