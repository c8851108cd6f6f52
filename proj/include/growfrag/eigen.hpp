#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "growfrag/errors.hpp"
#include "growfrag/interp.hpp"
#include "growfrag/model.hpp"
#include "growfrag/parallel.hpp"
#include "growfrag/rng.hpp"

namespace growfrag {

/// Discretized regularized division operator at fixed (lambda, epsilon):
/// entries fold in the target-node quadrature weights, so applying it is a
/// plain matrix-vector product. Always assembled with the death-free clock;
/// death shifts the reported eigenvalue exactly.
struct OperatorMatrix {
    std::size_t n = 0;
    std::vector<double> entries;  // row-major K[i][j]
    double lambda = 0.0;
    double epsilon = 0.0;
    double death_internal = 0.0;
    bool tail_truncated = false;

    double at(std::size_t i, std::size_t j) const { return entries[i * n + j]; }

    std::vector<double> apply(const std::vector<double>& v) const {
        std::vector<double> out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = entries.data() + i * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += row[j] * v[j];
            out[i] = acc;
        }
        return out;
    }

    /// Adjoint with respect to the grid inner product sum_i w_i f_i g_i:
    /// (K* v)_j = (1/w_j) sum_i w_i K[i][j] v_i. This is the discretization
    /// of the adjoint integral operator, and makes <K f, v> = <f, K* v>
    /// exact at machine precision.
    std::vector<double> apply_adjoint(const std::vector<double>& weights,
                                      const std::vector<double>& v) const {
        std::vector<double> out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = entries.data() + i * n;
            const double wi_vi = weights[i] * v[i];
            for (std::size_t j = 0; j < n; ++j) out[j] += row[j] * wi_vi;
        }
        for (std::size_t j = 0; j < n; ++j) out[j] /= weights[j];
        return out;
    }
};

struct EigenOptions {
    std::vector<double> epsilon_schedule{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7};
    double continuation_tol = 1e-5;   // acceptance on consecutive Lambda_eps
    double power_tol = 1e-12;
    std::size_t power_max_iter = 100000;
    double lambda_width_tol = 1e-12;  // bisection interval width
    double mu_root_tol = 1e-8;        // required |mu(Lambda_eps) - 1|
    double ds = 0.005;                // orbit mesh spacing
    double eps_tail = 1e-10;
    double t_cap = 1e4;
    std::size_t workers = 1;
};

struct PowerResult {
    double mu = 0.0;
    std::vector<double> vector;  // max-normalized, positive
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Power iteration for the dominant eigenpair of a positive matrix.
/// Start vector defaults to all-ones; the eigenvector is scaled to max = 1.
inline PowerResult dominant_eigen(const OperatorMatrix& K, double tol,
                                  std::size_t max_iter = 100000,
                                  const std::vector<double>* warm_start = nullptr) {
    std::vector<double> v = warm_start && warm_start->size() == K.n
                                ? *warm_start
                                : std::vector<double>(K.n, 1.0);
    double vmax = *std::max_element(v.begin(), v.end());
    if (!(vmax > 0.0)) throw domain_error("dominant_eigen: start vector must be positive");
    for (auto& x : v) x /= vmax;

    double mu = 0.0;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        std::vector<double> w = K.apply(v);
        const double mu_new = *std::max_element(w.begin(), w.end());
        if (!(mu_new > 0.0) || !std::isfinite(mu_new)) {
            std::ostringstream os;
            os << "dominant_eigen: iteration degenerated (mu = " << mu_new << ")";
            throw numerical_error(os.str());
        }
        double dv = 0.0;
        for (auto& x : w) x /= mu_new;
        for (std::size_t i = 0; i < w.size(); ++i)
            dv = std::max(dv, std::abs(w[i] - v[i]));
        v.swap(w);
        const double dmu = std::abs(mu_new - mu);
        mu = mu_new;
        if (dmu < tol && dv < tol) return {mu, std::move(v), it, std::max(dmu, dv)};
    }
    std::ostringstream os;
    os << "dominant_eigen: no convergence in " << max_iter << " iterations (mu = " << mu
       << ")";
    throw numerical_error(os.str());
}

/// Quadrature backbone for the regularized operator: all grid nodes lie on a
/// single growth orbit, so one reference trajectory P(s) with its cumulative
/// hazard H(s) serves every matrix column. Columns are tail integrals along
/// that orbit,
///   K[i][j] = 2 w_j e^{X(s_j)} int_{s_j}^{s_end} e^{-X(s)} k_i(P(s)) ds,
/// with X(s) = (lambda+eps) s + H(s) and k_i the division kernel row, which
/// one backward cumulative pass per row evaluates for all columns at once.
class EigenAssembler {
public:
    // Always assembles the death-free problem; callers shift the reported
    // eigenvalue by the death rate.
    EigenAssembler(const ModelSpec& spec, const MassGrid& grid, EigenOptions opts = {})
        : spec_(spec), grid_(grid), opts_(opts) {
        if (spec_.division_rate_bound() > 0.0) build_orbit();
    }

    const MassGrid& grid() const { return grid_; }
    const ModelSpec& spec() const { return spec_; }
    const EigenOptions& options() const { return opts_; }
    bool tail_truncated() const { return tail_truncated_; }

    /// Upper end of the bisection bracket for the fixed-point search.
    double lambda_max(double eps) const {
        return 2.0 * (kernel_product_bound(spec_) * spec_.max_mass() + eps);
    }

    OperatorMatrix assemble(double lambda, double eps) const {
        if (lambda < 0.0 || eps < 0.0)
            throw domain_error("assemble_operator: lambda and eps must be >= 0");
        if (spec_.division_rate_bound() <= 0.0) return assemble_no_division(lambda, eps);
        const double x_span = (lambda + eps) * sb_[node_at_.back()] + hb_[node_at_.back()];
        if (x_span > 600.0) return assemble_direct(lambda, eps);
        return assemble_factorized(lambda, eps);
    }

    /// Independent per-column assembly (its own time mesh for every column).
    /// Used for huge lambda, where the shared-orbit factorization would
    /// overflow, and as a cross-validation route in tests.
    OperatorMatrix assemble_direct(double lambda, double eps) const {
        const std::size_t n = grid_.size();
        OperatorMatrix K;
        K.n = n;
        K.lambda = lambda;
        K.epsilon = eps;
        K.entries.assign(n * n, 0.0);
        const double M = spec_.max_mass();
        const double stop = std::log(1.0 / opts_.eps_tail);
        const double t_max = std::min(stop / std::max(lambda + eps, 1e-300), opts_.t_cap);
        const double dt = std::clamp(t_max / 64.0, 1e-12, opts_.ds);

        parallel_for(n, opts_.workers, [&](std::size_t j) {
            const double y = grid_.node(j);
            double state[2] = {y, 0.0};
            double t = 0.0;
            double zl = y, hl = 0.0;
            while (t < t_max && (lambda + eps) * t + state[1] < stop) {
                const double tr = std::min(t + dt, t_max);
                const double tm = 0.5 * (t + tr);
                spec_.advance(state, t, tm);
                const double zm = state[0], hm = state[1];
                spec_.advance(state, tm, tr);
                const double zr = state[0], hr = state[1];
                const double el = std::exp(-((lambda + eps) * t + hl));
                const double em = std::exp(-((lambda + eps) * tm + hm));
                const double er = std::exp(-((lambda + eps) * tr + hr));
                const double bl = spec_.division_rate(zl) / zl;
                const double bm = spec_.division_rate(zm) / zm;
                const double br = spec_.division_rate(zr) / zr;
                const double w6 = (tr - t) / 6.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = grid_.node(i);
                    const double fi = (bl * spec_.kernel_density_ext(x / zl) + eps / M) * el +
                                      4.0 * (bm * spec_.kernel_density_ext(x / zm) + eps / M) * em +
                                      (br * spec_.kernel_density_ext(x / zr) + eps / M) * er;
                    K.entries[i * n + j] += w6 * fi;
                }
                zl = zr;
                hl = hr;
                t = tr;
            }
            for (std::size_t i = 0; i < n; ++i)
                K.entries[i * n + j] *= 2.0 * grid_.weight(j);
        });
        return K;
    }

private:
    OperatorMatrix assemble_no_division(double lambda, double eps) const {
        // With b == 0 the kernel part vanishes and the hazard is zero, so
        // the remaining regularization term integrates in closed form.
        const std::size_t n = grid_.size();
        OperatorMatrix K;
        K.n = n;
        K.lambda = lambda;
        K.epsilon = eps;
        K.entries.assign(n * n, 0.0);
        if (eps <= 0.0) return K;
        const double factor = 2.0 * eps / (spec_.max_mass() * (lambda + eps));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                K.entries[i * n + j] = factor * grid_.weight(j);
        return K;
    }

    OperatorMatrix assemble_factorized(double lambda, double eps) const {
        const std::size_t n = grid_.size();
        const std::size_t kb = sb_.size();   // boundaries
        const std::size_t km = sm_.size();   // midpoints
        const double M = spec_.max_mass();
        OperatorMatrix K;
        K.n = n;
        K.lambda = lambda;
        K.epsilon = eps;
        K.tail_truncated = tail_truncated_;
        K.entries.assign(n * n, 0.0);

        std::vector<double> eb(kb), em(km);
        for (std::size_t k = 0; k < kb; ++k)
            eb[k] = std::exp(-((lambda + eps) * sb_[k] + hb_[k]));
        for (std::size_t k = 0; k < km; ++k)
            em[k] = std::exp(-((lambda + eps) * sm_[k] + hm_[k]));

        // Unit cumulative for the eps/M regularization term.
        std::vector<double> cu(kb, 0.0);
        for (std::size_t k = kb - 1; k-- > 0;) {
            const double w6 = (sb_[k + 1] - sb_[k]) / 6.0;
            cu[k] = cu[k + 1] + w6 * (eb[k] + 4.0 * em[k] + eb[k + 1]);
        }

        std::vector<double> boost(n);
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t k = node_at_[j];
            boost[j] = 2.0 * grid_.weight(j) *
                       std::exp((lambda + eps) * sb_[k] + hb_[k]);
        }

        parallel_for(n, opts_.workers, [&](std::size_t i) {
            const double* bb = kb_rows_.data() + i * kb;
            const double* bm = km_rows_.data() + i * km;
            std::vector<double> c(kb, 0.0);
            for (std::size_t k = kb - 1; k-- > 0;) {
                const double w6 = (sb_[k + 1] - sb_[k]) / 6.0;
                c[k] = c[k + 1] + w6 * (eb[k] * bb[k] + 4.0 * em[k] * bm[k] +
                                        eb[k + 1] * bb[k + 1]);
            }
            double* row = K.entries.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t k = node_at_[j];
                row[j] = boost[j] * (c[k] + (eps / M) * cu[k]);
            }
        });
        return K;
    }

    void build_orbit() {
        const double stop = std::log(1.0 / opts_.eps_tail) + 3.0;
        const std::size_t n = grid_.size();
        // Start the orbit below the first node so build_u can integrate a
        // little past the left end of the grid.
        const double x_start = grid_.node(0) / 8.0;

        std::vector<double> s_nodes(n);
        for (std::size_t j = 0; j < n; ++j) {
            const auto t = spec_.hitting_time(x_start, grid_.node(j));
            if (!t) throw numerical_error("eigen orbit: node not reachable");
            s_nodes[j] = *t;
        }

        // Panel boundaries: node positions merged with a uniform fill.
        node_at_.assign(n, 0);
        sb_.clear();
        sb_.push_back(0.0);
        double cur = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            while (cur + opts_.ds < s_nodes[j] - 1e-12) {
                cur += opts_.ds;
                sb_.push_back(cur);
            }
            if (s_nodes[j] > sb_.back() + 1e-13) sb_.push_back(s_nodes[j]);
            node_at_[j] = sb_.size() - 1;
            cur = sb_.back();
        }

        // Integrate mass and hazard through boundaries and midpoints,
        // extending past the last node until the hazard window closes.
        const double s_last = sb_.back();
        const double h_needed_beyond = stop;
        pb_.clear();
        hb_.clear();
        sm_.clear();
        pm_.clear();
        hm_.clear();
        double state[2] = {x_start, 0.0};
        pb_.push_back(state[0]);
        hb_.push_back(state[1]);
        std::size_t k = 0;
        double h_at_last = -1.0;
        for (;;) {
            if (k + 1 >= sb_.size()) {
                // Extension phase: append boundaries until the tail closes.
                if (h_at_last < 0.0) h_at_last = hb_.back();
                if (hb_.back() - h_at_last >= h_needed_beyond) break;
                if (sb_.back() - s_last >= opts_.t_cap) {
                    tail_truncated_ = true;
                    break;
                }
                sb_.push_back(sb_.back() + opts_.ds);
            }
            const double sl = sb_[k], sr = sb_[k + 1];
            const double smid = 0.5 * (sl + sr);
            spec_.advance(state, sl, smid);
            sm_.push_back(smid);
            pm_.push_back(state[0]);
            hm_.push_back(state[1]);
            spec_.advance(state, smid, sr);
            pb_.push_back(state[0]);
            hb_.push_back(state[1]);
            ++k;
        }

        // Kernel rows sampled along the orbit (lambda-independent).
        const std::size_t kb = sb_.size();
        const std::size_t km = sm_.size();
        kb_rows_.assign(n * kb, 0.0);
        km_rows_.assign(n * km, 0.0);
        std::vector<double> bob_b(kb), bob_m(km);  // b(P)/P samples
        for (std::size_t q = 0; q < kb; ++q)
            bob_b[q] = spec_.division_rate(pb_[q]) / pb_[q];
        for (std::size_t q = 0; q < km; ++q)
            bob_m[q] = spec_.division_rate(pm_[q]) / pm_[q];
        parallel_for(n, opts_.workers, [&](std::size_t i) {
            const double x = grid_.node(i);
            double* rb = kb_rows_.data() + i * kb;
            double* rm = km_rows_.data() + i * km;
            for (std::size_t q = 0; q < kb; ++q)
                rb[q] = bob_b[q] * spec_.kernel_density_ext(x / pb_[q]);
            for (std::size_t q = 0; q < km; ++q)
                rm[q] = bob_m[q] * spec_.kernel_density_ext(x / pm_[q]);
        });
    }

    const ModelSpec& spec_;
    const MassGrid& grid_;
    EigenOptions opts_;
    bool tail_truncated_ = false;

    // Reference orbit: boundaries sb_ (with mass pb_, hazard hb_), panel
    // midpoints sm_/pm_/hm_, and for each grid node the boundary index that
    // sits exactly at its orbit position.
    std::vector<double> sb_, pb_, hb_;
    std::vector<double> sm_, pm_, hm_;
    std::vector<std::size_t> node_at_;
    std::vector<double> kb_rows_, km_rows_;

    friend class EigenSolver;
    friend std::vector<double> build_u(const EigenAssembler&, double,
                                       const std::vector<double>&);
};

struct LambdaSolveResult {
    double lambda_eps = 0.0;
    std::vector<double> psi;     // fixed-point eigenvector, max = 1
    double mu_residual = 0.0;    // |mu(lambda_eps) - 1|
    std::vector<std::pair<double, double>> mu_trace;
    bool mu_monotone = true;
};

/// Root of mu(lambda) = 1 on (0, lambda_max]. Bisection with warm-started
/// power iterations; mu evaluations are recorded and checked for the
/// monotone decrease the bisection relies on. On a violated trace the
/// search falls back to a scan plus local bisection.
inline LambdaSolveResult solve_lambda(const EigenAssembler& assembler, double eps,
                                      const std::vector<double>* warm = nullptr,
                                      double lambda_shift = 0.0) {
    if (eps <= 0.0) throw domain_error("solve_lambda: eps must be > 0");
    if (assembler.spec().division_rate_bound() <= 0.0)
        throw domain_error("solve_lambda: model has no division (b == 0)");
    const EigenOptions& opts = assembler.options();

    LambdaSolveResult res;
    std::vector<double> v = warm ? *warm : std::vector<double>();
    auto mu_at = [&](double lam) {
        const OperatorMatrix K = assembler.assemble(lam + lambda_shift, eps);
        const PowerResult pr = dominant_eigen(K, opts.power_tol, opts.power_max_iter,
                                              v.empty() ? nullptr : &v);
        v = pr.vector;
        res.mu_trace.emplace_back(lam, pr.mu);
        return pr.mu;
    };

    double lo = 1e-6;
    double hi = assembler.lambda_max(eps);
    double mu_lo = mu_at(lo);
    if (mu_lo < 1.0)
        throw numerical_error("solve_lambda: no supercritical root (mu(0+) < 1)");
    double mu_hi = mu_at(hi);
    if (mu_hi >= 1.0)
        throw numerical_error("solve_lambda: mu at lambda_max >= 1; quadrature suspect");

    for (int it = 0; it < 100 && (hi - lo) > opts.lambda_width_tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double mu_mid = mu_at(mid);
        if (mu_mid >= 1.0)
            lo = mid;
        else
            hi = mid;
    }
    res.lambda_eps = 0.5 * (lo + hi);
    const double mu_final = mu_at(res.lambda_eps);
    res.mu_residual = std::abs(mu_final - 1.0);
    res.psi = v;

    // The bisection assumed mu decreases in lambda; audit the trace.
    auto sorted = res.mu_trace;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 1; k < sorted.size(); ++k)
        if (sorted[k].second > sorted[k - 1].second + 1e-9) res.mu_monotone = false;

    if (!res.mu_monotone) {
        // Scan a lambda grid for the last crossing, then re-bisect locally.
        const int scan_n = 48;
        double prev_l = 1e-6, prev_mu = mu_at(prev_l);
        double blo = prev_l, bhi = assembler.lambda_max(eps);
        for (int k = 1; k <= scan_n; ++k) {
            const double lam =
                1e-6 + (assembler.lambda_max(eps) - 1e-6) * k / double(scan_n);
            const double m = mu_at(lam);
            if (prev_mu >= 1.0 && m < 1.0) {
                blo = prev_l;
                bhi = lam;
            }
            prev_l = lam;
            prev_mu = m;
        }
        while (bhi - blo > opts.lambda_width_tol) {
            const double mid = 0.5 * (blo + bhi);
            (mu_at(mid) >= 1.0 ? blo : bhi) = mid;
        }
        res.lambda_eps = 0.5 * (blo + bhi);
        res.mu_residual = std::abs(mu_at(res.lambda_eps) - 1.0);
        res.psi = v;
    }

    if (res.mu_residual > opts.mu_root_tol) {
        std::ostringstream os;
        os << "solve_lambda: fixed point not resolved, |mu-1| = " << res.mu_residual;
        throw numerical_error(os.str());
    }
    if (res.lambda_eps <= 0.0)
        throw numerical_error("solve_lambda: root is not positive");
    return res;
}

struct ContinuationResult {
    double lambda0 = 0.0;  // death-free eigenvalue
    std::vector<double> psi;
    std::vector<std::pair<double, double>> epsilon_trace;  // (eps, Lambda_eps)
    std::vector<std::pair<double, double>> mu_trace_last;
    bool accepted = false;
    double mu_residual = 0.0;
    bool mu_monotone = true;
};

/// Drive eps down the schedule, warm-starting each fixed-point solve, and
/// accept once consecutive eigenvalues agree to continuation_tol.
inline ContinuationResult continuation(const EigenAssembler& assembler,
                                       std::optional<std::vector<double>> eps_schedule =
                                           std::nullopt) {
    const EigenOptions& opts = assembler.options();
    const std::vector<double>& schedule =
        eps_schedule ? *eps_schedule : opts.epsilon_schedule;
    if (schedule.empty()) throw domain_error("continuation: empty epsilon schedule");
    for (std::size_t k = 1; k < schedule.size(); ++k)
        if (!(schedule[k] < schedule[k - 1]))
            throw domain_error("continuation: schedule must strictly decrease");

    ContinuationResult res;
    std::vector<double> warm;
    double prev = 0.0;
    for (std::size_t k = 0; k < schedule.size(); ++k) {
        const LambdaSolveResult ls =
            solve_lambda(assembler, schedule[k], warm.empty() ? nullptr : &warm);
        warm = ls.psi;
        res.epsilon_trace.emplace_back(schedule[k], ls.lambda_eps);
        res.lambda0 = ls.lambda_eps;
        res.psi = ls.psi;
        res.mu_trace_last = ls.mu_trace;
        res.mu_residual = ls.mu_residual;
        res.mu_monotone = res.mu_monotone && ls.mu_monotone;
        if (k > 0 && std::abs(ls.lambda_eps - prev) < opts.continuation_tol) {
            res.accepted = true;
            break;
        }
        prev = ls.lambda_eps;
    }
    return res;
}

/// Density eigenfunction from the fixed-point eigenvector:
///   u(x) = (1/g(x)) int_0^x Psi(y) exp(-int_y^x (Lambda0 + b)/g) dy,
/// evaluated along the reference orbit (mass-space integration would hit the
/// integrable 1/g singularities at both endpoints). Normalized to int u = 1.
inline std::vector<double> build_u(const EigenAssembler& assembler, double lambda0,
                                   const std::vector<double>& psi) {
    const MassGrid& grid = assembler.grid();
    const ModelSpec& spec = assembler.spec();
    const std::size_t n = grid.size();
    if (psi.size() != n) throw domain_error("build_u: psi size mismatch");

    // Psi interpolant anchored to 0 at mass 0 and flat at M.
    std::vector<double> xs, ys;
    xs.push_back(0.0);
    ys.push_back(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        xs.push_back(grid.node(i));
        ys.push_back(std::max(psi[i], 0.0));
    }
    xs.push_back(spec.max_mass());
    ys.push_back(std::max(psi.back(), 0.0));
    const PchipInterpolant psi_interp(std::move(xs), std::move(ys));

    const auto& sb = assembler.sb_;
    const auto& pb = assembler.pb_;
    const auto& hb = assembler.hb_;
    const auto& sm = assembler.sm_;
    const auto& pm = assembler.pm_;
    const auto& hm = assembler.hm_;
    const auto& node_at = assembler.node_at_;

    const std::size_t k_last = node_at.back();
    auto up_b = [&](std::size_t k) {
        return psi_interp.eval_clamped(pb[k]) * spec.growth_rate(pb[k]) *
               std::exp(lambda0 * sb[k] + hb[k]);
    };
    auto up_m = [&](std::size_t k) {
        return psi_interp.eval_clamped(pm[k]) * spec.growth_rate(pm[k]) *
               std::exp(lambda0 * sm[k] + hm[k]);
    };

    std::vector<double> cum(k_last + 1, 0.0);
    for (std::size_t k = 0; k < k_last; ++k) {
        const double w6 = (sb[k + 1] - sb[k]) / 6.0;
        cum[k + 1] = cum[k] + w6 * (up_b(k) + 4.0 * up_m(k) + up_b(k + 1));
    }

    std::vector<double> u(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = node_at[j];
        const double damp = std::exp(-(lambda0 * sb[k] + hb[k]));
        u[j] = damp * cum[k] / spec.growth_rate(grid.node(j));
    }
    const double total = grid.integrate(u);
    if (!(total > 0.0)) throw numerical_error("build_u: eigenfunction integrated to zero");
    for (auto& x : u) x /= total;
    return u;
}

/// Adjoint eigenfunction by power iteration on the weighted transpose,
/// following the same eps schedule as the continuation; normalized so that
/// int u phi = 1.
inline std::vector<double> build_phi(const EigenAssembler& assembler,
                                     const std::vector<std::pair<double, double>>& eps_trace,
                                     const std::vector<double>& u) {
    const EigenOptions& opts = assembler.options();
    const MassGrid& grid = assembler.grid();
    const std::size_t n = grid.size();
    if (eps_trace.empty()) throw domain_error("build_phi: empty continuation trace");

    std::vector<double> phi(n, 1.0);
    std::vector<double> prev;
    for (const auto& [eps, lambda_eps] : eps_trace) {
        const OperatorMatrix K = assembler.assemble(lambda_eps, eps);
        double mu = 0.0;
        for (std::size_t it = 0; it < opts.power_max_iter; ++it) {
            std::vector<double> w = K.apply_adjoint(grid.weights(), phi);
            const double mu_new = *std::max_element(w.begin(), w.end());
            if (!(mu_new > 0.0))
                throw numerical_error("build_phi: adjoint iteration degenerated");
            double dv = 0.0;
            for (auto& x : w) x /= mu_new;
            for (std::size_t i = 0; i < n; ++i)
                dv = std::max(dv, std::abs(w[i] - phi[i]));
            phi.swap(w);
            const double dmu = std::abs(mu_new - mu);
            mu = mu_new;
            if (dmu < opts.power_tol && dv < opts.power_tol) break;
        }
        if (!prev.empty()) {
            double gap = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                gap = std::max(gap, std::abs(phi[i] - prev[i]));
            if (gap < opts.continuation_tol) {
                prev = phi;
                break;
            }
        }
        prev = phi;
    }

    std::vector<double> uphi(n);
    for (std::size_t i = 0; i < n; ++i) uphi[i] = u[i] * phi[i];
    const double scale = grid.integrate(uphi);
    if (!(scale > 0.0)) throw numerical_error("build_phi: <u, phi> is not positive");
    for (auto& x : phi) x /= scale;
    return phi;
}

/// Full eigen solution on a grid, with the death shift applied to the
/// reported eigenvalue.
struct EigenSolution {
    double lambda = 0.0;   // Lambda = Lambda0 - D
    double lambda0 = 0.0;  // death-free eigenvalue
    std::vector<double> psi;
    std::vector<double> u;
    std::vector<double> phi;
    std::vector<std::pair<double, double>> mu_trace;
    std::vector<std::pair<double, double>> epsilon_trace;
    bool converged = false;
    double mu_residual = 0.0;
    double u_integral = 0.0;
    double biorthogonality = 0.0;  // int u phi after normalization
};

inline EigenSolution solve_eigenproblem(const ModelSpec& spec, const MassGrid& grid,
                                        EigenOptions opts = {}) {
    EigenAssembler assembler(spec, grid, opts);
    const ContinuationResult cont = continuation(assembler);
    EigenSolution sol;
    sol.lambda0 = cont.lambda0;
    sol.lambda = cont.lambda0 - spec.death_rate();
    sol.psi = cont.psi;
    sol.mu_trace = cont.mu_trace_last;
    sol.epsilon_trace = cont.epsilon_trace;
    sol.converged = cont.accepted;
    sol.mu_residual = cont.mu_residual;
    sol.u = build_u(assembler, cont.lambda0, cont.psi);
    sol.phi = build_phi(assembler, cont.epsilon_trace, sol.u);
    sol.u_integral = grid.integrate(sol.u);
    std::vector<double> uphi(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) uphi[i] = sol.u[i] * sol.phi[i];
    sol.biorthogonality = grid.integrate(uphi);
    return sol;
}

/// |Lambda0 - int g u / int x u|: the eigenvalue must match the Rayleigh
/// ratio of the normalized density.
inline double rayleigh_gap(const ModelSpec& spec, const MassGrid& grid, double lambda0,
                           const std::vector<double>& u) {
    std::vector<double> gu(grid.size()), xu(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        gu[i] = spec.growth_rate(grid.node(i)) * u[i];
        xu[i] = grid.node(i) * u[i];
    }
    return std::abs(lambda0 - grid.integrate(gu) / grid.integrate(xu));
}

/// Sup of the discrete stationary-equation residual on interior nodes,
/// relative to sup u:
///   d/dx(g u) + (Lambda0 + b) u - 2 int (b(z)/z) q(x/z) u(z) dz.
inline double stationary_residual(const ModelSpec& spec, const MassGrid& grid,
                                  double lambda0, const std::vector<double>& u) {
    const std::size_t n = grid.size();
    std::vector<double> gu(n);
    double usup = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        gu[i] = spec.growth_rate(grid.node(i)) * u[i];
        usup = std::max(usup, std::abs(u[i]));
    }
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double x = grid.node(i);
        const double ddx =
            (gu[i + 1] - gu[i - 1]) / (grid.node(i + 1) - grid.node(i - 1));
        double gain = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double z = grid.node(j);
            gain += grid.weight(j) * (spec.division_rate(z) / z) *
                    spec.kernel_density_ext(x / z) * u[j];
        }
        const double r = ddx + (lambda0 + spec.division_rate(x)) * u[i] - 2.0 * gain;
        worst = std::max(worst, std::abs(r));
    }
    return worst / usup;
}

struct ShiftCheckEntry {
    double death_rate = 0.0;
    double lambda_direct = 0.0;    // root of the death-shifted problem
    double lambda_expected = 0.0;  // Lambda(0) - D
    double gap = 0.0;
};

struct ShiftCheckReport {
    std::vector<ShiftCheckEntry> entries;
    double restart_mu_gap = 0.0;  // power iteration from two random starts
    bool passed = false;
};

/// Verifies the exact death shift Lambda(D) = Lambda(0) - D by solving the
/// fixed point with the death rate folded into the exponent, and confirms
/// the dominant eigenvalue is restart-independent.
inline ShiftCheckReport eigenvalue_shift_check(const ModelSpec& spec,
                                               const MassGrid& grid,
                                               const std::vector<double>& death_rates,
                                               double eps = 1e-3,
                                               EigenOptions opts = {}) {
    EigenAssembler assembler(spec, grid, opts);
    const LambdaSolveResult base = solve_lambda(assembler, eps);
    ShiftCheckReport rep;
    rep.passed = true;
    for (double d : death_rates) {
        ShiftCheckEntry e;
        e.death_rate = d;
        e.lambda_expected = base.lambda_eps - d;
        const LambdaSolveResult shifted =
            solve_lambda(assembler, eps, &base.psi, /*lambda_shift=*/d);
        e.lambda_direct = shifted.lambda_eps;
        e.gap = std::abs(e.lambda_direct - e.lambda_expected);
        rep.passed = rep.passed && e.gap <= 1e-8;
        rep.entries.push_back(e);
    }

    const OperatorMatrix K = assembler.assemble(base.lambda_eps, eps);
    CounterRng rng(StreamKey::root(20240917));
    std::vector<double> v1(grid.size()), v2(grid.size());
    for (auto& x : v1) x = 0.1 + rng.uniform();
    for (auto& x : v2) x = 0.1 + rng.uniform();
    const PowerResult p1 = dominant_eigen(K, opts.power_tol, opts.power_max_iter, &v1);
    const PowerResult p2 = dominant_eigen(K, opts.power_tol, opts.power_max_iter, &v2);
    rep.restart_mu_gap = std::abs(p1.mu - p2.mu);
    rep.passed = rep.passed && rep.restart_mu_gap <= 1e-10;
    return rep;
}

} // namespace growfrag
