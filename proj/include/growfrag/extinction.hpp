#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "growfrag/errors.hpp"
#include "growfrag/interp.hpp"
#include "growfrag/model.hpp"
#include "growfrag/parallel.hpp"
#include "growfrag/quadrature.hpp"

namespace growfrag {

/// Extinction probability p on a mass grid with Picard diagnostics.
struct ExtinctionProfile {
    std::vector<double> values;                     // p(x_i) in [0, 1]
    std::size_t iterations = 0;
    double residual = 0.0;                          // sup-norm of last update
    bool converged = false;
    std::vector<std::vector<double>> generation_curves;  // stored iterate snapshots
};

enum class Dichotomy { SurvivalPossible, ExtinctionCertain, Inconclusive };

inline std::string to_string(Dichotomy d) {
    switch (d) {
        case Dichotomy::SurvivalPossible: return "survival-possible";
        case Dichotomy::ExtinctionCertain: return "extinction-certain";
        default: return "inconclusive";
    }
}

/// Classify a converged profile. A mixed classification signals numerical
/// trouble: the model admits no mixture, survival is possible from every
/// interior mass or from none.
inline Dichotomy dichotomy(const ExtinctionProfile& profile, double margin) {
    std::size_t below = 0;
    for (double p : profile.values)
        if (p < 1.0 - margin) ++below;
    if (below == profile.values.size()) return Dichotomy::SurvivalPossible;
    if (below == 0) return Dichotomy::ExtinctionCertain;
    return Dichotomy::Inconclusive;
}

struct PicardOptions {
    double tol = 1e-8;
    std::size_t max_iter = 10000;
    double eps_tail = 1e-10;     // truncation level of the time integrals
    double dt_dense = 0.01;      // panel width while hazard is active
    double t_dense_end = 30.0;   // switch to geometric widths after this time
    std::size_t alpha_nodes = 32;
    std::size_t fine_mesh_min = 512;
    std::size_t snapshot_limit = 64;
    std::size_t workers = 1;
};

/// Picard iteration for the extinction-probability integral equation
///
///   p(x) = int_0^inf D e^(-D t) e^(-H_x(t)) dt
///        + int_0^inf b(A_t(x)) e^(-H_x(t) - D t)
///            int_0^1 q(a) p(a A_t(x)) p((1-a) A_t(x)) da dt,
///
/// H_x(t) the cumulative division hazard along the flow from x. Iterating
/// from p == 0 produces a pointwise non-decreasing sequence converging to
/// the minimal non-negative solution.
class PicardSolver {
public:
    PicardSolver(const ModelSpec& spec, const MassGrid& grid, PicardOptions opts = {})
        : spec_(spec), grid_(grid), opts_(opts) {
        build_meshes();
        alpha_rule_ = gauss_legendre(opts_.alpha_nodes, 0.0, 1.0);
        kernel_at_nodes_.resize(alpha_rule_.nodes.size());
        for (std::size_t g = 0; g < alpha_rule_.nodes.size(); ++g)
            kernel_at_nodes_[g] = spec_.kernel_density(alpha_rule_.nodes[g]);
        // Mass 0 is an absorbing state that never divides, so its lineage is
        // a pure death clock and the interpolation anchors to 1 there. The
        // anchor only influences masses below the first node, which sit far
        // under the division threshold, so maps of constant profiles stay
        // exact.
        anchor_ = 1.0;
    }

    const std::vector<double>& death_term() const { return death_term_; }

    /// One application of the Picard map to grid values in [0, 1].
    std::vector<double> apply(const std::vector<double>& p) const {
        if (p.size() != grid_.size())
            throw domain_error("PicardSolver::apply: profile size mismatch");
        for (double v : p)
            if (!(v >= 0.0 && v <= 1.0))
                throw domain_error("PicardSolver::apply: profile values outside [0, 1]");

        const UniformLinearTable alpha_integral = build_alpha_table(p);
        std::vector<double> out(grid_.size());
        parallel_for(grid_.size(), opts_.workers, [&](std::size_t i) {
            const NodeMesh& mesh = meshes_[i];
            double acc = 0.0;
            for (std::size_t pnl = 0; pnl < mesh.width.size(); ++pnl) {
                const std::size_t s = 2 * pnl;
                acc += mesh.width[pnl] / 6.0 *
                       (mesh.div_weight[s] * alpha_integral(mesh.mass[s]) +
                        4.0 * mesh.div_weight[s + 1] * alpha_integral(mesh.mass[s + 1]) +
                        mesh.div_weight[s + 2] * alpha_integral(mesh.mass[s + 2]));
            }
            out[i] = std::clamp(death_term_[i] + acc, 0.0, 1.0);
        });
        return out;
    }

    /// Iterate from p0 (all-zero by default; all-one for the minimality
    /// cross-check) until the sup-norm update drops below tol.
    ExtinctionProfile solve(bool start_from_one = false) const {
        ExtinctionProfile prof;
        prof.values.assign(grid_.size(), start_from_one ? 1.0 : 0.0);
        prof.generation_curves.push_back(prof.values);
        for (std::size_t it = 0; it < opts_.max_iter; ++it) {
            std::vector<double> next = apply(prof.values);
            double sup = 0.0;
            for (std::size_t i = 0; i < next.size(); ++i) {
                sup = std::max(sup, std::abs(next[i] - prof.values[i]));
                if (!start_from_one && next[i] < prof.values[i] - 1e-9) {
                    std::ostringstream os;
                    os << "Picard iterate decreased at node " << grid_.node(i)
                       << " (by " << prof.values[i] - next[i] << ")";
                    throw numerical_error(os.str());
                }
            }
            prof.values = std::move(next);
            prof.iterations = it + 1;
            prof.residual = sup;
            if (prof.generation_curves.size() < opts_.snapshot_limit)
                prof.generation_curves.push_back(prof.values);
            if (sup < opts_.tol) {
                prof.converged = true;
                break;
            }
        }
        return prof;
    }

    /// Probability that one individual of mass x dies before dividing
    /// (the pure death term of the integral equation).
    static double death_before_division(const ModelSpec& spec, double x,
                                        PicardOptions opts = {}) {
        MassGrid tiny = MassGrid::uniform_trapezoid(spec.max_mass(), 2);
        // Rebuild around the requested mass: a single-node private grid.
        PicardSolver solver(spec, tiny, opts, x);
        return solver.death_term_[0];
    }

private:
    // Private grid-of-one constructor used by death_before_division.
    PicardSolver(const ModelSpec& spec, const MassGrid& grid, PicardOptions opts,
                 double single_mass)
        : spec_(spec), grid_(grid), opts_(opts) {
        single_mass_ = single_mass;
        build_meshes();
    }

    // Per-node time-quadrature mesh: Simpson panels of (mass, weight) samples
    // along the flow from the node, truncated once D t + H exceeds
    // ln(1/eps_tail).
    struct NodeMesh {
        std::vector<double> width;       // panel widths
        std::vector<double> mass;        // 2P+1 samples of A_t(x)
        std::vector<double> div_weight;  // 2P+1 samples of b(A_t) e^(-Dt-H)
    };

    void build_meshes() {
        const double D = spec_.death_rate();
        const double stop_exponent = std::log(1.0 / opts_.eps_tail);
        const double t_max = D > 0.0 ? stop_exponent / D : 1e3;
        const double width_cap = std::min(2.0, 0.1 / std::max(D, 0.05));

        std::vector<double> sources;
        if (single_mass_ >= 0.0)
            sources.push_back(single_mass_);
        else
            sources = grid_.nodes();

        meshes_.resize(sources.size());
        death_term_.assign(sources.size(), 0.0);
        parallel_for(sources.size(), opts_.workers, [&](std::size_t i) {
            build_node_mesh(sources[i], D, stop_exponent, t_max, width_cap, meshes_[i],
                            death_term_[i]);
        });

        // Mesh self-check: the death term must be stable under refinement.
        if (!sources.empty()) {
            const std::size_t probe = sources.size() / 2;
            NodeMesh fine;
            double death_fine = 0.0;
            const double save = opts_.dt_dense;
            opts_.dt_dense = 0.5 * save;
            build_node_mesh(sources[probe], D, stop_exponent, t_max, width_cap, fine,
                            death_fine);
            opts_.dt_dense = save;
            if (std::abs(death_fine - death_term_[probe]) > 1e-6) {
                std::ostringstream os;
                os << "picard quadrature did not converge at node " << sources[probe]
                   << " (death term " << death_term_[probe] << " vs refined "
                   << death_fine << ")";
                throw numerical_error(os.str());
            }
        }
    }

    void build_node_mesh(double x, double D, double stop_exponent, double t_max,
                         double width_cap, NodeMesh& mesh, double& death) const {
        double state[2] = {x, 0.0};
        double t = 0.0;
        double w = opts_.dt_dense;
        double death_acc = 0.0;

        // The integrand has a derivative kink where the flow crosses the
        // division threshold; land a panel boundary exactly there.
        double t_kink = std::numeric_limits<double>::infinity();
        const double m_div = spec_.division_threshold();
        if (x < m_div && m_div < spec_.max_mass()) {
            if (const auto hit = spec_.hitting_time(x, m_div)) t_kink = *hit;
        }

        auto weight_at = [&](double tt, const double st[2]) {
            return spec_.division_rate(st[0]) * std::exp(-D * tt - st[1]);
        };
        auto death_at = [&](double tt, const double st[2]) {
            return D * std::exp(-D * tt - st[1]);
        };

        mesh.mass.push_back(state[0]);
        mesh.div_weight.push_back(weight_at(0.0, state));
        double death_left = death_at(0.0, state);

        while (t < t_max && D * t + state[1] < stop_exponent) {
            if (t >= opts_.t_dense_end) w = std::min(w * 1.05, width_cap);
            double tr = std::min(t + w, t_max);
            if (t < t_kink - 1e-15 && tr > t_kink) tr = t_kink;
            const double tm = 0.5 * (t + tr);
            spec_.advance(state, t, tm);
            const double mass_mid = state[0];
            const double wm = weight_at(tm, state);
            const double dm = death_at(tm, state);
            spec_.advance(state, tm, tr);
            const double wr = weight_at(tr, state);
            const double dr = death_at(tr, state);

            mesh.width.push_back(tr - t);
            mesh.mass.push_back(mass_mid);
            mesh.mass.push_back(state[0]);
            mesh.div_weight.push_back(wm);
            mesh.div_weight.push_back(wr);
            death_acc += (tr - t) / 6.0 * (death_left + 4.0 * dm + dr);
            death_left = dr;
            t = tr;
        }
        death = death_acc;
    }

    /// Tabulate I(z) = int q(a) p(a z) p((1-a) z) da on a fine mass mesh;
    /// the Picard integrand only needs I along each flow, so one table per
    /// sweep serves every node.
    UniformLinearTable build_alpha_table(const std::vector<double>& p) const {
        // Interpolant of p anchored at mass 0 and extended flat to M.
        std::vector<double> xs, ys;
        xs.reserve(grid_.size() + 2);
        ys.reserve(grid_.size() + 2);
        xs.push_back(0.0);
        ys.push_back(anchor_);
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            xs.push_back(grid_.node(i));
            ys.push_back(p[i]);
        }
        if (xs.back() < spec_.max_mass()) {
            xs.push_back(spec_.max_mass());
            ys.push_back(p.back());
        }
        const PchipInterpolant interp(std::move(xs), std::move(ys));

        const std::size_t nf = std::max(opts_.fine_mesh_min, 4 * grid_.size());
        const double dz = spec_.max_mass() / static_cast<double>(nf);
        std::vector<double> table(nf + 1);
        parallel_for(nf + 1, opts_.workers, [&](std::size_t m) {
            const double z = dz * static_cast<double>(m);
            double acc = 0.0;
            for (std::size_t g = 0; g < alpha_rule_.nodes.size(); ++g) {
                const double a = alpha_rule_.nodes[g];
                acc += alpha_rule_.weights[g] * kernel_at_nodes_[g] *
                       interp.eval_clamped(a * z) * interp.eval_clamped((1.0 - a) * z);
            }
            table[m] = acc;
        });
        return UniformLinearTable(0.0, dz, std::move(table));
    }

    const ModelSpec& spec_;
    const MassGrid& grid_;
    PicardOptions opts_;
    QuadratureRule alpha_rule_;
    std::vector<double> kernel_at_nodes_;
    std::vector<NodeMesh> meshes_;
    std::vector<double> death_term_;
    double anchor_ = 1.0;
    double single_mass_ = -1.0;
};

/// One Picard update of an existing profile (spec-level convenience wrapper).
inline ExtinctionProfile picard_step(const ModelSpec& spec, const MassGrid& grid,
                                     const ExtinctionProfile& p,
                                     PicardOptions opts = {}) {
    PicardSolver solver(spec, grid, opts);
    ExtinctionProfile out = p;
    out.values = solver.apply(p.values);
    out.iterations = p.iterations + 1;
    double sup = 0.0;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        sup = std::max(sup, std::abs(out.values[i] - p.values[i]));
    out.residual = sup;
    return out;
}

/// Solve for the minimal extinction probability from the zero profile.
inline ExtinctionProfile solve_extinction(const ModelSpec& spec, const MassGrid& grid,
                                          double tol = 1e-8,
                                          std::size_t max_iter = 10000,
                                          PicardOptions opts = {}) {
    if (tol <= 0.0) throw domain_error("solve_extinction: tol must be > 0");
    opts.tol = tol;
    opts.max_iter = max_iter;
    PicardSolver solver(spec, grid, opts);
    return solver.solve();
}

} // namespace growfrag
