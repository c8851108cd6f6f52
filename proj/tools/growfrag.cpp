// growfrag: invasion fitness in growth-fragmentation-death models by four
// routes: hypothesis audit, exact branching simulation, extinction-probability
// fixed point, eigenvalue solve, transient PDE, and the cross-route battery.

#include <clocale>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "growfrag/config.hpp"
#include "growfrag/eigen.hpp"
#include "growfrag/errors.hpp"
#include "growfrag/extinction.hpp"
#include "growfrag/io.hpp"
#include "growfrag/model.hpp"
#include "growfrag/pde.hpp"
#include "growfrag/simulate.hpp"
#include "growfrag/validate.hpp"

namespace {

using namespace growfrag;
namespace fs = std::filesystem;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::size_t workers = 0;  // 0: take run.workers from the config
    std::optional<std::uint64_t> seed_override;

    // Per-subcommand overrides of the corresponding config keys.
    std::optional<std::size_t> grid_n;
    std::optional<double> x0, horizon, tol, t_end, dt, cadence;
    std::optional<std::size_t> replicas, max_iter, max_pop, max_events;
    std::optional<std::vector<double>> times, eps_schedule;
    std::optional<std::string> weight, weight_file;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "model/config file")->required();
    cmd->add_option("--out-dir", args.out_dir, "output directory")
        ->capture_default_str();
    cmd->add_option("--workers", args.workers,
                    "worker threads (affects wall time only, never results)");
    cmd->add_option("--seed", args.seed_override, "override the config seed");
}

ConfigMap load_config(const CommonArgs& args) {
    if (!fs::exists(args.config_path))
        throw config_error("config file '" + args.config_path + "' does not exist");
    return ConfigMap::parse_file(args.config_path);
}

std::size_t resolve_workers(const CommonArgs& args, const ConfigMap& cfg) {
    if (args.workers > 0) return args.workers;
    return static_cast<std::size_t>(cfg.get_u64("run.workers", 1));
}

std::uint64_t resolve_seed_arg(const CommonArgs& args, const ConfigMap& cfg,
                               const std::string& key, std::uint64_t fallback) {
    if (args.seed_override) return *args.seed_override;
    return resolve_seed(cfg, key, fallback);
}

void emit(const fs::path& path, const std::string& content, bool quiet = false) {
    atomic_write(path, content);
    if (!quiet) std::cerr << "wrote " << path.string() << "\n";
}

int run_audit(const CommonArgs& args) {
    const ConfigMap cfg = load_config(args);
    const ModelSpec spec = model_from_config(cfg);
    const MassGrid grid = grid_from_config(cfg, spec.max_mass());
    const HypothesisReport rep = audit_hypotheses(spec, grid);
    const ordered_json j = to_json(rep);
    std::cout << j.dump(2) << "\n";
    return rep.all_passed() ? 0 : 1;
}

MassGrid grid_with_override(const CommonArgs& args, const ConfigMap& cfg,
                            double max_mass) {
    if (args.grid_n) {
        const GridScheme scheme =
            grid_scheme_from_string(cfg.get_string("grid.scheme", "uniform-trapezoid"));
        return MassGrid::make(scheme, max_mass, *args.grid_n);
    }
    return grid_from_config(cfg, max_mass);
}

int run_extinction(const CommonArgs& args) {
    const ConfigMap cfg = load_config(args);
    const ModelSpec spec = model_from_config(cfg);
    const MassGrid grid = grid_with_override(args, cfg, spec.max_mass());
    PicardOptions opts;
    opts.tol = args.tol.value_or(cfg.get_double("extinction.tol", 1e-8));
    opts.max_iter = args.max_iter.value_or(cfg.get_u64("extinction.max_iter", 10000));
    opts.workers = resolve_workers(args, cfg);
    PicardSolver solver(spec, grid, opts);
    const ExtinctionProfile prof = solver.solve();
    const Dichotomy verdict = dichotomy(prof, 1e-3);

    CsvBuilder csv({"x", "p"});
    for (std::size_t i = 0; i < grid.size(); ++i)
        csv.row({format_double(grid.node(i)), format_double(prof.values[i])});
    emit(fs::path(args.out_dir) / "extinction.csv", csv.str());

    ordered_json j;
    j["iterations"] = prof.iterations;
    j["residual"] = prof.residual;
    j["converged"] = prof.converged;
    j["dichotomy"] = to_string(verdict);
    j["grid_n"] = grid.size();
    emit(fs::path(args.out_dir) / "extinction.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return prof.converged ? 0 : 1;
}

int run_eigen(const CommonArgs& args) {
    const ConfigMap cfg = load_config(args);
    const ModelSpec spec = model_from_config(cfg);
    const MassGrid grid = grid_with_override(args, cfg, spec.max_mass());
    EigenOptions opts;
    opts.workers = resolve_workers(args, cfg);
    opts.continuation_tol = args.tol.value_or(cfg.get_double("eigen.tol", 1e-5));
    opts.power_tol = cfg.get_double("eigen.power_tol", 1e-12);
    opts.ds = cfg.get_double("eigen.ds", 0.005);
    if (args.eps_schedule)
        opts.epsilon_schedule = *args.eps_schedule;
    else if (cfg.has("eigen.eps_schedule"))
        opts.epsilon_schedule = cfg.get_list("eigen.eps_schedule", {});
    const EigenSolution sol = solve_eigenproblem(spec, grid, opts);

    CsvBuilder csv({"x", "u", "phi", "psi"});
    for (std::size_t i = 0; i < grid.size(); ++i)
        csv.row({format_double(grid.node(i)), format_double(sol.u[i]),
                 format_double(sol.phi[i]), format_double(sol.psi[i])});
    emit(fs::path(args.out_dir) / "eigen.csv", csv.str());

    ordered_json j;
    j["lambda"] = sol.lambda;
    j["lambda0"] = sol.lambda0;
    j["death_rate"] = spec.death_rate();
    j["converged"] = sol.converged;
    j["mu_residual"] = sol.mu_residual;
    j["rayleigh_gap"] = rayleigh_gap(spec, grid, sol.lambda0, sol.u);
    ordered_json etrace = ordered_json::array();
    for (const auto& [e, l] : sol.epsilon_trace)
        etrace.push_back(ordered_json{{"eps", e}, {"lambda_eps", l}});
    j["epsilon_trace"] = etrace;
    ordered_json mtrace = ordered_json::array();
    for (const auto& [l, m] : sol.mu_trace)
        mtrace.push_back(ordered_json{{"lambda", l}, {"mu", m}});
    j["mu_trace"] = mtrace;
    emit(fs::path(args.out_dir) / "eigen.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return sol.converged ? 0 : 1;
}

int run_pde(const CommonArgs& args) {
    const ConfigMap cfg = load_config(args);
    const ModelSpec spec = model_from_config(cfg);
    const std::size_t n = args.grid_n.value_or(
        static_cast<std::size_t>(cfg.get_u64("pde.n", 400)));
    const MassGrid grid = MassGrid::uniform_trapezoid(spec.max_mass(), n);
    TransientSolver solver(spec, grid);
    const double horizon = args.t_end.value_or(cfg.get_double("pde.T", 40.0));
    double dt = args.dt.value_or(cfg.get_double("pde.dt", 0.0));
    if (dt <= 0.0) dt = solver.cfl_limit();  // auto-CFL
    const double cadence = args.cadence.value_or(cfg.get_double("pde.cadence", 0.5));

    PdeState state = solver.default_initial_state();
    std::vector<std::pair<double, double>> log_totals{{0.0, solver.log_total(state)}};
    CsvBuilder series({"t", "total", "lambda_hat_running"});
    series.row({"0", format_double(std::exp(log_totals[0].second)), "nan"});
    double next_sample = cadence;
    while (state.time < horizon - 1e-12) {
        solver.step(state, std::min(dt, horizon - state.time));
        if (state.time + 1e-12 >= next_sample || state.time >= horizon - 1e-12) {
            const double lt = solver.log_total(state);
            log_totals.emplace_back(state.time, lt);
            // Running estimate: log slope over the trailing half-window.
            const double t_half = 0.5 * state.time;
            double lt_half = log_totals.front().second;
            for (const auto& [tt, ll] : log_totals)
                if (tt <= t_half) lt_half = ll;
            const double lam = state.time > 0.0 ? (lt - lt_half) / (state.time - t_half)
                                                : 0.0;
            series.row({format_double(state.time), format_double(std::exp(lt)),
                        format_double(lam)});
            next_sample += cadence;
        }
    }
    emit(fs::path(args.out_dir) / "pde_series.csv", series.str());

    CsvBuilder profile({"x", "r"});
    const double total = grid.integrate(state.density);
    for (std::size_t i = 0; i < grid.size(); ++i)
        profile.row({format_double(grid.node(i)),
                     format_double(state.density[i] / total)});
    emit(fs::path(args.out_dir) / "pde_profile.csv", profile.str());

    const GrowthRateEstimate est =
        pde_growth_rate(solver, solver.default_initial_state(), horizon, dt);
    ordered_json j;
    j["lambda_hat"] = est.lambda_hat;
    j["lambda_previous_window"] = est.lambda_previous;
    j["stabilization_gap"] = est.stabilization_gap;
    j["horizon"] = est.horizon;
    j["steps"] = est.steps;
    emit(fs::path(args.out_dir) / "pde.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

WeightFunction make_weight(const std::string& name, const std::string& file) {
    if (name == "one") return [](double) { return 1.0; };
    if (name == "mass") return [](double x) { return x; };
    if (name == "phi-from-file") {
        if (file.empty())
            throw config_error("weight 'phi-from-file' requires simulate.weight_file");
        std::ifstream in(file);
        if (!in) throw config_error("cannot open weight file '" + file + "'");
        std::vector<double> xs, ys;
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (first) {  // header row from the eigen CSV
                first = false;
                if (!line.empty() && !std::isdigit(static_cast<unsigned char>(line[0])))
                    continue;
            }
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ss(line);
            double x, u, phi;
            if (ss >> x >> u >> phi) {
                xs.push_back(x);
                ys.push_back(phi);
            } else {
                std::istringstream s2(line);
                if (s2 >> x >> phi) {
                    xs.push_back(x);
                    ys.push_back(phi);
                }
            }
        }
        if (xs.size() < 2)
            throw config_error("weight file '" + file + "' has too few rows");
        PchipInterpolant interp(std::move(xs), std::move(ys));
        return [interp](double x) { return interp.eval_clamped(x); };
    }
    throw config_error("unknown weight '" + name + "' (use one, mass, phi-from-file)");
}

int run_simulate(const CommonArgs& args) {
    const ConfigMap cfg = load_config(args);
    const ModelSpec spec = model_from_config(cfg);
    const double x0 = args.x0.value_or(
        cfg.get_double("simulate.x0", 0.5 * spec.max_mass()));
    const double horizon =
        args.horizon.value_or(cfg.get_double("simulate.horizon", 30.0));
    const std::size_t replicas = args.replicas.value_or(
        static_cast<std::size_t>(cfg.get_u64("simulate.replicas", 1000)));
    const std::uint64_t seed = resolve_seed_arg(args, cfg, "simulate.seed", 42);
    SimulationCaps caps;
    caps.max_population = args.max_pop.value_or(cfg.get_u64("simulate.max_pop", 500));
    caps.max_events =
        args.max_events.value_or(cfg.get_u64("simulate.max_events", 2000000));
    const std::vector<double> times =
        args.times.value_or(cfg.get_list("simulate.times", {}));
    const std::string weight_name =
        args.weight.value_or(cfg.get_string("simulate.weight", "one"));
    const WeightFunction weight = make_weight(
        weight_name,
        args.weight_file.value_or(cfg.get_string("simulate.weight_file", "")));
    const std::size_t workers = resolve_workers(args, cfg);

    std::vector<SimulationSummary> reps(replicas);
    parallel_for(replicas, workers, [&](std::size_t r) {
        reps[r] = simulate(spec, x0, horizon, caps, seed, r, times, {weight});
    });

    CsvBuilder csv({"replica", "survived", "proxy_triggered", "truncated",
                    "extinction_time", "events", "final_population"});
    std::size_t survived = 0;
    for (std::size_t r = 0; r < replicas; ++r) {
        const auto& s = reps[r];
        survived += s.survived ? 1 : 0;
        csv.row({std::to_string(r), s.survived ? "1" : "0",
                 s.proxy_triggered ? "1" : "0", s.truncated ? "1" : "0",
                 s.extinction_time ? format_double(*s.extinction_time) : "",
                 std::to_string(s.event_count), std::to_string(s.final_population)});
    }
    emit(fs::path(args.out_dir) / "replicas.csv", csv.str());

    const double p = static_cast<double>(survived) / static_cast<double>(replicas);
    std::size_t proxied = 0;
    for (const auto& s : reps) proxied += s.proxy_triggered ? 1 : 0;
    ordered_json j;
    j["replicas"] = replicas;
    j["seed"] = seed;
    j["x0"] = x0;
    j["horizon"] = horizon;
    j["p_surv"] = p;
    j["ci_halfwidth"] =
        1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(replicas));
    j["proxy_triggered"] = proxied;
    if (!times.empty()) {
        // Replicas stopped early by a cap never simulated later samples;
        // aggregate each time over the replicas that covered it.
        ordered_json wstats = ordered_json::array();
        for (std::size_t k = 0; k < times.size(); ++k) {
            double mean = 0.0;
            std::size_t used = 0;
            for (const auto& s : reps)
                if (s.coverage_time >= times[k]) {
                    mean += s.weighted[0][k];
                    ++used;
                }
            if (used > 0) mean /= static_cast<double>(used);
            double var = 0.0;
            for (const auto& s : reps)
                if (s.coverage_time >= times[k]) {
                    const double d = s.weighted[0][k] - mean;
                    var += d * d;
                }
            var = used > 1 ? var / static_cast<double>(used - 1) : 0.0;
            wstats.push_back(ordered_json{
                {"time", times[k]},
                {"weight", weight_name},
                {"mean", mean},
                {"ci_halfwidth",
                 used > 0 ? 1.96 * std::sqrt(var / static_cast<double>(used)) : 0.0},
                {"replicas_used", used}});
        }
        j["weighted"] = wstats;
    }
    emit(fs::path(args.out_dir) / "simulate.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

int run_crosscheck(const CommonArgs& args, const std::string& out_file) {
    const ConfigMap cfg = load_config(args);
    const ModelSpec spec = model_from_config(cfg);
    CrosscheckOptions opts;
    opts.grid_n = cfg.get_u64("crosscheck.grid_n", 200);
    opts.pde_n = cfg.get_u64("crosscheck.pde_n", 400);
    opts.x0 = cfg.get_double("crosscheck.x0", 0.5 * spec.max_mass());
    opts.horizon = cfg.get_double("crosscheck.horizon", 30.0);
    opts.replicas = cfg.get_u64("crosscheck.replicas", 2000);
    opts.martingale_times = cfg.get_list("crosscheck.martingale_times", {1.0, 2.0, 4.0});
    opts.martingale_replicas = cfg.get_u64("crosscheck.martingale_replicas", 4000);
    opts.growth_times =
        cfg.get_list("crosscheck.growth_times", {0.0, 1.0, 2.0, 4.0, 7.0, 10.0});
    opts.growth_replicas = cfg.get_u64("crosscheck.growth_replicas", 2000);
    opts.seed = resolve_seed_arg(args, cfg, "crosscheck.seed", 20240917);
    opts.lambda_perturbation = cfg.get_double("crosscheck.lambda_perturbation", 0.0);
    opts.workers = resolve_workers(args, cfg);

    const CrossCheckReport rep = run_crosscheck(spec, opts);
    const ordered_json j = to_json(rep);
    if (!out_file.empty())
        emit(out_file, j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return rep.all_passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    // CSV/JSON contract: '.' decimal point regardless of the environment.
    std::setlocale(LC_NUMERIC, "C");

    CLI::App app{"growth-fragmentation-death invasion fitness toolkit"};
    app.require_subcommand(1);

    CommonArgs audit_args, sim_args, ext_args, eig_args, pde_args, cross_args;
    std::string cross_out;

    add_common(app.add_subcommand("audit", "audit the model hypotheses"), audit_args);

    CLI::App* sim = app.add_subcommand(
        "simulate", "exact branching simulation and survival estimate");
    add_common(sim, sim_args);
    sim->add_option("--x0", sim_args.x0, "initial mass");
    sim->add_option("--horizon", sim_args.horizon, "time horizon");
    sim->add_option("--replicas", sim_args.replicas, "number of replicas");
    sim->add_option("--max-pop", sim_args.max_pop, "population cap (survival proxy)");
    sim->add_option("--max-events", sim_args.max_events, "event cap per replica");
    sim->add_option("--times", sim_args.times, "sample times")->delimiter(',');
    sim->add_option("--weight", sim_args.weight,
                    "weight function: one, mass, phi-from-file");
    sim->add_option("--weight-file", sim_args.weight_file,
                    "CSV with the weight profile (x in column 1, phi in column 3 or 2)");

    CLI::App* ext = app.add_subcommand("extinction",
                                       "extinction-probability fixed point (Picard)");
    add_common(ext, ext_args);
    ext->add_option("--grid-n", ext_args.grid_n, "mass grid size");
    ext->add_option("--tol", ext_args.tol, "sup-norm convergence tolerance");
    ext->add_option("--max-iter", ext_args.max_iter, "iteration cap");

    CLI::App* eig =
        app.add_subcommand("eigen", "invasion eigenvalue and eigenfunctions");
    add_common(eig, eig_args);
    eig->add_option("--grid-n", eig_args.grid_n, "mass grid size");
    eig->add_option("--eps-schedule", eig_args.eps_schedule,
                    "decreasing regularization schedule")
        ->delimiter(',');
    eig->add_option("--tol", eig_args.tol, "continuation acceptance tolerance");

    CLI::App* pde = app.add_subcommand("pde", "transient density solver");
    add_common(pde, pde_args);
    pde->add_option("--n", pde_args.grid_n, "mass grid size");
    pde->add_option("--T", pde_args.t_end, "simulated horizon");
    pde->add_option("--dt", pde_args.dt, "time step (0 = auto-CFL)");
    pde->add_option("--cadence", pde_args.cadence, "output cadence");

    CLI::App* cross =
        app.add_subcommand("crosscheck", "cross-route validation battery");
    add_common(cross, cross_args);
    cross->add_option("--out", cross_out, "write the JSON report here as well");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
            return app.exit(e);
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand("audit")) return run_audit(audit_args);
        if (app.got_subcommand("simulate")) return run_simulate(sim_args);
        if (app.got_subcommand("extinction")) return run_extinction(ext_args);
        if (app.got_subcommand("eigen")) return run_eigen(eig_args);
        if (app.got_subcommand("pde")) return run_pde(pde_args);
        if (app.got_subcommand("crosscheck")) return run_crosscheck(cross_args, cross_out);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
