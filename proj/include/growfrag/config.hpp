#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "growfrag/eigen.hpp"
#include "growfrag/errors.hpp"
#include "growfrag/extinction.hpp"
#include "growfrag/model.hpp"
#include "growfrag/simulate.hpp"
#include "growfrag/validate.hpp"

namespace growfrag {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys{
        "growth.kind", "growth.a", "growth.theta", "growth.file",
        "kernel.kind", "kernel.beta", "kernel.file",
        "division.kind", "division.bbar", "division.mdiv", "division.file",
        "death.D", "mass.M",
        "grid.n", "grid.scheme",
        "flow.tol",
        "run.workers",
        "simulate.x0", "simulate.horizon", "simulate.replicas", "simulate.seed",
        "simulate.max_pop", "simulate.max_events", "simulate.times",
        "simulate.weight", "simulate.weight_file", "simulate.record_events",
        "extinction.tol", "extinction.max_iter",
        "eigen.eps_schedule", "eigen.tol", "eigen.power_tol", "eigen.ds",
        "pde.n", "pde.T", "pde.dt", "pde.cadence",
        "crosscheck.grid_n", "crosscheck.pde_n", "crosscheck.x0",
        "crosscheck.horizon", "crosscheck.replicas", "crosscheck.martingale_times",
        "crosscheck.martingale_replicas", "crosscheck.growth_times",
        "crosscheck.growth_replicas", "crosscheck.seed",
        "crosscheck.lambda_perturbation",
        "output.dir", "output.prefix",
    };
    return keys;
}

} // namespace detail

/// Flat dotted-key view of a sectioned key/value config file:
///
///   [growth]
///   kind = gompertz
///   a = 1.0
///
/// becomes {"growth.kind": "gompertz", "growth.a": "1.0"}. Unknown keys are
/// rejected so typos fail loudly.
class ConfigMap {
public:
    static ConfigMap parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw config_error("cannot open config file '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse_string(buf.str(), path);
    }

    static ConfigMap parse_string(const std::string& text,
                                  const std::string& origin = "<string>") {
        ConfigMap cfg;
        std::istringstream in(text);
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw config_error(origin + ":" + std::to_string(lineno) +
                                       ": malformed section header");
                section = detail::trim(line.substr(1, line.size() - 2));
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw config_error(origin + ":" + std::to_string(lineno) +
                                   ": expected key = value");
            std::string key = detail::trim(line.substr(0, eq));
            const std::string value = detail::trim(line.substr(eq + 1));
            if (!section.empty()) key = section + "." + key;
            if (!detail::known_config_keys().count(key))
                throw config_error(origin + ":" + std::to_string(lineno) +
                                   ": unknown key '" + key + "'");
            if (cfg.values_.count(key))
                throw config_error(origin + ":" + std::to_string(lineno) +
                                   ": duplicate key '" + key + "'");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw config_error("key '" + key + "': cannot parse '" + it->second +
                               "' as a number");
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw config_error("key '" + key + "': cannot parse '" + it->second +
                               "' as an integer");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw config_error("key '" + key + "': expected true/false");
    }

    std::vector<double> get_list(const std::string& key,
                                 std::vector<double> fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<double> out;
        std::istringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = detail::trim(tok);
            if (tok.empty()) continue;
            try {
                out.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw config_error("key '" + key + "': bad list entry '" + tok + "'");
            }
        }
        if (out.empty()) throw config_error("key '" + key + "': empty list");
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

namespace detail {

inline PchipInterpolant load_curve_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open table file '" + path + "'");
    std::vector<double> xs, ys;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double x, y;
        if (!(ss >> x >> y))
            throw config_error("table file '" + path + "': expected 'x,value' rows");
        xs.push_back(x);
        ys.push_back(y);
    }
    if (xs.size() < 2) throw config_error("table file '" + path + "': need >= 2 rows");
    return PchipInterpolant(std::move(xs), std::move(ys));
}

} // namespace detail

/// Build the model instance from its config section.
inline ModelSpec model_from_config(const ConfigMap& cfg) {
    const double M = cfg.get_double("mass.M", 1.0);
    const double D = cfg.get_double("death.D", 0.0);
    const double flow_tol = cfg.get_double("flow.tol", 1e-13);

    GrowthLaw growth = GompertzGrowth{1.0};
    const std::string gkind = cfg.get_string("growth.kind", "gompertz");
    if (gkind == "gompertz") {
        growth = GompertzGrowth{cfg.get_double("growth.a", 1.0)};
    } else if (gkind == "power-logistic") {
        growth = PowerLogisticGrowth{cfg.get_double("growth.a", 1.0),
                                     cfg.get_double("growth.theta", 1.0)};
    } else if (gkind == "tabulated") {
        if (!cfg.has("growth.file"))
            throw config_error("growth.kind = tabulated requires growth.file");
        growth = TabulatedCurve{detail::load_curve_file(cfg.get_string("growth.file", ""))};
    } else {
        throw config_error("unknown growth.kind '" + gkind + "'");
    }

    DivisionRate division = RampDivision{1.0, 0.0};
    const std::string dkind = cfg.get_string("division.kind", "ramp");
    if (dkind == "ramp") {
        division = RampDivision{cfg.get_double("division.bbar", 1.0),
                                cfg.get_double("division.mdiv", 0.0)};
    } else if (dkind == "tabulated") {
        if (!cfg.has("division.file"))
            throw config_error("division.kind = tabulated requires division.file");
        division =
            TabulatedCurve{detail::load_curve_file(cfg.get_string("division.file", ""))};
    } else {
        throw config_error("unknown division.kind '" + dkind + "'");
    }

    FragmentationKernel kernel = SymmetricBetaKernel{2.0};
    const std::string kkind = cfg.get_string("kernel.kind", "beta");
    if (kkind == "beta") {
        kernel = SymmetricBetaKernel{cfg.get_double("kernel.beta", 2.0)};
    } else if (kkind == "tabulated") {
        if (!cfg.has("kernel.file"))
            throw config_error("kernel.kind = tabulated requires kernel.file");
        kernel =
            TabulatedCurve{detail::load_curve_file(cfg.get_string("kernel.file", ""))};
    } else {
        throw config_error("unknown kernel.kind '" + kkind + "'");
    }

    try {
        return ModelSpec(std::move(growth), std::move(division), std::move(kernel), D, M,
                         flow_tol);
    } catch (const domain_error& e) {
        throw config_error(std::string("invalid model: ") + e.what());
    }
}

inline MassGrid grid_from_config(const ConfigMap& cfg, double max_mass) {
    const std::size_t n = static_cast<std::size_t>(cfg.get_u64("grid.n", 200));
    const GridScheme scheme =
        grid_scheme_from_string(cfg.get_string("grid.scheme", "uniform-trapezoid"));
    return MassGrid::make(scheme, max_mass, n);
}

/// Seed resolution order: GROWFRAG_SEED env var, then the config, then the
/// built-in default.
inline std::uint64_t resolve_seed(const ConfigMap& cfg, const std::string& key,
                                  std::uint64_t fallback) {
    if (const char* env = std::getenv("GROWFRAG_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw config_error("GROWFRAG_SEED is not an integer");
        }
    }
    return cfg.get_u64(key, fallback);
}

} // namespace growfrag
