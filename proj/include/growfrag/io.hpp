#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "growfrag/eigen.hpp"
#include "growfrag/errors.hpp"
#include "growfrag/extinction.hpp"
#include "growfrag/model.hpp"
#include "growfrag/simulate.hpp"
#include "growfrag/validate.hpp"

namespace growfrag {

using ordered_json = nlohmann::ordered_json;

/// Shortest round-trip decimal form, '.' decimal point, locale-independent.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Write-then-rename so readers never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw numerical_error("cannot open '" + tmp.string() + "' for writing");
        out << content;
        if (!out) throw numerical_error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

/// Minimal CSV builder: header row, '.' decimals, '\n' line endings.
class CsvBuilder {
public:
    explicit CsvBuilder(const std::vector<std::string>& header) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) body_ += ',';
            body_ += header[i];
        }
        body_ += '\n';
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) body_ += ',';
            body_ += cells[i];
        }
        body_ += '\n';
    }

    const std::string& str() const { return body_; }

private:
    std::string body_;
};

inline ordered_json to_json(const HypothesisCheck& c) {
    return ordered_json{{"passed", c.passed},
                        {"worst_value", c.worst_value},
                        {"worst_node", c.worst_node},
                        {"note", c.note}};
}

inline ordered_json to_json(const HypothesisReport& r) {
    ordered_json j;
    j["kernel_symmetry"] = to_json(r.kernel_symmetry);
    j["kernel_normalization"] = to_json(r.kernel_normalization);
    j["kernel_mean"] = to_json(r.kernel_mean);
    j["kernel_endpoints"] = to_json(r.kernel_endpoints);
    j["growth_endpoints"] = to_json(r.growth_endpoints);
    j["growth_positive_interior"] = to_json(r.growth_positive_interior);
    j["division_shape"] = to_json(r.division_shape);
    j["division_over_mass_bounded"] = to_json(r.division_over_mass_bounded);
    j["integrability"] = to_json(r.integrability);
    j["c_bq"] = r.c_bq;
    j["c_b_over_x"] = r.c_b_over_x;
    j["integrability_value"] = r.integrability_value;
    j["lower_growth_bound_hint"] = r.lower_growth_bound_hint;
    j["notes"] = r.notes;
    j["all_passed"] = r.all_passed();
    return j;
}

inline ordered_json to_json(const SurvivalEstimate& e) {
    return ordered_json{{"p_surv", e.p_surv},
                        {"ci_halfwidth", e.ci_halfwidth},
                        {"replicas", e.replicas},
                        {"survived", e.survived},
                        {"truncated", e.truncated}};
}

inline ordered_json to_json(const MartingaleCheck& m) {
    return ordered_json{{"times", m.times},
                        {"scaled_means", m.scaled_means},
                        {"z_scores", m.z_scores},
                        {"phi_x0", m.phi_x0},
                        {"passed", m.passed}};
}

inline ordered_json to_json(const GrowthBoundCheck& g) {
    return ordered_json{{"times", g.times},
                        {"scaled_means", g.scaled_means},
                        {"band_ratio", g.band_ratio},
                        {"log_slope", g.log_slope},
                        {"passed", g.passed},
                        {"note", g.note}};
}

inline ordered_json to_json(const CrossCheckReport& r) {
    ordered_json j;
    j["regime"] = to_string(r.regime);
    j["lambda_eigen"] = r.ran_eigen ? ordered_json(r.lambda_eigen) : ordered_json();
    j["lambda_pde"] = r.ran_pde ? ordered_json(r.lambda_pde) : ordered_json();
    j["pde_gap"] = (r.ran_eigen && r.ran_pde) ? ordered_json(r.pde_gap) : ordered_json();
    j["extinction"] = ordered_json{{"ran", r.ran_picard},
                                   {"p_x0", r.p_x0},
                                   {"p_min", r.p_min},
                                   {"p_max", r.p_max},
                                   {"dichotomy", to_string(r.dichotomy_verdict)}};
    j["mc_survival"] = r.ran_mc ? to_json(r.mc) : ordered_json();
    j["martingale"] = r.martingale_ran ? to_json(r.martingale) : ordered_json();
    j["growth_bound"] = r.growth_bound_ran ? to_json(r.growth_bound) : ordered_json();
    j["routes_run"] = ordered_json{{"eigen", r.ran_eigen},
                                   {"pde", r.ran_pde},
                                   {"picard", r.ran_picard},
                                   {"mc", r.ran_mc}};
    j["criterion_consistent"] = r.criterion_consistent;
    j["all_passed"] = r.all_passed;
    j["notes"] = r.notes;
    return j;
}

} // namespace growfrag
