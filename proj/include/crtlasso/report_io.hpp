#pragma once

// JSON serialization for reports and configuration, plus aligned text
// tables for humans. JSON objects are key-sorted and doubles use
// shortest-round-trip formatting, so identical inputs always produce
// identical bytes. Every emitted document carries the config hash (and
// seed, where one applies).

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "crtlasso/csv.hpp"
#include "crtlasso/diagnostics.hpp"
#include "crtlasso/lasso.hpp"
#include "crtlasso/sim.hpp"
#include "crtlasso/two_stage.hpp"
#include "crtlasso/wls.hpp"

namespace crtlasso {

using njson = nlohmann::json;

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash_hex(const njson& config) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(config.dump());
    return out.str();
}

inline njson to_json(const AteEstimate& est) {
    return njson{{"estimate", est.estimate}, {"se", est.se},           {"df", est.df},
                 {"t_stat", est.t_stat},     {"p_value", est.p_value}, {"ci_low", est.ci_low},
                 {"ci_high", est.ci_high},   {"s2_1", est.s2_1},       {"s2_0", est.s2_0},
                 {"r2_tx", est.r2_tx},       {"alpha", est.alpha}};
}

inline njson to_json(const TwoStageReport& report) {
    njson j{{"selected_covariates", report.selected_names},
            {"selected_indices", report.selected_indices},
            {"treatment_selected", report.treatment_selected},
            {"stage1_skipped", report.stage1_skipped},
            {"forced_covariates", report.forced_names},
            {"dropped_zero_variance", report.dropped_zero_variance},
            {"df_rescue_dropped", report.df_rescue_dropped},
            {"lambda_selected", report.lambda_selected},
            {"lambda_index", report.lambda_index},
            {"lambda_grid", report.lambda_grid},
            {"cv_errors", report.cv_errors},
            {"stage2_covariates", report.stage2_names},
            {"ate", to_json(report.ate)}};
    if (!report.interaction_candidates.empty() || !report.interaction_selected.empty()) {
        j["interaction_candidates"] = report.interaction_candidates;
        j["interaction_selected"] = report.interaction_selected;
    }
    if (report.has_baseline) {
        j["baseline_covariates"] = report.baseline_names;
        j["baseline_ate"] = to_json(report.baseline_ate);
        j["se_reduction"] = report.se_reduction;
    }
    return j;
}

inline njson to_json(const BaseSampleMetrics& bm) {
    return njson{{"avg_selected_total", bm.avg_selected_total},
                 {"avg_selected_true", bm.avg_selected_true},
                 {"mean_bias_raw", bm.mean_bias_raw},
                 {"mean_bias_sd_units", bm.mean_bias_sd_units},
                 {"type1_rate", bm.type1_rate},
                 {"coverage_rate", bm.coverage_rate},
                 {"coverage_realized_ate", bm.coverage_realized_ate},
                 {"avg_est_se", bm.avg_est_se},
                 {"emp_sd_est", bm.emp_sd_est},
                 {"true_se", bm.true_se},
                 {"avg_true_model_se", bm.avg_true_model_se},
                 {"skewness_est", bm.skewness_est},
                 {"ex_kurtosis_est", bm.ex_kurtosis_est},
                 {"realized_ate", bm.realized_ate},
                 {"realized_sd_y0", bm.realized_sd_y0},
                 {"realized_r2", bm.realized_r2},
                 {"realized_icc", bm.realized_icc},
                 {"n_completed", bm.n_completed},
                 {"n_failed", bm.n_failed}};
}

// Canonical simulation report; wall-clock time is deliberately left out so
// identical (seed, config) runs emit identical bytes.
inline njson to_json(const SimReport& report) {
    njson per_base = njson::array();
    for (const auto& bm : report.per_base) per_base.push_back(to_json(bm));
    return njson{{"ok", report.ok},
                 {"error", report.error},
                 {"m", report.m},
                 {"k", report.k},
                 {"v", report.v},
                 {"p", report.p},
                 {"rho", report.rho},
                 {"n_reps", report.n_reps},
                 {"n_base_samples", report.n_base_samples},
                 {"seed", report.seed},
                 {"avg_selected_total", report.avg_selected_total},
                 {"avg_selected_true", report.avg_selected_true},
                 {"mean_bias_raw", report.mean_bias_raw},
                 {"mean_bias_sd_units", report.mean_bias_sd_units},
                 {"type1_rate", report.type1_rate},
                 {"coverage_rate", report.coverage_rate},
                 {"coverage_realized_ate", report.coverage_realized_ate},
                 {"avg_est_se", report.avg_est_se},
                 {"emp_sd_est", report.emp_sd_est},
                 {"true_se", report.true_se},
                 {"avg_true_model_se", report.avg_true_model_se},
                 {"skewness_est", report.skewness_est},
                 {"ex_kurtosis_est", report.ex_kurtosis_est},
                 {"n_completed", report.n_completed},
                 {"n_failed", report.n_failed},
                 {"per_base", per_base}};
}

inline njson to_json(const IrrepresentabilityReport& report) {
    return njson{{"support", report.support},
                 {"non_support", report.non_support},
                 {"eta_margin", report.eta_margin},
                 {"min_margin", report.min_margin},
                 {"holds", report.holds}};
}

inline njson to_json(const SelectionProbeResult& probe) {
    njson rows = njson::array();
    for (const auto& r : probe.rows) {
        rows.push_back(njson{{"m", r.m},
                             {"n_reps", r.n_reps},
                             {"exact_rate", r.exact_rate},
                             {"contain_rate", r.contain_rate},
                             {"false_inclusion_rate", r.false_inclusion_rate},
                             {"avg_true_selected", r.avg_true_selected}});
    }
    return njson{{"rows", rows}, {"contain_rate_monotone", probe.contain_rate_monotone}};
}

// ---------------------------------------------------------------------------
// Config parsing

inline CsvSchema schema_from_json(const njson& j) {
    CsvSchema schema;
    if (j.contains("outcome")) schema.outcome = j.at("outcome").get<std::string>();
    if (j.contains("cluster")) schema.cluster = j.at("cluster").get<std::string>();
    if (j.contains("treatment")) schema.treatment = j.at("treatment").get<std::string>();
    if (j.contains("weight")) schema.weight = j.at("weight").get<std::string>();
    if (j.contains("covariates")) schema.covariates = j.at("covariates").get<std::vector<std::string>>();
    return schema;
}

inline LassoOptions lasso_options_from_json(const njson& j) {
    LassoOptions opts;
    if (j.contains("n_lambda")) opts.n_lambda = j.at("n_lambda").get<int>();
    if (j.contains("lambda_min_ratio")) opts.lambda_min_ratio = j.at("lambda_min_ratio").get<double>();
    if (j.contains("tol_cd")) opts.tol_cd = j.at("tol_cd").get<double>();
    if (j.contains("max_sweeps")) opts.max_sweeps = j.at("max_sweeps").get<long>();
    if (j.contains("kkt_tol_factor")) opts.kkt_tol_factor = j.at("kkt_tol_factor").get<double>();
    if (j.contains("n_threads")) opts.n_threads = j.at("n_threads").get<int>();
    return opts;
}

// Forced covariates are named in configs; resolution against a frame's
// covariate list happens in the CLI once the data are loaded.
struct PipelineSettings {
    PipelineConfig config;
    std::vector<std::string> forced_names;
    std::vector<std::string> baseline_names;
};

inline PipelineSettings pipeline_from_json(const njson& j) {
    PipelineSettings settings;
    PipelineConfig& cfg = settings.config;
    if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
    if (j.contains("interaction_pass")) cfg.interaction_pass = j.at("interaction_pass").get<bool>();
    if (j.contains("repenalize_mains")) cfg.repenalize_mains = j.at("repenalize_mains").get<bool>();
    if (j.contains("forced_covariates")) {
        settings.forced_names = j.at("forced_covariates").get<std::vector<std::string>>();
    }
    if (j.contains("baseline_covariates")) {
        settings.baseline_names = j.at("baseline_covariates").get<std::vector<std::string>>();
    }
    if (j.contains("lasso")) cfg.lasso = lasso_options_from_json(j.at("lasso"));
    if (j.contains("standardize")) {
        const auto& s = j.at("standardize");
        if (s.contains("weighted")) cfg.standardize.weighted = s.at("weighted").get<bool>();
        if (s.contains("standardize_outcome")) {
            cfg.standardize.standardize_outcome = s.at("standardize_outcome").get<bool>();
        }
    }
    if (j.contains("r2_weighting")) {
        const auto mode = j.at("r2_weighting").get<std::string>();
        if (mode == "cluster_weights") {
            cfg.r2_weighting = R2Weighting::cluster_weights;
        } else if (mode == "none") {
            cfg.r2_weighting = R2Weighting::none;
        } else {
            throw ValidationError("r2_weighting must be 'cluster_weights' or 'none'");
        }
    }
    return settings;
}

inline std::vector<int> resolve_covariates(const std::vector<std::string>& names,
                                           const std::vector<std::string>& frame_names) {
    std::vector<int> out;
    for (const auto& name : names) {
        int found = -1;
        for (std::size_t q = 0; q < frame_names.size(); ++q) {
            if (frame_names[q] == name) {
                found = static_cast<int>(q);
                break;
            }
        }
        if (found < 0) throw ValidationError("unknown covariate '" + name + "'");
        out.push_back(found);
    }
    return out;
}

inline SimConfig sim_config_from_json(const njson& j, PipelineSettings* settings_out = nullptr) {
    SimConfig cfg;
    if (j.contains("m")) cfg.m = j.at("m").get<int>();
    if (j.contains("p")) cfg.p = j.at("p").get<double>();
    if (j.contains("k")) cfg.k = j.at("k").get<int>();
    if (j.contains("v")) cfg.v = j.at("v").get<int>();
    if (j.contains("rho")) cfg.rho = j.at("rho").get<double>();
    if (j.contains("icc")) cfg.icc = j.at("icc").get<double>();
    if (j.contains("r2_target")) cfg.r2_target = j.at("r2_target").get<double>();
    if (j.contains("het_frac")) cfg.het_frac = j.at("het_frac").get<double>();
    if (j.contains("nj_min")) cfg.nj_min = j.at("nj_min").get<int>();
    if (j.contains("nj_max")) cfg.nj_max = j.at("nj_max").get<int>();
    if (j.contains("n_reps")) cfg.n_reps = j.at("n_reps").get<int>();
    if (j.contains("n_base_samples")) cfg.n_base_samples = j.at("n_base_samples").get<int>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("n_threads")) cfg.n_threads = j.at("n_threads").get<int>();
    if (j.contains("scale_x_blocks_by_icc")) {
        cfg.scale_x_blocks_by_icc = j.at("scale_x_blocks_by_icc").get<bool>();
    }
    if (j.contains("pipeline")) {
        PipelineSettings settings = pipeline_from_json(j.at("pipeline"));
        // Simulated covariates are named x1..xv.
        std::vector<std::string> names(cfg.v);
        for (int q = 0; q < cfg.v; ++q) names[q] = "x" + std::to_string(q + 1);
        settings.config.forced_covariates = resolve_covariates(settings.forced_names, names);
        cfg.pipeline = settings.config;
        if (settings_out) *settings_out = settings;
    }
    return cfg;
}

inline njson sim_config_to_json(const SimConfig& cfg) {
    return njson{{"m", cfg.m},
                 {"p", cfg.p},
                 {"k", cfg.k},
                 {"v", cfg.v},
                 {"rho", cfg.rho},
                 {"icc", cfg.icc},
                 {"r2_target", cfg.r2_target},
                 {"het_frac", cfg.het_frac},
                 {"nj_min", cfg.nj_min},
                 {"nj_max", cfg.nj_max},
                 {"n_reps", cfg.n_reps},
                 {"n_base_samples", cfg.n_base_samples},
                 {"seed", cfg.seed},
                 {"scale_x_blocks_by_icc", cfg.scale_x_blocks_by_icc},
                 {"pipeline",
                  njson{{"alpha", cfg.pipeline.alpha},
                        {"interaction_pass", cfg.pipeline.interaction_pass},
                        {"repenalize_mains", cfg.pipeline.repenalize_mains},
                        {"forced_covariates", cfg.pipeline.forced_covariates},
                        {"r2_weighting", cfg.pipeline.r2_weighting == R2Weighting::cluster_weights
                                             ? "cluster_weights"
                                             : "none"},
                        {"standardize",
                         njson{{"weighted", cfg.pipeline.standardize.weighted},
                               {"standardize_outcome", cfg.pipeline.standardize.standardize_outcome}}},
                        {"lasso",
                         njson{{"n_lambda", cfg.pipeline.lasso.n_lambda},
                               {"lambda_min_ratio", cfg.pipeline.lasso.lambda_min_ratio},
                               {"tol_cd", cfg.pipeline.lasso.tol_cd},
                               {"max_sweeps", cfg.pipeline.lasso.max_sweeps},
                               {"kkt_tol_factor", cfg.pipeline.lasso.kkt_tol_factor}}}}}};
}

// ---------------------------------------------------------------------------
// Text tables

namespace detail {

inline std::string fixed(double x, int prec = 4) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(prec) << x;
    return out.str();
}

} // namespace detail

inline std::string simreport_table(const SimReport& report) {
    std::ostringstream out;
    out << "Simulation: m=" << report.m << " k=" << report.k << " v=" << report.v
        << " p=" << report.p << " rho=" << report.rho << " reps=" << report.n_reps << "x"
        << report.n_base_samples << " seed=" << report.seed << "\n";
    if (!report.ok) {
        out << "  ERROR: " << report.error << "\n";
        return out.str();
    }
    out << "  Covariates selected (total)   " << detail::fixed(report.avg_selected_total, 2) << "\n"
        << "  Covariates selected (true)    " << detail::fixed(report.avg_selected_true, 2) << "\n"
        << "  Average bias (SD units)       " << detail::fixed(report.mean_bias_sd_units) << "\n"
        << "  Type 1 error                  " << detail::fixed(report.type1_rate) << "\n"
        << "  95% CI coverage               " << detail::fixed(report.coverage_rate) << "\n"
        << "  Average estimated SE          " << detail::fixed(report.avg_est_se) << "\n"
        << "  True SE (true-model emp. SD)  " << detail::fixed(report.true_se) << "\n"
        << "  Empirical SD of estimates     " << detail::fixed(report.emp_sd_est) << "\n"
        << "  Completed / failed            " << report.n_completed << " / " << report.n_failed
        << "\n"
        << "  Runtime (s)                   " << detail::fixed(report.runtime_seconds, 1) << "\n";
    return out.str();
}

inline std::string twostage_table(const TwoStageReport& report) {
    std::ostringstream out;
    out << "Stage 1 selection";
    if (report.stage1_skipped) {
        out << ": skipped (no candidate covariates)\n";
    } else {
        out << " (lambda = " << report.lambda_selected << ", grid index " << report.lambda_index
            << ")\n";
        out << "  selected:";
        if (report.selected_names.empty()) out << " (none)";
        for (const auto& name : report.selected_names) out << ' ' << name;
        out << "\n";
        if (report.treatment_selected) out << "  note: treatment coefficient nonzero in stage 1\n";
    }
    if (!report.forced_names.empty()) {
        out << "  forced:";
        for (const auto& name : report.forced_names) out << ' ' << name;
        out << "\n";
    }
    if (!report.dropped_zero_variance.empty()) {
        out << "  warning: dropped zero-variance covariates:";
        for (const auto& name : report.dropped_zero_variance) out << ' ' << name;
        out << "\n";
    }
    if (!report.df_rescue_dropped.empty()) {
        out << "  warning: dropped for degrees of freedom:";
        for (const auto& name : report.df_rescue_dropped) out << ' ' << name;
        out << "\n";
    }
    if (!report.interaction_candidates.empty()) {
        out << "  interaction candidates: " << report.interaction_candidates.size()
            << ", selected:";
        if (report.interaction_selected.empty()) out << " (none)";
        for (const auto& name : report.interaction_selected) out << ' ' << name;
        out << "\n";
    }
    const auto& ate = report.ate;
    out << "Stage 2 (WLS, design-based SE)\n"
        << "  ATE estimate   " << detail::fixed(ate.estimate, 6) << "\n"
        << "  SE             " << detail::fixed(ate.se, 6) << "\n"
        << "  t (df=" << ate.df << ")       " << detail::fixed(ate.t_stat, 4) << "\n"
        << "  p-value        " << detail::fixed(ate.p_value, 4) << "\n"
        << "  " << detail::fixed(100.0 * (1.0 - ate.alpha), 0) << "% CI         ["
        << detail::fixed(ate.ci_low, 6) << ", " << detail::fixed(ate.ci_high, 6) << "]\n";
    if (report.has_baseline) {
        out << "Baseline model (";
        for (std::size_t i = 0; i < report.baseline_names.size(); ++i) {
            out << (i ? " " : "") << report.baseline_names[i];
        }
        out << ")\n"
            << "  ATE estimate   " << detail::fixed(report.baseline_ate.estimate, 6) << "\n"
            << "  SE             " << detail::fixed(report.baseline_ate.se, 6) << "\n"
            << "  p-value        " << detail::fixed(report.baseline_ate.p_value, 4) << "\n"
            << "  SE reduction   " << detail::fixed(100.0 * report.se_reduction, 1) << "%\n";
    }
    return out.str();
}

} // namespace crtlasso
