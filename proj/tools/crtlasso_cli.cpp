// Command-line front end: estimate | lasso | simulate | diagnose.
//
// JSON goes to <out>.json, a human-readable table to stdout (and <out>.txt
// when --out is given). Exit codes: 0 success, 2 input/config error,
// 3 numerical failure.

#include "CLI11.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "crtlasso/crtlasso.hpp"

namespace {

using crtlasso::njson;

njson load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw crtlasso::ValidationError("cannot open config file '" + path + "'");
    njson j;
    try {
        in >> j;
    } catch (const std::exception& err) {
        throw crtlasso::ValidationError("invalid JSON in '" + path + "': " + err.what());
    }
    return j;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw crtlasso::ValidationError("cannot write '" + path + "'");
    out << content;
}

std::vector<std::string> split_names(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct DataArgs {
    std::string input;
    std::string config_path;
    std::string outcome_col, cluster_col, treatment_col, weight_col;
    std::string covariate_cols;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--input", input, "input CSV file")->required();
        cmd->add_option("--config", config_path, "JSON config file (schema + pipeline settings)");
        cmd->add_option("--outcome-col", outcome_col, "outcome column name");
        cmd->add_option("--cluster-col", cluster_col, "cluster id column name");
        cmd->add_option("--treatment-col", treatment_col, "treatment column name");
        cmd->add_option("--weight-col", weight_col, "weight column name (default: unit weights)");
        cmd->add_option("--covariates", covariate_cols,
                        "comma-separated covariate columns (default: all remaining)");
    }

    crtlasso::CsvSchema schema(const njson& config) const {
        crtlasso::CsvSchema schema;
        if (config.contains("schema")) schema = crtlasso::schema_from_json(config.at("schema"));
        if (!outcome_col.empty()) schema.outcome = outcome_col;
        if (!cluster_col.empty()) schema.cluster = cluster_col;
        if (!treatment_col.empty()) schema.treatment = treatment_col;
        if (!weight_col.empty()) schema.weight = weight_col;
        if (!covariate_cols.empty()) schema.covariates = split_names(covariate_cols);
        return schema;
    }
};

struct PipelineArgs {
    std::string forced, baseline;
    bool interactions = false;
    bool repenalize_mains = false;
    bool unweighted_standardize = false;
    bool standardize_outcome = false;
    std::string r2_weighting;
    double alpha = -1.0;
    int n_lambda = -1;
    double lambda_min_ratio = -1.0;
    int threads = -1;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--forced-covariates", forced, "comma-separated always-included covariates");
        cmd->add_option("--baseline-covariates", baseline,
                        "comma-separated baseline model for SE comparison");
        cmd->add_flag("--interactions", interactions, "second selection pass over pairwise products");
        cmd->add_flag("--repenalize-mains", repenalize_mains,
                      "re-penalize main effects in the interaction pass");
        cmd->add_flag("--unweighted-standardize", unweighted_standardize,
                      "standardize with the unweighted cross-cluster SD");
        cmd->add_flag("--standardize-outcome", standardize_outcome,
                      "also scale the centered outcome to unit SD");
        cmd->add_option("--r2-weighting", r2_weighting, "cluster_weights | none");
        cmd->add_option("--alpha", alpha, "test level (default 0.05)");
        cmd->add_option("--n-lambda", n_lambda, "penalty grid size (default 100)");
        cmd->add_option("--lambda-min-ratio", lambda_min_ratio, "grid floor ratio (default 1e-4)");
        cmd->add_option("--threads", threads, "CV fold threads (default 1)");
    }

    crtlasso::PipelineSettings settings(const njson& config) const {
        crtlasso::PipelineSettings settings;
        if (config.contains("pipeline")) {
            settings = crtlasso::pipeline_from_json(config.at("pipeline"));
        }
        auto& cfg = settings.config;
        if (!forced.empty()) settings.forced_names = split_names(forced);
        if (!baseline.empty()) settings.baseline_names = split_names(baseline);
        if (interactions) cfg.interaction_pass = true;
        if (repenalize_mains) cfg.repenalize_mains = true;
        if (unweighted_standardize) cfg.standardize.weighted = false;
        if (standardize_outcome) cfg.standardize.standardize_outcome = true;
        if (!r2_weighting.empty()) {
            if (r2_weighting == "cluster_weights") {
                cfg.r2_weighting = crtlasso::R2Weighting::cluster_weights;
            } else if (r2_weighting == "none") {
                cfg.r2_weighting = crtlasso::R2Weighting::none;
            } else {
                throw crtlasso::ValidationError("--r2-weighting must be cluster_weights or none");
            }
        }
        if (alpha > 0.0) cfg.alpha = alpha;
        if (n_lambda > 0) cfg.lasso.n_lambda = n_lambda;
        if (lambda_min_ratio > 0.0) cfg.lasso.lambda_min_ratio = lambda_min_ratio;
        if (threads >= 0) cfg.lasso.n_threads = threads;
        return settings;
    }
};

njson effective_config(const crtlasso::CsvSchema& schema, const crtlasso::PipelineConfig& cfg,
                       const std::vector<std::string>& forced,
                       const std::vector<std::string>& baseline) {
    return njson{
        {"schema",
         njson{{"outcome", schema.outcome},
               {"cluster", schema.cluster},
               {"treatment", schema.treatment},
               {"weight", schema.weight},
               {"covariates", schema.covariates}}},
        {"pipeline",
         njson{{"alpha", cfg.alpha},
               {"interaction_pass", cfg.interaction_pass},
               {"repenalize_mains", cfg.repenalize_mains},
               {"forced_covariates", forced},
               {"baseline_covariates", baseline},
               {"r2_weighting",
                cfg.r2_weighting == crtlasso::R2Weighting::cluster_weights ? "cluster_weights" : "none"},
               {"standardize",
                njson{{"weighted", cfg.standardize.weighted},
                      {"standardize_outcome", cfg.standardize.standardize_outcome}}},
               {"lasso",
                njson{{"n_lambda", cfg.lasso.n_lambda},
                      {"lambda_min_ratio", cfg.lasso.lambda_min_ratio},
                      {"tol_cd", cfg.lasso.tol_cd},
                      {"max_sweeps", cfg.lasso.max_sweeps},
                      {"kkt_tol_factor", cfg.lasso.kkt_tol_factor}}}}}};
}

void emit(const std::string& out_prefix, const njson& payload, const std::string& table) {
    std::cout << table;
    if (!out_prefix.empty()) {
        write_file(out_prefix + ".json", payload.dump(2) + "\n");
        write_file(out_prefix + ".txt", table);
    }
}

int cmd_estimate(const DataArgs& data, const PipelineArgs& pipe, const std::string& out_prefix) {
    const njson config = data.config_path.empty() ? njson::object() : load_json_file(data.config_path);
    const auto schema = data.schema(config);
    auto settings = pipe.settings(config);

    const crtlasso::StudyFrame frame = crtlasso::load_study(data.input, schema);
    auto& cfg = settings.config;
    cfg.forced_covariates = crtlasso::resolve_covariates(settings.forced_names, frame.covariate_names());

    crtlasso::TwoStageReport report;
    if (settings.baseline_names.empty()) {
        report = crtlasso::run_two_stage(frame, cfg);
    } else {
        const auto baseline =
            crtlasso::resolve_covariates(settings.baseline_names, frame.covariate_names());
        report = crtlasso::compare_to_baseline(frame, baseline, cfg);
    }

    const njson cfg_echo =
        effective_config(schema, cfg, settings.forced_names, settings.baseline_names);
    njson payload{{"config_hash", crtlasso::config_hash_hex(cfg_echo)},
                  {"config", cfg_echo},
                  {"input", data.input},
                  {"report", crtlasso::to_json(report)}};
    emit(out_prefix, payload, crtlasso::twostage_table(report));
    return 0;
}

int cmd_lasso(const DataArgs& data, const PipelineArgs& pipe, const std::string& out_prefix,
              const std::string& path_csv) {
    const njson config = data.config_path.empty() ? njson::object() : load_json_file(data.config_path);
    const auto schema = data.schema(config);
    auto settings = pipe.settings(config);

    const crtlasso::StudyFrame frame = crtlasso::load_study(data.input, schema);
    auto& cfg = settings.config;
    cfg.forced_covariates = crtlasso::resolve_covariates(settings.forced_names, frame.covariate_names());

    const crtlasso::StageOneResult s1 = crtlasso::run_stage_one(frame, cfg);
    if (s1.skipped) throw crtlasso::ValidationError("no candidate covariates for selection");

    std::vector<double> pf_covariate(s1.cf.v, 1.0);
    for (int q : cfg.forced_covariates) pf_covariate[q] = 0.0;
    const auto pf = crtlasso::design_penalty_factors(s1.design, pf_covariate);
    const double lmax = crtlasso::lambda_max(s1.design, pf, cfg.lasso);
    const auto& sel_coefs = s1.path.coefs[s1.path.selected_index];
    const auto kkt = crtlasso::kkt_check(s1.design, sel_coefs, s1.path.lambda_selected,
                                         cfg.lasso.kkt_tol_factor * lmax, pf);

    std::vector<std::string> selected_names;
    for (int q : s1.selected) selected_names.push_back(frame.covariate_names()[q]);

    const njson cfg_echo = effective_config(schema, cfg, settings.forced_names, {});
    njson payload{{"config_hash", crtlasso::config_hash_hex(cfg_echo)},
                  {"config", cfg_echo},
                  {"input", data.input},
                  {"lambda_max", lmax},
                  {"lambda_grid", s1.path.lambda_grid},
                  {"cv_errors", s1.path.cv_errors},
                  {"nonzero_counts", s1.path.nonzero_counts},
                  {"lambda_selected", s1.path.lambda_selected},
                  {"lambda_index", s1.path.selected_index},
                  {"coefficients_standardized", sel_coefs},
                  {"coefficients_original_scale",
                   crtlasso::unstandardize_coefficients(s1.design, sel_coefs)},
                  {"column_names", s1.design.column_names},
                  {"selected_covariates", selected_names},
                  {"treatment_selected", s1.treatment_selected},
                  {"dropped_zero_variance", s1.design.dropped_covariates},
                  {"kkt", njson{{"max_violation", kkt.max_violation},
                                {"tol", kkt.tol},
                                {"pass", kkt.pass}}}};

    if (!path_csv.empty()) {
        std::ostringstream csv;
        csv << "lambda,cv_error";
        for (const auto& name : s1.design.column_names) csv << ",coef_" << name;
        csv << "\n";
        for (std::size_t li = 0; li < s1.path.lambda_grid.size(); ++li) {
            csv << crtlasso::detail::format_double(s1.path.lambda_grid[li]) << ','
                << crtlasso::detail::format_double(s1.path.cv_errors[li]);
            for (double c : s1.path.coefs[li]) csv << ',' << crtlasso::detail::format_double(c);
            csv << "\n";
        }
        write_file(path_csv, csv.str());
    }

    std::ostringstream table;
    table << "Penalty path: " << s1.path.lambda_grid.size() << " lambdas from "
          << s1.path.lambda_grid.front() << " down to " << s1.path.lambda_grid.back() << "\n"
          << "Selected lambda " << s1.path.lambda_selected << " (index " << s1.path.selected_index
          << "), CV error " << s1.path.cv_errors[s1.path.selected_index] << "\n"
          << "Selected covariates:";
    if (selected_names.empty()) table << " (none)";
    for (const auto& name : selected_names) table << ' ' << name;
    table << "\nKKT check: max violation " << kkt.max_violation << " (tol " << kkt.tol << ") -> "
          << (kkt.pass ? "pass" : "FAIL") << "\n";
    emit(out_prefix, payload, table.str());
    return 0;
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 const std::string& out_prefix, int threads, int dump_rep,
                 const std::string& dump_file) {
    njson config = config_path.empty() ? njson::object() : load_json_file(config_path);
    crtlasso::SimConfig cfg = crtlasso::sim_config_from_json(config);
    if (seed.has_value()) {
        cfg.seed = *seed;
    } else if (!config.contains("seed")) {
        throw crtlasso::ValidationError("simulate requires --seed (or a seed in the config file)");
    }
    if (threads >= 0) cfg.n_threads = threads;

    const njson cfg_echo = crtlasso::sim_config_to_json(cfg);
    const crtlasso::SimReport report = crtlasso::run_simulation(cfg);

    njson payload{{"config_hash", crtlasso::config_hash_hex(cfg_echo)},
                  {"config", cfg_echo},
                  {"report", crtlasso::to_json(report)}};
    emit(out_prefix, payload, crtlasso::simreport_table(report));

    if (dump_rep >= 0) {
        // Regenerate one replication's observed dataset deterministically.
        cfg.validate();
        const auto pop = crtlasso::generate_population(cfg, crtlasso::derive_stream(cfg.seed, 0, 0));
        crtlasso::Rng rng(crtlasso::derive_stream(cfg.seed, 1, static_cast<std::uint64_t>(dump_rep)));
        const int m1 = static_cast<int>(std::lround(cfg.m * cfg.p));
        const auto treated = rng.choose(cfg.m, m1);
        std::vector<int> t(cfg.m, 0);
        for (int j : treated) t[j] = 1;
        const auto frame = crtlasso::make_observed_frame(pop, t);
        const std::string base = dump_file.empty()
                                     ? (out_prefix.empty() ? std::string("replication") : out_prefix) +
                                           "_rep" + std::to_string(dump_rep)
                                     : dump_file;
        crtlasso::write_study_csv(base + ".csv", frame);
        const auto rep_report = crtlasso::run_two_stage(frame, cfg.pipeline);
        njson dump{{"config_hash", crtlasso::config_hash_hex(cfg_echo)},
                   {"replication", dump_rep},
                   {"report", crtlasso::to_json(rep_report)}};
        write_file(base + ".json", dump.dump(2) + "\n");
        std::cout << "Dumped replication " << dump_rep << " to " << base << ".csv\n";
    }
    if (!report.ok) return 2;
    return 0;
}

int cmd_diagnose(const DataArgs& data, const PipelineArgs& pipe, const std::string& support_csv,
                 const std::string& out_prefix) {
    const njson config = data.config_path.empty() ? njson::object() : load_json_file(data.config_path);
    const auto schema = data.schema(config);
    auto settings = pipe.settings(config);

    const crtlasso::StudyFrame frame = crtlasso::load_study(data.input, schema);
    auto& cfg = settings.config;
    cfg.forced_covariates = crtlasso::resolve_covariates(settings.forced_names, frame.covariate_names());

    const crtlasso::StageOneResult s1 = crtlasso::run_stage_one(frame, cfg);
    if (s1.skipped) throw crtlasso::ValidationError("no covariates to diagnose");

    // Support: user-specified names, or the fitted stage-1 selection.
    std::vector<int> support_cols;
    std::vector<double> signs;
    std::vector<std::string> support_names;
    if (!support_csv.empty()) {
        for (int q : crtlasso::resolve_covariates(split_names(support_csv), frame.covariate_names())) {
            const int col = s1.design.column_of_covariate(q);
            if (col < 0) {
                throw crtlasso::ValidationError("support covariate '" + frame.covariate_names()[q] +
                                                "' was dropped (zero variance)");
            }
            support_cols.push_back(col);
            signs.push_back(1.0);
            support_names.push_back(frame.covariate_names()[q]);
        }
    } else {
        if (s1.selected.empty()) {
            throw crtlasso::ValidationError(
                "stage 1 selected no covariates; pass --support to name a support set");
        }
        const auto& coefs = s1.path.coefs[s1.path.selected_index];
        for (int q : s1.selected) {
            const int col = s1.design.column_of_covariate(q);
            support_cols.push_back(col);
            signs.push_back(coefs[col] > 0.0 ? 1.0 : -1.0);
            support_names.push_back(frame.covariate_names()[q]);
        }
    }

    const auto report = crtlasso::irrepresentable_check(s1.design, support_cols, signs);
    const njson cfg_echo = effective_config(schema, cfg, settings.forced_names, {});
    njson payload{{"config_hash", crtlasso::config_hash_hex(cfg_echo)},
                  {"config", cfg_echo},
                  {"input", data.input},
                  {"support_covariates", support_names},
                  {"irrepresentability", crtlasso::to_json(report)}};

    std::ostringstream table;
    table << "Irrepresentability check on support:";
    for (const auto& name : support_names) table << ' ' << name;
    table << "\n  min margin " << report.min_margin << " -> "
          << (report.holds ? "holds" : "VIOLATED") << "\n";
    emit(out_prefix, payload, table.str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage covariate selection and design-based ATE estimation for "
                 "cluster-randomized trials"};
    app.require_subcommand(1);

    std::string out_prefix;
    app.add_option("--out", out_prefix, "output file prefix (.json and .txt)");

    DataArgs est_data, lasso_data, diag_data;
    PipelineArgs est_pipe, lasso_pipe, diag_pipe;

    auto* estimate = app.add_subcommand("estimate", "two-stage ATE estimation on a CSV dataset");
    est_data.add_to(estimate);
    est_pipe.add_to(estimate);

    auto* lasso = app.add_subcommand("lasso", "stage-1 selection only: path, CV curve, KKT report");
    lasso_data.add_to(lasso);
    lasso_pipe.add_to(lasso);
    std::string path_csv;
    lasso->add_option("--emit-path-csv", path_csv, "write the full coefficient path as CSV");

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo study over the randomization "
                                                    "distribution");
    std::string sim_config;
    std::uint64_t sim_seed = 0;
    int sim_threads = -1;
    int dump_rep = -1;
    std::string dump_file;
    simulate->add_option("--config", sim_config, "SimConfig JSON file");
    auto* seed_opt = simulate->add_option("--seed", sim_seed, "master seed (required)");
    simulate->add_option("--threads", sim_threads, "worker threads (default: all cores)");
    simulate->add_option("--dump-one", dump_rep, "export one replication's observed dataset as CSV");
    simulate->add_option("--dump-file", dump_file, "file prefix for --dump-one");

    auto* diagnose = app.add_subcommand("diagnose", "irrepresentability check for a support set");
    diag_data.add_to(diagnose);
    diag_pipe.add_to(diagnose);
    std::string support_csv;
    diagnose->add_option("--support", support_csv, "comma-separated support covariates");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (estimate->parsed()) return cmd_estimate(est_data, est_pipe, out_prefix);
        if (lasso->parsed()) return cmd_lasso(lasso_data, lasso_pipe, out_prefix, path_csv);
        if (simulate->parsed()) {
            std::optional<std::uint64_t> seed;
            if (seed_opt->count() > 0) seed = sim_seed;
            return cmd_simulate(sim_config, seed, out_prefix, sim_threads, dump_rep, dump_file);
        }
        if (diagnose->parsed()) return cmd_diagnose(diag_data, diag_pipe, support_csv, out_prefix);
    } catch (const crtlasso::ValidationError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const crtlasso::NumericalError& err) {
        std::cerr << "numerical error: " << err.what() << "\n";
        return 3;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 3;
    }
    return 0;
}
