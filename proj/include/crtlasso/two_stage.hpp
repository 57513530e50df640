#pragma once

// Two-stage estimator: penalized covariate selection on cluster averages,
// then WLS ATE estimation with design-based standard errors on the
// individual-level data using the selected covariates.
//
// Forced covariates are always in the stage-2 model and enter stage 1
// unpenalized. The treatment indicator is penalized in stage 1 (it carries
// its own |b1| term) but is unconditionally part of the stage-2 model. An
// optional second selection pass forms pairwise products of the selected
// main effects and lets the penalty pick predictive interactions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crtlasso/data.hpp"
#include "crtlasso/errors.hpp"
#include "crtlasso/lasso.hpp"
#include "crtlasso/standardize.hpp"
#include "crtlasso/wls.hpp"

namespace crtlasso {

struct PipelineConfig {
    std::vector<int> forced_covariates; // frame covariate indices, always in stage 2
    bool interaction_pass = false;
    bool repenalize_mains = false;      // interaction pass re-penalizes main effects
    double alpha = 0.05;
    StandardizeOptions standardize;
    LassoOptions lasso;
    R2Weighting r2_weighting = R2Weighting::cluster_weights;
};

struct StageOneResult {
    ClusterFrame cf;
    StandardizedDesign design;
    LassoPath path;
    std::vector<int> selected;      // non-forced covariates with nonzero coefficients
    bool treatment_selected = false;
    bool skipped = false;           // no candidate covariates at all
};

struct TwoStageReport {
    std::vector<int> selected_indices;          // stage-1 selection, frame indexing
    std::vector<std::string> selected_names;
    bool treatment_selected = false;
    bool stage1_skipped = false;
    std::vector<std::string> forced_names;
    std::vector<std::string> dropped_zero_variance;
    std::vector<std::string> df_rescue_dropped;
    double lambda_selected = std::numeric_limits<double>::quiet_NaN();
    int lambda_index = -1;
    std::vector<double> lambda_grid;
    std::vector<double> cv_errors;
    std::vector<std::string> stage2_names;      // final stage-2 covariates
    AteEstimate ate;
    std::vector<std::string> interaction_candidates;
    std::vector<std::string> interaction_selected;
    bool has_baseline = false;
    std::vector<std::string> baseline_names;
    AteEstimate baseline_ate;
    double se_reduction = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline bool contains(std::span<const int> xs, int x) {
    return std::find(xs.begin(), xs.end(), x) != xs.end();
}

// Analytic form of the stage-2 degrees-of-freedom preconditions.
inline bool stage2_df_ok(const ClusterFrame& cf, int k) {
    constexpr double slack = 1e-9;
    return cf.m1 - k * cf.p_star - 1.0 > slack &&
           cf.m0 - k * (1.0 - cf.p_star) - 1.0 > slack && cf.m - k - 2 >= 1;
}

} // namespace detail

// Stage 1: aggregate, standardize (dropping zero-variance covariates),
// build the lambda grid from the full design, select lambda by
// leave-one-cluster-out CV, and read off the nonzero covariates.
inline StageOneResult run_stage_one(const StudyFrame& frame, const PipelineConfig& cfg) {
    StageOneResult s1;
    s1.cf = aggregate(frame);

    StandardizeOptions sopts = cfg.standardize;
    sopts.drop_zero_variance = true;
    s1.design = center_and_standardize(s1.cf, sopts);

    if (s1.design.kept_covariates.empty() && cfg.forced_covariates.empty() && s1.cf.v == 0) {
        s1.skipped = true;
        return s1;
    }

    std::vector<double> pf_covariate(s1.cf.v, 1.0);
    for (int q : cfg.forced_covariates) {
        if (q < 0 || q >= s1.cf.v) {
            throw ValidationError("forced covariate index " + std::to_string(q) + " out of range");
        }
        pf_covariate[q] = 0.0;
    }

    const auto pf_design = design_penalty_factors(s1.design, pf_covariate);
    const double lmax = lambda_max(s1.design, pf_design, cfg.lasso);
    auto grid = make_lambda_grid(lmax, cfg.lasso.n_lambda, cfg.lasso.lambda_min_ratio);
    s1.path = loocv_select(s1.cf, s1.design, std::move(grid), sopts, cfg.lasso, pf_covariate);

    const Selection sel = selected_covariates(s1.path, s1.design);
    s1.treatment_selected = sel.treatment_selected;
    for (int q : sel.covariates) {
        if (!detail::contains(cfg.forced_covariates, q)) s1.selected.push_back(q);
    }
    return s1;
}

namespace detail {

// Chooses the stage-2 covariate set and estimates the ATE, dropping the
// weakest selected covariates if the variance-estimator df preconditions
// would fail.
inline AteEstimate estimate_stage_two(const StudyFrame& frame, const StageOneResult& s1,
                                      const PipelineConfig& cfg, std::vector<int> stage2,
                                      TwoStageReport& report) {
    std::sort(stage2.begin(), stage2.end());
    auto droppable = [&](int q) { return !contains(cfg.forced_covariates, q); };
    while (!stage2_df_ok(s1.cf, static_cast<int>(stage2.size()))) {
        int victim = -1;
        double victim_abs = std::numeric_limits<double>::infinity();
        for (int q : stage2) {
            if (!droppable(q)) continue;
            const int col = s1.design.column_of_covariate(q);
            const double coef =
                (col >= 0 && s1.path.selected_index >= 0) ? s1.path.coefs[s1.path.selected_index][col] : 0.0;
            if (std::abs(coef) < victim_abs) {
                victim_abs = std::abs(coef);
                victim = q;
            }
        }
        if (victim < 0) {
            throw InsufficientDfError("stage2", static_cast<double>(stage2.size()), s1.cf.m);
        }
        stage2.erase(std::remove(stage2.begin(), stage2.end(), victim), stage2.end());
        report.df_rescue_dropped.push_back(frame.covariate_names()[victim]);
    }

    report.stage2_names.clear();
    for (int q : stage2) report.stage2_names.push_back(frame.covariate_names()[q]);
    const WlsFit fit = fit_wls(frame, stage2);
    return designbased_se(fit, s1.cf, cfg.alpha, cfg.r2_weighting);
}

// Augments a frame with pairwise products of the `mains` covariates,
// keeping only forced + mains + products as columns. Products are computed
// at the individual level and named "a:b".
inline StudyFrame interaction_frame(const StudyFrame& frame, std::span<const int> forced,
                                    std::span<const int> mains, std::vector<int>& forced_out,
                                    std::vector<int>& mains_out,
                                    std::vector<std::string>& candidate_names) {
    std::vector<int> base_cols;
    for (int q : forced) base_cols.push_back(q);
    for (int q : mains) {
        if (!contains(forced, q)) base_cols.push_back(q);
    }
    std::vector<std::string> names;
    for (int q : base_cols) names.push_back(frame.covariate_names()[q]);
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t a = 0; a < mains.size(); ++a) {
        for (std::size_t b = a + 1; b < mains.size(); ++b) {
            pairs.emplace_back(mains[a], mains[b]);
            const std::string name =
                frame.covariate_names()[mains[a]] + ":" + frame.covariate_names()[mains[b]];
            names.push_back(name);
            candidate_names.push_back(name);
        }
    }

    StudyFrame out(names);
    std::vector<double> row(names.size());
    for (int i = 0; i < frame.n(); ++i) {
        const int j = frame.cluster(i);
        const int cluster = out.add_cluster(frame.cluster_id(j), frame.treatment(j));
        std::size_t c = 0;
        for (int q : base_cols) row[c++] = frame.x(i, q);
        for (auto [a, b] : pairs) row[c++] = frame.x(i, a) * frame.x(i, b);
        out.add_record(cluster, frame.y(i), frame.w(i), row);
    }

    forced_out.clear();
    mains_out.clear();
    for (std::size_t c = 0; c < base_cols.size(); ++c) {
        if (contains(forced, base_cols[c])) forced_out.push_back(static_cast<int>(c));
        if (contains(mains, base_cols[c])) mains_out.push_back(static_cast<int>(c));
    }
    return out;
}

} // namespace detail

// Full pipeline. Deterministic: identical frame and config give an
// identical report.
inline TwoStageReport run_two_stage(const StudyFrame& frame, const PipelineConfig& cfg) {
    TwoStageReport report;
    const StageOneResult s1 = run_stage_one(frame, cfg);

    report.stage1_skipped = s1.skipped;
    report.treatment_selected = s1.treatment_selected;
    report.selected_indices = s1.selected;
    for (int q : s1.selected) report.selected_names.push_back(frame.covariate_names()[q]);
    for (int q : cfg.forced_covariates) report.forced_names.push_back(frame.covariate_names()[q]);
    for (int q : s1.design.dropped_covariates) {
        report.dropped_zero_variance.push_back(frame.covariate_names()[q]);
    }
    if (!s1.skipped) {
        report.lambda_selected = s1.path.lambda_selected;
        report.lambda_index = s1.path.selected_index;
        report.lambda_grid = s1.path.lambda_grid;
        report.cv_errors = s1.path.cv_errors;
    }

    std::vector<int> stage2(cfg.forced_covariates);
    for (int q : s1.selected) {
        if (!detail::contains(stage2, q)) stage2.push_back(q);
    }

    if (cfg.interaction_pass && s1.selected.size() >= 2) {
        std::vector<int> forced2, mains2;
        const StudyFrame frame2 = detail::interaction_frame(
            frame, cfg.forced_covariates, s1.selected, forced2, mains2, report.interaction_candidates);

        PipelineConfig cfg2 = cfg;
        cfg2.interaction_pass = false;
        cfg2.forced_covariates = forced2;
        if (!cfg.repenalize_mains) {
            cfg2.forced_covariates.insert(cfg2.forced_covariates.end(), mains2.begin(), mains2.end());
        }
        const StageOneResult s1b = run_stage_one(frame2, cfg2);

        const int n_base = static_cast<int>(forced2.size() + mains2.size());
        std::vector<int> stage2b(cfg2.forced_covariates);
        if (cfg.repenalize_mains) {
            for (int q : s1b.selected) {
                if (q < n_base && !detail::contains(stage2b, q)) stage2b.push_back(q);
            }
        }
        for (int q : s1b.selected) {
            if (q >= n_base) {
                stage2b.push_back(q);
                report.interaction_selected.push_back(frame2.covariate_names()[q]);
            }
        }
        report.ate = detail::estimate_stage_two(frame2, s1b, cfg2, stage2b, report);
        return report;
    }

    report.ate = detail::estimate_stage_two(frame, s1, cfg, stage2, report);
    return report;
}

// Runs the pipeline and, alongside it, the same design-based estimator on a
// fixed baseline covariate set (for example the pretest alone). Reports the
// standard error reduction 1 - se / se_baseline.
inline TwoStageReport compare_to_baseline(const StudyFrame& frame,
                                          std::span<const int> baseline_subset,
                                          const PipelineConfig& cfg) {
    TwoStageReport report = run_two_stage(frame, cfg);
    for (int q : baseline_subset) {
        if (q < 0 || q >= frame.v()) {
            throw ValidationError("baseline covariate index " + std::to_string(q) + " out of range");
        }
        report.baseline_names.push_back(frame.covariate_names()[q]);
    }
    const ClusterFrame cf = aggregate(frame);
    const WlsFit fit = fit_wls(frame, baseline_subset);
    report.baseline_ate = designbased_se(fit, cf, cfg.alpha, cfg.r2_weighting);
    report.has_baseline = true;
    report.se_reduction = 1.0 - report.ate.se / report.baseline_ate.se;
    return report;
}

} // namespace crtlasso
