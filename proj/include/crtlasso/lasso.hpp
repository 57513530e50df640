#pragma once

// Penalized covariate selection on cluster-level averages.
//
// Minimizes, over delta = (b1, g_1..g_v),
//
//   sum_j (w_j/wbar) (ytilde_j - b1 Ttilde_j - xtilde_j' g)^2
//     + lambda (|b1| + sum_q |g_q|)
//
// by cyclic coordinate descent with warm-started path fitting over a
// descending lambda grid. The treatment coefficient is penalized like any
// other; it is reported separately and never counted as a selected
// covariate. lambda is chosen by leave-one-out cross-validation over
// clusters, with each fold re-centered and re-standardized on its training
// clusters, so selection is deterministic and replicable.
//
// Every returned solution is certified against the subgradient optimality
// conditions: for nonzero delta_q, |2 sum_j rho_j z_jq r_j - lambda sgn(delta_q)|
// must vanish; for zero delta_q the correlation must stay inside the
// penalty. Certification is independent of the solver path.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "crtlasso/data.hpp"
#include "crtlasso/errors.hpp"
#include "crtlasso/parallel.hpp"
#include "crtlasso/standardize.hpp"

namespace crtlasso {

struct LassoOptions {
    int n_lambda = 100;
    double lambda_min_ratio = 1e-4;
    double tol_cd = 1e-9;        // max absolute coefficient change per sweep
    long max_sweeps = 100000;
    double kkt_tol_factor = 1e-6; // certification tol = factor * lambda_max
    int n_threads = 1;            // CV folds may run concurrently
};

struct LassoPath {
    std::vector<double> lambda_grid;          // strictly decreasing
    std::vector<std::vector<double>> coefs;   // per lambda, standardized scale
    std::vector<int> nonzero_counts;
    std::vector<double> cv_errors;            // filled by loocv_select
    double lambda_selected = std::numeric_limits<double>::quiet_NaN();
    int selected_index = -1;
};

struct KktReport {
    double max_violation = 0.0;
    double tol = 0.0;
    bool pass = false;
};

struct Selection {
    std::vector<int> covariates;   // ClusterFrame covariate indices, ascending
    bool treatment_selected = false;
};

namespace detail {

inline double soft_threshold(double a, double thr) {
    if (a > thr) return a - thr;
    if (a < -thr) return a + thr;
    return 0.0;
}

inline double pf_at(std::span<const double> pf, int col) {
    return pf.empty() ? 1.0 : pf[col];
}

// 2 * sum_j rho_j z_jq r_j for one column.
inline double weighted_gradient(const StandardizedDesign& d, int col,
                                std::span<const double> resid) {
    const double* zc = d.z.data() + static_cast<std::size_t>(col) * d.m;
    double acc = 0.0;
    for (int j = 0; j < d.m; ++j) acc += d.row_weights[j] * zc[j] * resid[j];
    return 2.0 * acc;
}

inline double kkt_violation(const StandardizedDesign& d, std::span<const double> coefs,
                            std::span<const double> resid, double lambda,
                            std::span<const double> pf) {
    double worst = 0.0;
    for (int col = 0; col < d.n_cols(); ++col) {
        const double g = weighted_gradient(d, col, resid);
        const double penalty = lambda * pf_at(pf, col);
        double viol;
        if (coefs[col] != 0.0) {
            viol = std::abs(g - penalty * (coefs[col] > 0.0 ? 1.0 : -1.0));
        } else if (penalty > 0.0) {
            viol = std::max(0.0, std::abs(g) - penalty);
        } else {
            viol = std::abs(g);
        }
        worst = std::max(worst, viol);
    }
    return worst;
}

#ifndef NDEBUG
inline double lasso_objective(const StandardizedDesign& d, std::span<const double> coefs,
                              std::span<const double> resid, double lambda,
                              std::span<const double> pf) {
    double sse = 0.0;
    for (int j = 0; j < d.m; ++j) sse += d.row_weights[j] * resid[j] * resid[j];
    double l1 = 0.0;
    for (int col = 0; col < d.n_cols(); ++col) {
        if (coefs[col] != 0.0) l1 += pf_at(pf, col) * std::abs(coefs[col]);
    }
    return sse + lambda * l1;
}
#endif

// Core coordinate descent. `coefs` carries the warm start in and the
// solution out; `resid` must equal ytilde - Z coefs on entry.
inline void descend(const StandardizedDesign& d, double lambda, const LassoOptions& opts,
                    std::span<const double> pf, double kkt_tol, std::vector<double>& coefs,
                    std::vector<double>& resid) {
    const int cols = d.n_cols();
#ifndef NDEBUG
    double prev_obj = lasso_objective(d, coefs, resid, lambda, pf);
#endif
    for (long sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (int col = 0; col < cols; ++col) {
            const double b = d.col_sqnorm[col];
            if (b <= 0.0) {
                coefs[col] = 0.0;
                continue;
            }
            const double* zc = d.z.data() + static_cast<std::size_t>(col) * d.m;
            double a = 0.0;
            for (int j = 0; j < d.m; ++j) a += d.row_weights[j] * zc[j] * resid[j];
            a += b * coefs[col];
            const double updated = soft_threshold(a, 0.5 * lambda * pf_at(pf, col)) / b;
            if (updated != coefs[col]) {
                const double step = coefs[col] - updated;
                for (int j = 0; j < d.m; ++j) resid[j] += zc[j] * step;
                max_change = std::max(max_change, std::abs(step));
                coefs[col] = updated;
            }
        }
#ifndef NDEBUG
        const double obj = lasso_objective(d, coefs, resid, lambda, pf);
        assert(obj <= prev_obj + 1e-12 * (1.0 + std::abs(prev_obj)));
        prev_obj = obj;
#endif
        if (max_change < opts.tol_cd &&
            kkt_violation(d, coefs, resid, lambda, pf) <= kkt_tol) {
            return;
        }
    }
    throw MaxIterationsExceededError(opts.max_sweeps);
}

} // namespace detail

// Expands per-covariate penalty factors (ClusterFrame indexing) to design
// columns. The treatment column keeps factor 1.
inline std::vector<double> design_penalty_factors(const StandardizedDesign& d,
                                                  std::span<const double> pf_covariate) {
    std::vector<double> pf(d.n_cols(), 1.0);
    if (!pf_covariate.empty()) {
        for (int col = 1; col < d.n_cols(); ++col) pf[col] = pf_covariate[d.kept_covariates[col - 1]];
    }
    return pf;
}

// Smallest lambda whose solution is all-zero on the penalized coordinates:
// max_q |2 sum_j rho_j z_jq ytilde_j| (scaled by 1/pf_q when penalty factors
// are in play). With unpenalized coordinates present, those are fit first
// and the criterion applies to their residuals.
inline double lambda_max(const StandardizedDesign& d, std::span<const double> pf = {},
                         const LassoOptions& opts = {}) {
    std::vector<double> resid(d.ytilde);
    bool any_unpenalized = false;
    if (!pf.empty()) {
        for (int col = 0; col < d.n_cols(); ++col) any_unpenalized |= (pf[col] == 0.0);
    }
    if (any_unpenalized) {
        // Coordinate descent restricted to the unpenalized block (infinite
        // penalty keeps the others pinned at zero). Convergence on the
        // coefficient-change criterion alone is enough here.
        std::vector<double> coefs(d.n_cols(), 0.0);
        std::vector<double> pf_inf(d.n_cols(), std::numeric_limits<double>::infinity());
        for (int col = 0; col < d.n_cols(); ++col) {
            if (pf[col] == 0.0) pf_inf[col] = 0.0;
        }
        detail::descend(d, 1.0, opts, pf_inf, std::numeric_limits<double>::infinity(), coefs,
                        resid);
    }
    double lmax = 0.0;
    for (int col = 0; col < d.n_cols(); ++col) {
        const double factor = detail::pf_at(pf, col);
        if (factor <= 0.0) continue;
        lmax = std::max(lmax, std::abs(detail::weighted_gradient(d, col, resid)) / factor);
    }
    return lmax;
}

// Log-spaced descending grid from lmax down to lmax * min_ratio.
inline std::vector<double> make_lambda_grid(double lmax, int n_lambda, double min_ratio) {
    if (!(lmax > 0.0)) return {0.0};
    if (n_lambda <= 1) return {lmax};
    std::vector<double> grid(n_lambda);
    const double log_max = std::log(lmax);
    const double log_min = std::log(lmax * min_ratio);
    for (int i = 0; i < n_lambda; ++i) {
        grid[i] = std::exp(log_max + (log_min - log_max) * i / (n_lambda - 1));
    }
    grid[0] = lmax;
    return grid;
}

// Subgradient optimality certificate for a candidate solution; independent
// of how the solution was produced.
inline KktReport kkt_check(const StandardizedDesign& d, std::span<const double> coefs,
                           double lambda, double tol, std::span<const double> pf = {}) {
    std::vector<double> resid(d.ytilde);
    for (int col = 0; col < d.n_cols(); ++col) {
        if (coefs[col] == 0.0) continue;
        const double* zc = d.z.data() + static_cast<std::size_t>(col) * d.m;
        for (int j = 0; j < d.m; ++j) resid[j] -= zc[j] * coefs[col];
    }
    KktReport report;
    report.tol = tol;
    report.max_violation = detail::kkt_violation(d, coefs, resid, lambda, pf);
    report.pass = report.max_violation <= tol;
    return report;
}

// Single-lambda coordinate descent solve. Convergence requires both a small
// final sweep and a passing optimality certificate.
inline std::vector<double> fit_lasso(const StandardizedDesign& d, double lambda,
                                     const LassoOptions& opts = {},
                                     std::span<const double> pf = {},
                                     std::span<const double> warm_start = {}) {
    if (lambda < 0.0) throw ValidationError("lambda must be nonnegative");
    std::vector<double> coefs(d.n_cols(), 0.0);
    std::vector<double> resid(d.ytilde);
    if (!warm_start.empty()) {
        coefs.assign(warm_start.begin(), warm_start.end());
        for (int col = 0; col < d.n_cols(); ++col) {
            if (coefs[col] == 0.0) continue;
            const double* zc = d.z.data() + static_cast<std::size_t>(col) * d.m;
            for (int j = 0; j < d.m; ++j) resid[j] -= zc[j] * coefs[col];
        }
    }
    const double kkt_tol =
        std::max(opts.kkt_tol_factor * lambda_max(d, pf, opts), 1e-12 * (1.0 + lambda));
    detail::descend(d, lambda, opts, pf, kkt_tol, coefs, resid);
    return coefs;
}

namespace detail {

// Path fit without the grid-vs-lambda_max precondition (CV folds reuse the
// full-sample grid, whose head may sit below the fold's own lambda_max).
inline LassoPath fit_path_unchecked(const StandardizedDesign& d, std::vector<double> grid,
                                    const LassoOptions& opts, std::span<const double> pf) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] < grid[i - 1])) throw ValidationError("lambda grid must be strictly decreasing");
    }
    const double kkt_tol =
        std::max(opts.kkt_tol_factor * lambda_max(d, pf, opts), 1e-12 * (1.0 + grid.front()));
    LassoPath path;
    path.lambda_grid = std::move(grid);
    path.coefs.reserve(path.lambda_grid.size());
    path.nonzero_counts.reserve(path.lambda_grid.size());
    std::vector<double> coefs(d.n_cols(), 0.0);
    std::vector<double> resid(d.ytilde);
    for (double lambda : path.lambda_grid) {
        try {
            descend(d, lambda, opts, pf, kkt_tol, coefs, resid);
        } catch (const NumericalError& err) {
            throw NumericalError(std::string(err.what()) + " at lambda = " + std::to_string(lambda));
        }
        int nonzero = 0;
        for (double c : coefs) nonzero += (c != 0.0);
        path.coefs.push_back(coefs);
        path.nonzero_counts.push_back(nonzero);
    }
    return path;
}

} // namespace detail

// Warm-started path over a descending grid starting at (or above)
// lambda_max; every solution is KKT-certified.
inline LassoPath fit_path(const StandardizedDesign& d, std::vector<double> grid,
                          const LassoOptions& opts = {}, std::span<const double> pf = {}) {
    if (grid.empty()) throw ValidationError("lambda grid is empty");
    const double lmax = lambda_max(d, pf, opts);
    if (grid.front() < lmax * (1.0 - 1e-12)) {
        throw ValidationError("lambda grid must start at or above lambda_max");
    }
    return detail::fit_path_unchecked(d, std::move(grid), opts, pf);
}

// Leave-one-cluster-out cross-validation over a fixed grid. Each fold
// re-aggregates, re-centers, and re-standardizes on its m-1 training
// clusters; the held-out cluster is transformed with the training scales, so
// no information leaks. Errors are accumulated as w_j * squared prediction
// error in original outcome units. Ties select the larger lambda. Fully
// deterministic; folds may run concurrently.
inline LassoPath loocv_select(const ClusterFrame& cf, const StandardizedDesign& full_design,
                              std::vector<double> grid, const StandardizeOptions& sopts,
                              const LassoOptions& opts = {},
                              std::span<const double> pf_covariate = {}) {
    if (cf.m < 3) {
        throw ValidationError("leave-one-out CV requires at least 3 clusters; "
                              "run the estimator without covariate selection instead");
    }
    const auto pf_full = design_penalty_factors(full_design, pf_covariate);
    LassoPath path = detail::fit_path_unchecked(full_design, std::move(grid), opts, pf_full);

    const int n_lambda = static_cast<int>(path.lambda_grid.size());
    std::vector<std::vector<double>> fold_errors(cf.m);

    StandardizeOptions fold_sopts = sopts;
    fold_sopts.drop_zero_variance = true; // a fold may flatten a covariate

    parallel_for(cf.m, opts.n_threads, [&](int j) {
        const ClusterFrame cf_train = drop_cluster(cf, j);
        const StandardizedDesign d_train = center_and_standardize(cf_train, fold_sopts);
        const auto pf_train = design_penalty_factors(d_train, pf_covariate);

        // Held-out cluster, transformed with training centers and scales.
        std::vector<double> z_test(d_train.n_cols());
        z_test[0] = cf.t[j] - d_train.p_star;
        for (int col = 1; col < d_train.n_cols(); ++col) {
            const int q = d_train.kept_covariates[col - 1];
            z_test[col] = (cf.xbar_at(j, q) - d_train.center[col - 1]) / d_train.scale_factors[col - 1];
        }
        const double ytilde_test = cf.ybar[j] - d_train.ybar_grand;

        auto& errs = fold_errors[j];
        errs.assign(n_lambda, 0.0);
        std::vector<double> coefs(d_train.n_cols(), 0.0);
        std::vector<double> resid(d_train.ytilde);
        const double kkt_tol = opts.kkt_tol_factor * lambda_max(d_train, pf_train, opts);
        for (int li = 0; li < n_lambda; ++li) {
            detail::descend(d_train, path.lambda_grid[li], opts, pf_train, kkt_tol, coefs, resid);
            double pred = 0.0;
            for (int col = 0; col < d_train.n_cols(); ++col) pred += coefs[col] * z_test[col];
            pred *= d_train.outcome_scale;
            const double e = ytilde_test - pred;
            errs[li] = cf.w[j] * e * e;
        }
    });

    path.cv_errors.assign(n_lambda, 0.0);
    for (int j = 0; j < cf.m; ++j) {
        for (int li = 0; li < n_lambda; ++li) path.cv_errors[li] += fold_errors[j][li];
    }
    path.selected_index = 0;
    for (int li = 1; li < n_lambda; ++li) {
        if (path.cv_errors[li] < path.cv_errors[path.selected_index]) path.selected_index = li;
    }
    path.lambda_selected = path.lambda_grid[path.selected_index];
    return path;
}

// Nonzero covariate coefficients at the selected lambda, mapped back to
// ClusterFrame covariate indices. The treatment coefficient is flagged
// separately and never counted as a covariate.
inline Selection selected_covariates(const LassoPath& path, const StandardizedDesign& d) {
    if (path.selected_index < 0) throw ValidationError("path has no selected lambda");
    const auto& coefs = path.coefs[path.selected_index];
    Selection sel;
    sel.treatment_selected = coefs[0] != 0.0;
    for (int col = 1; col < d.n_cols(); ++col) {
        if (coefs[col] != 0.0) sel.covariates.push_back(d.kept_covariates[col - 1]);
    }
    return sel;
}

} // namespace crtlasso
