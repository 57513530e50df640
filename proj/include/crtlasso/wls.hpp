#pragma once

// Weighted least squares estimation of the working regression model on
// individual-level data, with the design-based variance estimator for the
// treatment coefficient.
//
// The model is y_ij = b0 + b1 (T_j - p*) + xtilde_ij' g + u_ij, fit by WLS
// with the individual weights. The variance of b1 is estimated from
// regression residuals averaged to the cluster level, with separate terms
// per arm:
//
//   Var(b1) = 1/(1 - R^2) * ( s2(1)/m1 + s2(0)/m0 )
//
//   s2(1) = sum_{T_j=1} w_j^2 ebar_j^2 / ((m1 - k p* - 1) (wbar1)^2)
//   s2(0) = sum_{T_j=0} w_j^2 ebar_j^2 / ((m0 - k (1-p*) - 1) (wbar0)^2)
//
// where ebar_j is the cluster-level weighted mean residual and R^2 is the
// R-squared of a weighted regression of T_j - p* on the model covariates
// over the estimation sample. For cluster-level covariates this equals the
// w_j-weighted cluster-level regression exactly, which keeps the
// individual- and cluster-level variance estimators identical in that
// case. Tests use a t distribution with m - k - 2 degrees of freedom
// (cluster counts, not individuals).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "crtlasso/data.hpp"
#include "crtlasso/errors.hpp"
#include "crtlasso/stats.hpp"

namespace crtlasso {

struct WlsFit {
    double beta0 = 0.0;
    double beta1 = 0.0;                        // the ATE coefficient
    std::vector<double> gamma;                 // aligned with covariate_subset
    std::vector<int> covariate_subset;         // indices into frame covariates
    std::vector<double> cluster_residual_mean; // ebar_j, frame cluster order
    double p_star = 0.0;
    double r2_tx_weighted = 0.0;   // R^2 of Ttilde on the covariates, fit weights
    double r2_tx_unweighted = 0.0; // same regression, unit weights

    int k() const { return static_cast<int>(gamma.size()); }
};

struct AteEstimate {
    double estimate = 0.0;
    double se = 0.0;
    int df = 0;
    double t_stat = 0.0;
    double p_value = 1.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double s2_1 = 0.0;
    double s2_0 = 0.0;
    double r2_tx = 0.0;
    double alpha = 0.05;
};

struct TestResult {
    double p_value = 1.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double t_critical = 0.0;
    double alpha = 0.05;
    bool reject = false;
};

enum class R2Weighting { cluster_weights, none };

namespace detail {

// Degrees-of-freedom preconditions for the arm variance terms; both
// divisors must be strictly positive.
inline void check_arm_df(const ClusterFrame& cf, int k) {
    const double df1 = cf.m1 - k * cf.p_star - 1.0;
    const double df0 = cf.m0 - k * (1.0 - cf.p_star) - 1.0;
    constexpr double slack = 1e-9;
    if (df1 <= slack) throw InsufficientDfError("treatment", k * cf.p_star + 1.0, cf.m1);
    if (df0 <= slack) throw InsufficientDfError("control", k * (1.0 - cf.p_star) + 1.0, cf.m0);
}

inline int first_dropped_column(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
    const auto& perm = qr.colsPermutation().indices();
    const int rank = static_cast<int>(qr.rank());
    int dropped = static_cast<int>(perm.size()) - 1;
    for (int i = rank; i < perm.size(); ++i) dropped = std::min(dropped, static_cast<int>(perm[i]));
    return dropped;
}

} // namespace detail

// R-squared of a cluster-level regression of T_j - p* on the centered
// cluster-mean covariates in `subset`. Feeds the variance estimator; also
// exposed as a diagnostic. Throws DegenerateRSquaredError when covariates
// (near) perfectly predict assignment.
inline double r2_treatment_on_covariates(const ClusterFrame& cf, std::span<const int> subset,
                                         R2Weighting weighting = R2Weighting::cluster_weights) {
    if (subset.empty()) return 0.0;
    const int k = static_cast<int>(subset.size());
    Eigen::MatrixXd X(cf.m, k);
    Eigen::VectorXd tt(cf.m);
    double sst = 0.0;
    for (int j = 0; j < cf.m; ++j) {
        const double omega = weighting == R2Weighting::cluster_weights ? cf.w[j] : 1.0;
        const double sq = std::sqrt(omega);
        const double ttilde = cf.t[j] - cf.p_star;
        tt(j) = sq * ttilde;
        sst += omega * ttilde * ttilde;
        for (int c = 0; c < k; ++c) {
            X(j, c) = sq * (cf.xbar_at(j, subset[c]) - cf.xbar_grand[subset[c]]);
        }
    }
    Eigen::VectorXd b = X.colPivHouseholderQr().solve(tt);
    const double ssr = (tt - X * b).squaredNorm();
    double r2 = sst > 0.0 ? 1.0 - ssr / sst : 0.0;
    r2 = std::clamp(r2, 0.0, 1.0);
    if (r2 >= 1.0 - 1e-10) throw DegenerateRSquaredError(r2);
    return r2;
}

// WLS fit of the working model on individual-level data. Covariates are
// centered at their weighted grand means; the treatment regressor is
// T_j - p*. Minimizes sum_ij w_ij (y_ij - b0 - b1 Ttilde_j - xtilde_ij' g)^2.
inline WlsFit fit_wls(const StudyFrame& frame, std::span<const int> subset) {
    frame.validate();
    const int n = frame.n();
    const int k = static_cast<int>(subset.size());
    for (int q : subset) {
        if (q < 0 || q >= frame.v()) {
            throw ValidationError("covariate subset index " + std::to_string(q) + " out of range");
        }
    }

    // Cluster weights and the weighted assignment rate.
    const int m = frame.m();
    std::vector<double> wj(m, 0.0);
    for (int i = 0; i < n; ++i) wj[frame.cluster(i)] += frame.w(i);
    double w_total = 0.0, w_treated = 0.0;
    int m1 = 0, m0 = 0;
    for (int j = 0; j < m; ++j) {
        w_total += wj[j];
        if (frame.treatment(j) == 1) {
            w_treated += wj[j];
            ++m1;
        } else {
            ++m0;
        }
    }
    const double p_star = w_treated / w_total;
    {
        const double df1 = m1 - k * p_star - 1.0;
        const double df0 = m0 - k * (1.0 - p_star) - 1.0;
        constexpr double slack = 1e-9;
        if (df1 <= slack) throw InsufficientDfError("treatment", k * p_star + 1.0, m1);
        if (df0 <= slack) throw InsufficientDfError("control", k * (1.0 - p_star) + 1.0, m0);
    }

    // Weighted grand means of the selected covariates.
    std::vector<double> xmean(k, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) xmean[c] += frame.w(i) * frame.x(i, subset[c]);
    }
    for (int c = 0; c < k; ++c) xmean[c] /= w_total;

    Eigen::MatrixXd X(n, 2 + k);
    Eigen::VectorXd yv(n);
    for (int i = 0; i < n; ++i) {
        const double sq = std::sqrt(frame.w(i));
        X(i, 0) = sq;
        X(i, 1) = sq * (frame.treatment(frame.cluster(i)) - p_star);
        for (int c = 0; c < k; ++c) X(i, 2 + c) = sq * (frame.x(i, subset[c]) - xmean[c]);
        yv(i) = sq * frame.y(i);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < 2 + k) throw RankDeficientError(detail::first_dropped_column(qr));
    Eigen::VectorXd beta = qr.solve(yv);

    WlsFit fit;
    fit.beta0 = beta(0);
    fit.beta1 = beta(1);
    fit.gamma.assign(beta.data() + 2, beta.data() + 2 + k);
    fit.covariate_subset.assign(subset.begin(), subset.end());
    fit.p_star = p_star;

    // R^2 of the treatment deviation on the covariates, used by the
    // variance estimator. The centered Ttilde column has zero weighted mean
    // by construction, so no intercept is needed in the weighted version.
    if (k > 0) {
        {
            const Eigen::VectorXd tt = X.col(1);
            const auto xblock = X.rightCols(k);
            const Eigen::VectorXd bw = xblock.colPivHouseholderQr().solve(tt);
            const double sst = tt.squaredNorm();
            const double ssr = (tt - xblock * bw).squaredNorm();
            fit.r2_tx_weighted = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 0.0;
        }
        {
            Eigen::MatrixXd xu(n, 1 + k);
            Eigen::VectorXd tu(n);
            for (int i = 0; i < n; ++i) {
                xu(i, 0) = 1.0;
                tu(i) = frame.treatment(frame.cluster(i)) - p_star;
                for (int c = 0; c < k; ++c) xu(i, 1 + c) = frame.x(i, subset[c]) - xmean[c];
            }
            const double t_mean = tu.mean();
            const Eigen::VectorXd bu = xu.colPivHouseholderQr().solve(tu);
            const double sst = (tu.array() - t_mean).matrix().squaredNorm();
            const double ssr = (tu - xu * bu).squaredNorm();
            fit.r2_tx_unweighted = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 0.0;
        }
    }

    fit.cluster_residual_mean.assign(m, 0.0);
    for (int i = 0; i < n; ++i) {
        const int j = frame.cluster(i);
        double pred = fit.beta0 + fit.beta1 * (frame.treatment(j) - p_star);
        for (int c = 0; c < k; ++c) pred += fit.gamma[c] * (frame.x(i, subset[c]) - xmean[c]);
        fit.cluster_residual_mean[j] += frame.w(i) * (frame.y(i) - pred);
    }
    for (int j = 0; j < m; ++j) fit.cluster_residual_mean[j] /= wj[j];
    return fit;
}

// Design-based (upper bound) variance estimator for the ATE coefficient,
// with t inference on m - k - 2 degrees of freedom.
inline AteEstimate designbased_se(const WlsFit& fit, const ClusterFrame& cf, double alpha = 0.05,
                                  R2Weighting r2_weighting = R2Weighting::cluster_weights) {
    const int k = fit.k();
    detail::check_arm_df(cf, k);
    const int df = cf.m - k - 2;
    if (df < 1) throw InsufficientDfError("overall", k + 2.0, cf.m);

    double sum1 = 0.0, sum0 = 0.0;
    for (int j = 0; j < cf.m; ++j) {
        const double term = cf.w[j] * cf.w[j] * fit.cluster_residual_mean[j] * fit.cluster_residual_mean[j];
        if (cf.t[j] == 1) sum1 += term; else sum0 += term;
    }
    const double s2_1 = sum1 / ((cf.m1 - k * cf.p_star - 1.0) * cf.wbar1 * cf.wbar1);
    const double s2_0 = sum0 / ((cf.m0 - k * (1.0 - cf.p_star) - 1.0) * cf.wbar0 * cf.wbar0);
    const double r2 = r2_weighting == R2Weighting::cluster_weights ? fit.r2_tx_weighted
                                                                   : fit.r2_tx_unweighted;
    if (r2 >= 1.0 - 1e-10) throw DegenerateRSquaredError(r2);

    AteEstimate est;
    est.estimate = fit.beta1;
    est.s2_1 = s2_1;
    est.s2_0 = s2_0;
    est.r2_tx = r2;
    est.df = df;
    est.se = std::sqrt((s2_1 / cf.m1 + s2_0 / cf.m0) / (1.0 - r2));
    est.alpha = alpha;
    if (est.se > 0.0) {
        est.t_stat = est.estimate / est.se;
        est.p_value = student_t_pvalue(est.t_stat, df);
    } else {
        est.t_stat = est.estimate == 0.0 ? 0.0
                                         : std::copysign(std::numeric_limits<double>::infinity(),
                                                          est.estimate);
        est.p_value = est.estimate == 0.0 ? 1.0 : 0.0;
    }
    const double t_crit = student_t_quantile(1.0 - alpha / 2.0, df);
    est.ci_low = est.estimate - t_crit * est.se;
    est.ci_high = est.estimate + t_crit * est.se;
    return est;
}

// Two-sided t test and confidence interval at level 1 - alpha.
inline TestResult infer(const AteEstimate& est, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
    TestResult res;
    res.alpha = alpha;
    res.p_value = est.p_value;
    res.t_critical = student_t_quantile(1.0 - alpha / 2.0, est.df);
    res.ci_low = est.estimate - res.t_critical * est.se;
    res.ci_high = est.estimate + res.t_critical * est.se;
    res.reject = res.p_value < alpha;
    return res;
}

} // namespace crtlasso
