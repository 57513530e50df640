#include "doctest.h"

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "crtlasso/data.hpp"
#include "crtlasso/rng.hpp"
#include "crtlasso/wls.hpp"
#include "oracles.hpp"

using namespace crtlasso;

namespace {

// Four clusters, two per arm, unit weights, one record per cluster with
// cluster means (1, 3 | 0, 2) treated | control.
StudyFrame four_cluster_frame() {
    StudyFrame frame;
    const double ybar[4] = {1.0, 3.0, 0.0, 2.0};
    const int treat[4] = {1, 1, 0, 0};
    for (int j = 0; j < 4; ++j) {
        const int c = frame.add_cluster("c" + std::to_string(j), treat[j]);
        frame.add_record(c, ybar[j], 1.0, {});
    }
    return frame;
}

StudyFrame random_frame(std::uint64_t seed, int m, int per_cluster, int v,
                        double weight_spread = 0.0) {
    Rng rng(seed);
    std::vector<std::string> names;
    for (int q = 0; q < v; ++q) names.push_back("x" + std::to_string(q + 1));
    StudyFrame frame(names);
    for (int j = 0; j < m; ++j) {
        const int c = frame.add_cluster("c" + std::to_string(j), j % 2);
        const double uj = rng.normal();
        for (int i = 0; i < per_cluster; ++i) {
            std::vector<double> x(v);
            for (int q = 0; q < v; ++q) x[q] = rng.normal() + 0.5 * uj;
            double y = uj + rng.normal();
            for (int q = 0; q < v; ++q) y += 0.4 * (q + 1) * x[q];
            frame.add_record(c, y, 1.0 + weight_spread * rng.uniform(), x);
        }
    }
    return frame;
}

// Difference of arm-level averages of weighted cluster means, weighted by
// cluster weight.
double diff_in_weighted_means(const ClusterFrame& cf) {
    double num1 = 0, den1 = 0, num0 = 0, den0 = 0;
    for (int j = 0; j < cf.m; ++j) {
        if (cf.t[j] == 1) {
            num1 += cf.w[j] * cf.ybar[j];
            den1 += cf.w[j];
        } else {
            num0 += cf.w[j] * cf.ybar[j];
            den0 += cf.w[j];
        }
    }
    return num1 / den1 - num0 / den0;
}

} // namespace

TEST_CASE("no-covariate fit equals difference in weighted means") {
    const StudyFrame frame = random_frame(404, 10, 6, 2, 1.0);
    const ClusterFrame cf = aggregate(frame);
    const WlsFit fit = fit_wls(frame, std::vector<int>{});
    CHECK(fit.beta1 == doctest::Approx(diff_in_weighted_means(cf)).epsilon(1e-10));
}

TEST_CASE("four-cluster hand example: estimate 1, variance 2") {
    const StudyFrame frame = four_cluster_frame();
    const ClusterFrame cf = aggregate(frame);
    const WlsFit fit = fit_wls(frame, std::vector<int>{});
    CHECK(fit.beta1 == doctest::Approx(1.0).epsilon(1e-12));

    // Hand derivation: p* = 1/2, beta0 = 1.5; residual means are +/-1 in
    // each arm, s2(1) = s2(0) = 2 with divisor (2 - 0 - 1) = 1, so
    // Var = 2/2 + 2/2 = 2 and se = sqrt(2).
    const AteEstimate est = designbased_se(fit, cf);
    CHECK(est.s2_1 == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(est.s2_0 == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(est.se == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(est.r2_tx == 0.0);
    CHECK(est.df == 2);
}

TEST_CASE("k=0 reduction: no R2 factor at all") {
    const StudyFrame frame = random_frame(11, 8, 5, 0);
    const ClusterFrame cf = aggregate(frame);
    const AteEstimate est = designbased_se(fit_wls(frame, std::vector<int>{}), cf);
    CHECK(est.r2_tx == 0.0);
    CHECK(est.se == std::sqrt(est.s2_1 / cf.m1 + est.s2_0 / cf.m0));
}

TEST_CASE("insufficient degrees of freedom is rejected up front") {
    // m = 4, p* = 1/2, k = 2: m1 - k p* - 1 = 0.
    Rng rng(8);
    StudyFrame frame({"x1", "x2"});
    for (int j = 0; j < 4; ++j) {
        const int c = frame.add_cluster("c" + std::to_string(j), j % 2);
        for (int i = 0; i < 4; ++i) {
            frame.add_record(c, rng.normal(), 1.0, {rng.normal(), rng.normal()});
        }
    }
    CHECK_THROWS_AS((void)fit_wls(frame, std::vector<int>{0, 1}), InsufficientDfError);
}

TEST_CASE("orthogonalized covariate leaves the estimate unchanged") {
    StudyFrame base = random_frame(2024, 12, 5, 1);
    const int n = base.n();

    // Build a column orthogonal (under the weights) to the span of the
    // intercept, the treatment deviation, the existing covariate, and the
    // outcome: Gram-Schmidt the basis first, then strip g's projections.
    const ClusterFrame cf = aggregate(base);
    Rng rng(99);
    std::vector<double> g(n);
    std::vector<std::vector<double>> basis(4, std::vector<double>(n));
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) {
        g[i] = rng.normal();
        basis[0][i] = 1.0;
        basis[1][i] = base.treatment(base.cluster(i)) - cf.p_star;
        basis[2][i] = base.x(i, 0);
        basis[3][i] = base.y(i);
        w[i] = base.w(i);
    }
    auto wdot = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        for (int i = 0; i < n; ++i) s += w[i] * a[i] * b[i];
        return s;
    };
    for (std::size_t c = 0; c < basis.size(); ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            const double proj = wdot(basis[c], basis[p]) / wdot(basis[p], basis[p]);
            for (int i = 0; i < n; ++i) basis[c][i] -= proj * basis[p][i];
        }
    }
    for (const auto& b : basis) {
        const double proj = wdot(g, b) / wdot(b, b);
        for (int i = 0; i < n; ++i) g[i] -= proj * b[i];
    }

    StudyFrame augmented({"x1", "g"});
    for (int i = 0; i < n; ++i) {
        augmented.add_record(augmented.add_cluster(base.cluster_id(base.cluster(i)),
                                                   base.treatment(base.cluster(i))),
                             base.y(i), base.w(i), {base.x(i, 0), g[i]});
    }
    const WlsFit fit_without = fit_wls(base, std::vector<int>{0});
    const WlsFit fit_with = fit_wls(augmented, std::vector<int>{0, 1});
    CHECK(fit_with.beta1 == doctest::Approx(fit_without.beta1).epsilon(1e-10));
}

TEST_CASE("centered fit matches a raw-covariate fit with intercept, and the variance formula "
          "matches an independent implementation") {
    const StudyFrame frame = random_frame(55, 10, 7, 3, 0.5);
    const ClusterFrame cf = aggregate(frame);
    const std::vector<int> subset{0, 1, 2};
    const WlsFit fit = fit_wls(frame, subset);
    const AteEstimate est = designbased_se(fit, cf);

    // Independent computation: raw covariates, explicit intercept, Eigen
    // least squares, then the cluster-level variance pieces from scratch.
    const int n = frame.n();
    const int k = 3;
    Eigen::MatrixXd x(n, 2 + k);
    Eigen::VectorXd yv(n);
    for (int i = 0; i < n; ++i) {
        const double sw = std::sqrt(frame.w(i));
        x(i, 0) = sw;
        x(i, 1) = sw * (frame.treatment(frame.cluster(i)) - cf.p_star);
        for (int c = 0; c < k; ++c) x(i, 2 + c) = sw * frame.x(i, c); // raw, not centered
        yv(i) = sw * frame.y(i);
    }
    const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(yv);
    CHECK(fit.beta1 == doctest::Approx(beta(1)).epsilon(1e-10));

    // Cluster residual means from the raw fit.
    std::vector<double> resid_mean(cf.m, 0.0), wj(cf.m, 0.0);
    for (int i = 0; i < n; ++i) {
        const int j = frame.cluster(i);
        double pred = beta(0) + beta(1) * (frame.treatment(j) - cf.p_star);
        for (int c = 0; c < k; ++c) pred += beta(2 + c) * frame.x(i, c);
        resid_mean[j] += frame.w(i) * (frame.y(i) - pred);
        wj[j] += frame.w(i);
    }
    double sum1 = 0, sum0 = 0;
    for (int j = 0; j < cf.m; ++j) {
        resid_mean[j] /= wj[j];
        CHECK(resid_mean[j] == doctest::Approx(fit.cluster_residual_mean[j]).epsilon(1e-9));
        const double term = wj[j] * wj[j] * resid_mean[j] * resid_mean[j];
        (cf.t[j] == 1 ? sum1 : sum0) += term;
    }
    const double s2_1 = sum1 / ((cf.m1 - k * cf.p_star - 1.0) * cf.wbar1 * cf.wbar1);
    const double s2_0 = sum0 / ((cf.m0 - k * (1.0 - cf.p_star) - 1.0) * cf.wbar0 * cf.wbar0);

    // R2 of Ttilde on the covariates over the estimation sample (weighted;
    // intercept included since the covariates are raw here).
    const Eigen::VectorXd tcol = x.col(1);
    Eigen::MatrixXd xcov(n, 1 + k);
    xcov.col(0) = x.col(0);
    xcov.rightCols(k) = x.rightCols(k);
    const Eigen::VectorXd bg = xcov.colPivHouseholderQr().solve(tcol);
    const double r2 = 1.0 - (tcol - xcov * bg).squaredNorm() / tcol.squaredNorm();
    CHECK(est.r2_tx == doctest::Approx(r2).epsilon(1e-9));

    const double var = (s2_1 / cf.m1 + s2_0 / cf.m0) / (1.0 - r2);
    CHECK(est.se == doctest::Approx(std::sqrt(var)).epsilon(1e-10));
    CHECK(est.df == cf.m - k - 2);
}

TEST_CASE("cluster-level covariates: individual and cluster-level fits coincide") {
    Rng rng(66);
    StudyFrame frame({"z1", "z2"});
    std::vector<std::array<double, 2>> cluster_x;
    for (int j = 0; j < 10; ++j) {
        const int c = frame.add_cluster("c" + std::to_string(j), j % 2);
        const double z1 = rng.normal(), z2 = rng.uniform();
        cluster_x.push_back({z1, z2});
        const int nj = 3 + (j % 4);
        for (int i = 0; i < nj; ++i) {
            frame.add_record(c, rng.normal() + z1 - 2.0 * z2, 1.0 + rng.uniform(), {z1, z2});
        }
    }
    const ClusterFrame cf = aggregate(frame);

    StudyFrame collapsed({"z1", "z2"});
    for (int j = 0; j < cf.m; ++j) {
        const int c = collapsed.add_cluster(cf.cluster_ids[j], cf.t[j]);
        collapsed.add_record(c, cf.ybar[j], cf.w[j], {cluster_x[j][0], cluster_x[j][1]});
    }
    const WlsFit fit_ind = fit_wls(frame, std::vector<int>{0, 1});
    const WlsFit fit_agg = fit_wls(collapsed, std::vector<int>{0, 1});
    CHECK(fit_ind.beta1 == doctest::Approx(fit_agg.beta1).epsilon(1e-10));

    // Same variance estimate from either representation.
    const AteEstimate est_ind = designbased_se(fit_ind, cf);
    const AteEstimate est_agg = designbased_se(fit_agg, aggregate(collapsed));
    CHECK(est_ind.se == doctest::Approx(est_agg.se).epsilon(1e-10));
}

TEST_CASE("duplicating individuals leaves the standard error unchanged") {
    const StudyFrame base = random_frame(123, 8, 4, 2, 1.0);
    StudyFrame doubled({"x1", "x2"});
    for (int rep = 0; rep < 2; ++rep) {
        for (int i = 0; i < base.n(); ++i) {
            const int j = base.cluster(i);
            doubled.add_record(doubled.add_cluster(base.cluster_id(j), base.treatment(j)),
                               base.y(i), base.w(i), {base.x(i, 0), base.x(i, 1)});
        }
    }
    const std::vector<int> subset{0, 1};
    const AteEstimate a = designbased_se(fit_wls(base, subset), aggregate(base));
    const AteEstimate b = designbased_se(fit_wls(doubled, subset), aggregate(doubled));
    CHECK(a.estimate == doctest::Approx(b.estimate).epsilon(1e-10));
    CHECK(a.se == doctest::Approx(b.se).epsilon(1e-10));
}

TEST_CASE("rank-deficient design names a dependent column") {
    Rng rng(9);
    StudyFrame frame({"x1", "x1_copy"});
    for (int j = 0; j < 8; ++j) {
        const int c = frame.add_cluster("c" + std::to_string(j), j % 2);
        for (int i = 0; i < 3; ++i) {
            const double xv = rng.normal();
            frame.add_record(c, rng.normal(), 1.0, {xv, xv});
        }
    }
    CHECK_THROWS_AS((void)fit_wls(frame, std::vector<int>{0, 1}), RankDeficientError);
}

TEST_CASE("degenerate R2: cluster-level regression flags a covariate equal to Ttilde") {
    StudyFrame frame({"ttilde"});
    for (int j = 0; j < 6; ++j) {
        const int t = j % 2;
        const int c = frame.add_cluster("c" + std::to_string(j), t);
        frame.add_record(c, j * 1.0, 1.0, {t - 0.5});
    }
    const ClusterFrame cf = aggregate(frame);
    CHECK_THROWS_AS((void)r2_treatment_on_covariates(cf, std::vector<int>{0}),
                    DegenerateRSquaredError);
    CHECK(r2_treatment_on_covariates(cf, std::vector<int>{}) == 0.0);
}

TEST_CASE("infer: null estimate, reference quantiles") {
    AteEstimate est;
    est.estimate = 0.0;
    est.se = 1.3;
    est.df = 12;
    est.p_value = 1.0;
    const TestResult res = infer(est, 0.05);
    CHECK(res.p_value == doctest::Approx(1.0));
    CHECK(res.ci_low == doctest::Approx(-res.ci_high).epsilon(1e-12));
    CHECK_FALSE(res.reject);

    // df from m=20, k=3 is 15; the 97.5% t quantile is 2.1314...
    AteEstimate est2;
    est2.estimate = 1.0;
    est2.se = 0.5;
    est2.df = 20 - 3 - 2;
    const TestResult res2 = infer(est2, 0.05);
    CHECK(res2.t_critical == doctest::Approx(2.131449545559323).epsilon(1e-9));

    CHECK_THROWS_AS((void)infer(est2, 1.5), ValidationError);
}

TEST_CASE("fit satisfies the weighted normal equations") {
    const StudyFrame frame = random_frame(808, 10, 6, 2, 0.7);
    const ClusterFrame cf = aggregate(frame);
    const std::vector<int> subset{0, 1};
    const WlsFit fit = fit_wls(frame, subset);

    // Gradient of the weighted SSE at the fit, one entry per column of
    // [1, Ttilde, xtilde]; relative to the outcome scale it must vanish.
    const int n = frame.n();
    std::vector<double> xmean(2, 0.0);
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) {
        wsum += frame.w(i);
        for (int c = 0; c < 2; ++c) xmean[c] += frame.w(i) * frame.x(i, subset[c]);
    }
    for (double& mu : xmean) mu /= wsum;
    double g0 = 0, g1 = 0, g2 = 0, g3 = 0, scale = 0;
    for (int i = 0; i < n; ++i) {
        const int j = frame.cluster(i);
        const double tt = frame.treatment(j) - fit.p_star;
        double pred = fit.beta0 + fit.beta1 * tt;
        for (int c = 0; c < 2; ++c) pred += fit.gamma[c] * (frame.x(i, subset[c]) - xmean[c]);
        const double r = frame.w(i) * (frame.y(i) - pred);
        g0 += r;
        g1 += r * tt;
        g2 += r * (frame.x(i, 0) - xmean[0]);
        g3 += r * (frame.x(i, 1) - xmean[1]);
        scale += frame.w(i) * frame.y(i) * frame.y(i);
    }
    for (double g : {g0, g1, g2, g3}) CHECK(std::abs(g) / scale < 1e-8);
}

TEST_CASE("subset order does not change the estimate") {
    const StudyFrame frame = random_frame(31337, 12, 6, 3, 0.3);
    const ClusterFrame cf = aggregate(frame);
    const AteEstimate a = designbased_se(fit_wls(frame, std::vector<int>{0, 2}), cf);
    const AteEstimate b = designbased_se(fit_wls(frame, std::vector<int>{2, 0}), cf);
    CHECK(a.estimate == doctest::Approx(b.estimate).epsilon(1e-12));
    CHECK(a.se == doctest::Approx(b.se).epsilon(1e-12));
}
