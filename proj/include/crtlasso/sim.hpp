#pragma once

// Monte Carlo harness over the randomization distribution.
//
// A finite population of potential outcomes is generated once per base
// sample:
//
//   Y_ij(0) = sum_q x_ij,q g_q + u_j + e_ij      (first k covariates active)
//   Y_ij(1) = Y_ij(0) + tau_j + theta_ij
//   x_ij    = u_Xj + e_Xij,   u_Xj, e_Xij ~ N(0, Sigma scaled by ICC share)
//
// with Sigma_gh = rho^|g-h|, g_q drawn from t(3), and variances solved so
// the regression R^2 and the intraclass correlation hit their targets and
// the treatment-effect terms carry a set fraction of Var(Y(0)). Cluster
// sizes are uniform on [nj_min, nj_max]; individuals carry weight 1 so a
// cluster's weight is its sample size.
//
// Replications then redraw the treatment assignment on the fixed
// population, run the full two-stage pipeline plus the true-covariate WLS
// benchmark, and aggregate selection counts, bias, Type 1 error, coverage,
// and standard-error comparisons. Replications are independent tasks with
// counter-derived seeds; aggregation reduces in replication order, so
// reports do not depend on the thread count.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crtlasso/data.hpp"
#include "crtlasso/errors.hpp"
#include "crtlasso/parallel.hpp"
#include "crtlasso/rng.hpp"
#include "crtlasso/stats.hpp"
#include "crtlasso/two_stage.hpp"
#include "crtlasso/wls.hpp"

namespace crtlasso {

struct SimConfig {
    int m = 40;                 // clusters
    double p = 0.6;             // treatment assignment rate
    int k = 5;                  // covariates with nonzero coefficients
    int v = 10;                 // total candidate covariates
    double rho = 0.0;           // AR(1) covariate correlation
    double icc = 0.10;          // intraclass correlation of the error terms
    double r2_target = 0.5;     // regression R^2 of the outcome model
    double het_frac = 0.05;     // treatment-effect share of Var(Y(0))
    int nj_min = 40;
    int nj_max = 80;
    int n_reps = 1000;
    int n_base_samples = 1;
    std::uint64_t seed = 1;
    int n_threads = 0;          // 0: hardware concurrency
    bool scale_x_blocks_by_icc = true; // false: both covariate blocks draw from unscaled Sigma
    PipelineConfig pipeline;

    void validate() const {
        if (m < 2) throw ValidationError("m must be at least 2");
        if (!(p > 0.0 && p < 1.0)) throw ValidationError("p must be in (0, 1)");
        if (k < 0 || k > v) throw ValidationError("k must satisfy 0 <= k <= v");
        if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("rho must be in [0, 1)");
        if (!(icc > 0.0 && icc < 1.0)) throw ValidationError("icc must be in (0, 1)");
        if (!(r2_target > 0.0 && r2_target < 1.0)) throw ValidationError("r2_target must be in (0, 1)");
        if (het_frac < 0.0) throw ValidationError("het_frac must be nonnegative");
        if (nj_min < 1 || nj_max < nj_min) throw ValidationError("invalid cluster size range");
        if (n_base_samples < 1) throw ValidationError("n_base_samples must be positive");
        const int m1 = static_cast<int>(std::lround(m * p));
        if (m1 < 1 || m1 > m - 1) throw ValidationError("m * p must leave both arms non-empty");
    }
};

struct VarianceComponents {
    double var_u = 0.0;
    double var_e = 0.0;
    double var_tau = 0.0;
    double var_theta = 0.0;
    double var_uX = 0.0;     // scale applied to Sigma for the cluster block
    double var_eX = 0.0;     // scale applied to Sigma for the individual block
    double signal_var = 0.0; // g' Sigma g
    double total_var_y0 = 0.0;
};

struct FinitePopulation {
    int m = 0, v = 0, k = 0;
    std::vector<int> nj;
    std::vector<int> cluster_of;      // per individual
    std::vector<double> y0, y1;
    std::vector<double> x;            // n x v, row-major
    std::vector<double> gamma_true;   // length k
    VarianceComponents components;
    double realized_ate = 0.0;        // size-weighted mean of Y(1) - Y(0)
    double realized_sd_y0 = 0.0;
    double realized_r2 = 0.0;
    double realized_icc = 0.0;
    int n_total = 0;

    std::span<const double> x_row(int i) const {
        return {x.data() + static_cast<std::size_t>(i) * v, static_cast<std::size_t>(v)};
    }
};

// Finite-population variance and moment summaries of the working model,
// computed from the full potential-outcome table (simulation only). The
// subset picks which covariates form xtilde; gamma aligns with it.
struct FinitePopVariance {
    double s2_eps1 = 0.0, s2_eps0 = 0.0, s2_eps10 = 0.0;
    double s2_w = 0.0;
    double v_ate = 0.0;      // (1-p)/p S2e(1) + p/(1-p) S2e(0) + 2 S2e(1,0)
    double var_beta1 = 0.0;  // v_ate / m
    Eigen::MatrixXd s2_x, s2_r1, s2_r0, s2_r10, v_r, v_gamma;
};

// Solves the error variances from the targets. The signal variance is
// g' Sigma g on the active block; u/e split by ICC; treatment-effect
// variance is het_frac of Var(Y(0)), split by the same ICC.
inline VarianceComponents solve_variance_components(const SimConfig& cfg,
                                                    std::span<const double> gamma) {
    VarianceComponents vc;
    for (int g = 0; g < cfg.k; ++g) {
        for (int h = 0; h < cfg.k; ++h) {
            vc.signal_var += gamma[g] * gamma[h] * std::pow(cfg.rho, std::abs(g - h));
        }
    }
    // With no signal the R^2 target is vacuous; use unit error variance.
    const double noise =
        vc.signal_var > 0.0 ? vc.signal_var * (1.0 - cfg.r2_target) / cfg.r2_target : 1.0;
    vc.var_u = cfg.icc * noise;
    vc.var_e = (1.0 - cfg.icc) * noise;
    vc.total_var_y0 = vc.signal_var + noise;
    const double het = cfg.het_frac * vc.total_var_y0;
    vc.var_tau = cfg.icc * het;
    vc.var_theta = (1.0 - cfg.icc) * het;
    vc.var_uX = cfg.scale_x_blocks_by_icc ? cfg.icc : 1.0;
    vc.var_eX = cfg.scale_x_blocks_by_icc ? 1.0 - cfg.icc : 1.0;
    return vc;
}

namespace detail {

inline Eigen::MatrixXd ar1_cholesky(int v, double rho) {
    Eigen::MatrixXd sigma(v, v);
    for (int g = 0; g < v; ++g) {
        for (int h = 0; h < v; ++h) sigma(g, h) = std::pow(rho, std::abs(g - h));
    }
    return Eigen::LLT<Eigen::MatrixXd>(sigma).matrixL();
}

} // namespace detail

// Draws one fixed finite population. The same seed reproduces the
// population bit-for-bit.
inline FinitePopulation generate_population(const SimConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    FinitePopulation pop;
    pop.m = cfg.m;
    pop.v = cfg.v;
    pop.k = cfg.k;

    pop.gamma_true.resize(cfg.k);
    for (int q = 0; q < cfg.k; ++q) pop.gamma_true[q] = rng.student_t(3);
    pop.components = solve_variance_components(cfg, pop.gamma_true);
    const VarianceComponents& vc = pop.components;

    pop.nj.resize(cfg.m);
    pop.n_total = 0;
    for (int j = 0; j < cfg.m; ++j) {
        pop.nj[j] = static_cast<int>(rng.uniform_int(cfg.nj_min, cfg.nj_max));
        pop.n_total += pop.nj[j];
    }
    pop.cluster_of.reserve(pop.n_total);
    pop.y0.reserve(pop.n_total);
    pop.y1.reserve(pop.n_total);
    pop.x.reserve(static_cast<std::size_t>(pop.n_total) * cfg.v);

    const bool correlated = cfg.rho != 0.0 && cfg.v > 1;
    Eigen::MatrixXd chol;
    if (correlated) chol = detail::ar1_cholesky(cfg.v, cfg.rho);
    const double sd_uX = std::sqrt(vc.var_uX);
    const double sd_eX = std::sqrt(vc.var_eX);
    const double sd_u = std::sqrt(vc.var_u);
    const double sd_e = std::sqrt(vc.var_e);
    const double sd_tau = std::sqrt(vc.var_tau);
    const double sd_theta = std::sqrt(vc.var_theta);

    std::vector<double> zdraw(cfg.v), ux(cfg.v), ex(cfg.v);
    auto draw_block = [&](std::vector<double>& out, double sd) {
        for (int q = 0; q < cfg.v; ++q) zdraw[q] = rng.normal();
        if (correlated) {
            for (int q = 0; q < cfg.v; ++q) {
                double acc = 0.0;
                for (int h = 0; h <= q; ++h) acc += chol(q, h) * zdraw[h];
                out[q] = sd * acc;
            }
        } else {
            for (int q = 0; q < cfg.v; ++q) out[q] = sd * zdraw[q];
        }
    };

    // Accumulators for realized moments of the generated draws.
    double sum_u = 0.0, ss_u = 0.0;
    double sum_e = 0.0, ss_e = 0.0;
    double sum_sig = 0.0, ss_sig = 0.0;
    double sum_y0 = 0.0, ss_y0 = 0.0;
    double ate_num = 0.0;

    for (int j = 0; j < cfg.m; ++j) {
        draw_block(ux, sd_uX);
        const double u = rng.normal(0.0, sd_u);
        const double tau = rng.normal(0.0, sd_tau);
        sum_u += u;
        ss_u += u * u;
        for (int i = 0; i < pop.nj[j]; ++i) {
            draw_block(ex, sd_eX);
            const double e = rng.normal(0.0, sd_e);
            const double theta = rng.normal(0.0, sd_theta);
            double signal = 0.0;
            for (int q = 0; q < cfg.v; ++q) {
                const double xv = ux[q] + ex[q];
                pop.x.push_back(xv);
                if (q < cfg.k) signal += xv * pop.gamma_true[q];
            }
            const double y0 = signal + u + e;
            const double y1 = y0 + tau + theta;
            pop.cluster_of.push_back(j);
            pop.y0.push_back(y0);
            pop.y1.push_back(y1);
            sum_e += e;
            ss_e += e * e;
            sum_sig += signal;
            ss_sig += signal * signal;
            sum_y0 += y0;
            ss_y0 += y0 * y0;
            ate_num += y1 - y0;
        }
    }

    const double n = pop.n_total;
    auto var_of = [](double sum, double ss, double count) {
        if (count < 2.0) return 0.0;
        return (ss - sum * sum / count) / (count - 1.0);
    };
    const double var_u_hat = var_of(sum_u, ss_u, cfg.m);
    const double var_e_hat = var_of(sum_e, ss_e, n);
    const double var_sig_hat = var_of(sum_sig, ss_sig, n);
    const double var_y0_hat = var_of(sum_y0, ss_y0, n);
    pop.realized_sd_y0 = std::sqrt(var_y0_hat);
    pop.realized_r2 = var_y0_hat > 0.0 ? var_sig_hat / var_y0_hat : 0.0;
    pop.realized_icc = (var_u_hat + var_e_hat) > 0.0 ? var_u_hat / (var_u_hat + var_e_hat) : 0.0;
    pop.realized_ate = ate_num / n; // w_ij = 1: the size-weighted mean effect
    return pop;
}

// Observed-data frame for one assignment draw: y = T Y(1) + (1-T) Y(0),
// unit weights, all candidate covariates.
inline StudyFrame make_observed_frame(const FinitePopulation& pop, std::span<const int> t) {
    std::vector<std::string> names(pop.v);
    for (int q = 0; q < pop.v; ++q) names[q] = "x" + std::to_string(q + 1);
    StudyFrame frame(std::move(names));
    std::vector<int> cluster_index(pop.m);
    for (int j = 0; j < pop.m; ++j) {
        cluster_index[j] = frame.add_cluster("c" + std::to_string(j + 1), t[j]);
    }
    for (int i = 0; i < pop.n_total; ++i) {
        const int j = pop.cluster_of[i];
        frame.add_record(cluster_index[j], t[j] == 1 ? pop.y1[i] : pop.y0[i], 1.0, pop.x_row(i));
    }
    return frame;
}

// Finite-population variance/moment summaries of the working model with a
// fixed coefficient vector on `subset` (gamma = 0 and empty subset give the
// no-covariate case).
inline FinitePopVariance true_finite_pop_variance(const FinitePopulation& pop, double p,
                                                  std::span<const int> subset = {},
                                                  std::span<const double> gamma = {}) {
    const int m = pop.m;
    const int k = static_cast<int>(subset.size());
    std::vector<double> wj(m, 0.0), ybar1(m, 0.0), ybar0(m, 0.0);
    Eigen::MatrixXd xbar = Eigen::MatrixXd::Zero(m, k);
    for (int i = 0; i < pop.n_total; ++i) {
        const int j = pop.cluster_of[i];
        wj[j] += 1.0;
        ybar1[j] += pop.y1[i];
        ybar0[j] += pop.y0[i];
        for (int c = 0; c < k; ++c) xbar(j, c) += pop.x[static_cast<std::size_t>(i) * pop.v + subset[c]];
    }
    double w_total = 0.0;
    for (int j = 0; j < m; ++j) {
        ybar1[j] /= wj[j];
        ybar0[j] /= wj[j];
        for (int c = 0; c < k; ++c) xbar(j, c) /= wj[j];
        w_total += wj[j];
    }
    const double wbar = w_total / m;
    double grand1 = 0.0, grand0 = 0.0;
    Eigen::RowVectorXd xgrand = Eigen::RowVectorXd::Zero(k);
    for (int j = 0; j < m; ++j) {
        grand1 += wj[j] * ybar1[j];
        grand0 += wj[j] * ybar0[j];
        xgrand += wj[j] * xbar.row(j);
    }
    grand1 /= w_total;
    grand0 /= w_total;
    xgrand /= w_total;

    std::vector<double> eps1(m), eps0(m);
    for (int j = 0; j < m; ++j) {
        double adj = 0.0;
        for (int c = 0; c < k; ++c) adj += (xbar(j, c) - xgrand(c)) * gamma[c];
        eps1[j] = (ybar1[j] - grand1) - adj;
        eps0[j] = (ybar0[j] - grand0) - adj;
    }

    FinitePopVariance out;
    double s2w = 0.0;
    for (int j = 0; j < m; ++j) {
        const double rho2 = (wj[j] / wbar) * (wj[j] / wbar);
        out.s2_eps1 += rho2 * eps1[j] * eps1[j];
        out.s2_eps0 += rho2 * eps0[j] * eps0[j];
        out.s2_eps10 += rho2 * eps1[j] * eps0[j];
        s2w += (wj[j] - wbar) * (wj[j] - wbar);
    }
    const double denom = m - 1.0;
    out.s2_eps1 /= denom;
    out.s2_eps0 /= denom;
    out.s2_eps10 /= denom;
    out.s2_w = s2w / denom;
    out.v_ate = (1.0 - p) / p * out.s2_eps1 + p / (1.0 - p) * out.s2_eps0 + 2.0 * out.s2_eps10;
    out.var_beta1 = out.v_ate / m;

    if (k > 0) {
        Eigen::MatrixXd r1(m, k), r0(m, k);
        Eigen::RowVectorXd rbar1 = Eigen::RowVectorXd::Zero(k), rbar0 = Eigen::RowVectorXd::Zero(k);
        out.s2_x = Eigen::MatrixXd::Zero(k, k);
        for (int j = 0; j < m; ++j) {
            const Eigen::RowVectorXd xt = xbar.row(j) - xgrand;
            r1.row(j) = xt * eps1[j];
            r0.row(j) = xt * eps0[j];
            rbar1 += wj[j] * r1.row(j);
            rbar0 += wj[j] * r0.row(j);
            out.s2_x += (wj[j] / wbar) * xt.transpose() * xt;
        }
        out.s2_x /= m;
        rbar1 /= w_total;
        rbar0 /= w_total;
        out.s2_r1 = Eigen::MatrixXd::Zero(k, k);
        out.s2_r0 = Eigen::MatrixXd::Zero(k, k);
        out.s2_r10 = Eigen::MatrixXd::Zero(k, k);
        for (int j = 0; j < m; ++j) {
            const double rho2 = (wj[j] / wbar) * (wj[j] / wbar);
            const Eigen::RowVectorXd rt1 = r1.row(j) - rbar1;
            const Eigen::RowVectorXd rt0 = r0.row(j) - rbar0;
            out.s2_r1 += rho2 * rt1.transpose() * rt1;
            out.s2_r0 += rho2 * rt0.transpose() * rt0;
            out.s2_r10 += rho2 * rt1.transpose() * rt0;
        }
        out.s2_r1 /= denom;
        out.s2_r0 /= denom;
        out.s2_r10 /= denom;
        out.v_r = p * (1.0 - p) * (out.s2_r1 + out.s2_r0 - 2.0 * out.s2_r10);
        const Eigen::MatrixXd sx_inv = out.s2_x.inverse();
        out.v_gamma = sx_inv * out.v_r * sx_inv;
    }
    return out;
}

struct BaseSampleMetrics {
    double avg_selected_total = 0.0;
    double avg_selected_true = 0.0;
    double mean_bias_raw = 0.0;      // mean(est - est_true_model)
    double mean_bias_sd_units = 0.0;
    double type1_rate = 0.0;
    double coverage_rate = 0.0;          // CI contains 0
    double coverage_realized_ate = 0.0;  // CI contains the realized finite-population ATE
    double avg_est_se = 0.0;
    double emp_sd_est = 0.0;
    double true_se = 0.0;            // empirical SD of true-model estimates
    double avg_true_model_se = 0.0;
    double skewness_est = 0.0;
    double ex_kurtosis_est = 0.0;
    double realized_ate = 0.0;
    double realized_sd_y0 = 0.0;
    double realized_r2 = 0.0;
    double realized_icc = 0.0;
    int n_completed = 0;
    int n_failed = 0;
};

struct SimReport {
    bool ok = false;
    std::string error;
    // Config echo.
    int m = 0, k = 0, v = 0;
    double p = 0.0, rho = 0.0;
    int n_reps = 0, n_base_samples = 0;
    std::uint64_t seed = 0;
    // Headline metrics, averaged over base samples.
    double avg_selected_total = 0.0;
    double avg_selected_true = 0.0;
    double mean_bias_raw = 0.0;
    double mean_bias_sd_units = 0.0;
    double type1_rate = 0.0;
    double coverage_rate = 0.0;
    double coverage_realized_ate = 0.0;
    double avg_est_se = 0.0;
    double emp_sd_est = 0.0;
    double true_se = 0.0;
    double avg_true_model_se = 0.0;
    double skewness_est = 0.0;
    double ex_kurtosis_est = 0.0;
    int n_completed = 0;
    int n_failed = 0;
    std::vector<BaseSampleMetrics> per_base;
    double runtime_seconds = 0.0; // informational; excluded from canonical output
};

namespace detail {

struct RepOutcome {
    bool ok = false;
    double est = 0.0, se = 0.0, p_value = 1.0, ci_low = 0.0, ci_high = 0.0;
    double est_true = 0.0, se_true = 0.0;
    int n_selected = 0, n_selected_true = 0;
};

} // namespace detail

// One replication: draw an assignment, build the observed frame, run the
// two-stage pipeline and the true-covariate benchmark model.
inline detail::RepOutcome run_replication(const FinitePopulation& pop, const SimConfig& cfg,
                                          std::uint64_t stream) {
    Rng rng(stream);
    const int m1 = static_cast<int>(std::lround(cfg.m * cfg.p));
    const auto treated = rng.choose(cfg.m, m1);
    std::vector<int> t(cfg.m, 0);
    for (int j : treated) t[j] = 1;
    const StudyFrame frame = make_observed_frame(pop, t);

    detail::RepOutcome out;
    const TwoStageReport report = run_two_stage(frame, cfg.pipeline);
    out.est = report.ate.estimate;
    out.se = report.ate.se;
    out.p_value = report.ate.p_value;
    out.ci_low = report.ate.ci_low;
    out.ci_high = report.ate.ci_high;
    out.n_selected = static_cast<int>(report.selected_indices.size());
    for (int q : report.selected_indices) out.n_selected_true += (q < cfg.k);

    std::vector<int> true_subset(cfg.k);
    for (int q = 0; q < cfg.k; ++q) true_subset[q] = q;
    const WlsFit true_fit = fit_wls(frame, true_subset);
    const AteEstimate true_est =
        designbased_se(true_fit, aggregate(frame), cfg.pipeline.alpha, cfg.pipeline.r2_weighting);
    out.est_true = true_est.estimate;
    out.se_true = true_est.se;
    out.ok = true;
    return out;
}

inline SimReport run_simulation(const SimConfig& cfg) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    SimReport report;
    report.m = cfg.m;
    report.k = cfg.k;
    report.v = cfg.v;
    report.p = cfg.p;
    report.rho = cfg.rho;
    report.n_reps = cfg.n_reps;
    report.n_base_samples = cfg.n_base_samples;
    report.seed = cfg.seed;
    if (cfg.n_reps <= 0) {
        report.error = "zero replications requested";
        return report;
    }

    for (int base = 0; base < cfg.n_base_samples; ++base) {
        const FinitePopulation pop =
            generate_population(cfg, derive_stream(cfg.seed, 2 * static_cast<std::uint64_t>(base), 0));

        std::vector<detail::RepOutcome> results(cfg.n_reps);
        std::vector<std::string> failures(cfg.n_reps);
        parallel_for(cfg.n_reps, cfg.n_threads, [&](int rep) {
            const std::uint64_t stream =
                derive_stream(cfg.seed, 2 * static_cast<std::uint64_t>(base) + 1,
                              static_cast<std::uint64_t>(rep));
            try {
                results[rep] = run_replication(pop, cfg, stream);
            } catch (const NumericalError& err) {
                failures[rep] = err.what();
            }
        });

        BaseSampleMetrics bm;
        bm.realized_ate = pop.realized_ate;
        bm.realized_sd_y0 = pop.realized_sd_y0;
        bm.realized_r2 = pop.realized_r2;
        bm.realized_icc = pop.realized_icc;
        std::vector<double> ests, ests_true;
        ests.reserve(cfg.n_reps);
        ests_true.reserve(cfg.n_reps);
        for (int rep = 0; rep < cfg.n_reps; ++rep) {
            const auto& r = results[rep];
            if (!r.ok) {
                bm.n_failed++;
                continue;
            }
            bm.n_completed++;
            bm.avg_selected_total += r.n_selected;
            bm.avg_selected_true += r.n_selected_true;
            bm.mean_bias_raw += r.est - r.est_true;
            bm.type1_rate += (r.p_value < cfg.pipeline.alpha);
            bm.coverage_rate += (r.ci_low <= 0.0 && 0.0 <= r.ci_high);
            bm.coverage_realized_ate +=
                (r.ci_low <= pop.realized_ate && pop.realized_ate <= r.ci_high);
            bm.avg_est_se += r.se;
            bm.avg_true_model_se += r.se_true;
            ests.push_back(r.est);
            ests_true.push_back(r.est_true);
        }
        if (bm.n_completed == 0) {
            throw NumericalError("all replications failed in base sample " + std::to_string(base));
        }
        const double nc = bm.n_completed;
        bm.avg_selected_total /= nc;
        bm.avg_selected_true /= nc;
        bm.mean_bias_raw /= nc;
        bm.mean_bias_sd_units = pop.realized_sd_y0 > 0.0 ? bm.mean_bias_raw / pop.realized_sd_y0 : 0.0;
        bm.type1_rate /= nc;
        bm.coverage_rate /= nc;
        bm.coverage_realized_ate /= nc;
        bm.avg_est_se /= nc;
        bm.avg_true_model_se /= nc;
        bm.emp_sd_est = stddev(ests);
        bm.true_se = stddev(ests_true);
        bm.skewness_est = ests.size() > 2 ? skewness(ests) : 0.0;
        bm.ex_kurtosis_est = ests.size() > 3 ? excess_kurtosis(ests) : 0.0;
        report.per_base.push_back(bm);
    }

    // Average the per-base metrics; counts accumulate.
    const double nb = static_cast<double>(report.per_base.size());
    for (const auto& bm : report.per_base) {
        report.avg_selected_total += bm.avg_selected_total / nb;
        report.avg_selected_true += bm.avg_selected_true / nb;
        report.mean_bias_raw += bm.mean_bias_raw / nb;
        report.mean_bias_sd_units += bm.mean_bias_sd_units / nb;
        report.type1_rate += bm.type1_rate / nb;
        report.coverage_rate += bm.coverage_rate / nb;
        report.coverage_realized_ate += bm.coverage_realized_ate / nb;
        report.avg_est_se += bm.avg_est_se / nb;
        report.emp_sd_est += bm.emp_sd_est / nb;
        report.true_se += bm.true_se / nb;
        report.avg_true_model_se += bm.avg_true_model_se / nb;
        report.skewness_est += bm.skewness_est / nb;
        report.ex_kurtosis_est += bm.ex_kurtosis_est / nb;
        report.n_completed += bm.n_completed;
        report.n_failed += bm.n_failed;
    }
    const int attempted = report.n_completed + report.n_failed;
    if (attempted > 0 && report.n_failed > 0.05 * attempted) {
        throw NumericalError("replication failure rate " + std::to_string(report.n_failed) + "/" +
                             std::to_string(attempted) + " exceeds 5%");
    }
    report.ok = true;
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

} // namespace crtlasso
