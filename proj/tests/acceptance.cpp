// Acceptance suite. Each criterion prints one PASS/FAIL line; the process
// exits nonzero if any criterion fails. Heavier Monte Carlo settings run
// with all available cores; everything is seeded and reproducible.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "crtlasso/crtlasso.hpp"
#include "oracles.hpp"

using namespace crtlasso;

namespace {

int failures = 0;

void report(int idx, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s -- %s\n", pass ? "PASS" : "FAIL", idx, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), format, args...);
    return std::string(buf);
}

constexpr std::uint64_t kSeed = 42;

SimConfig study_config(int m, int reps) {
    SimConfig cfg;
    cfg.m = m;
    cfg.k = m <= 20 ? 3 : 5;
    cfg.v = 10;
    cfg.rho = 0.0;
    cfg.p = 0.6;
    cfg.n_reps = reps;
    cfg.n_base_samples = 1;
    cfg.seed = kSeed;
    cfg.n_threads = 0;
    return cfg;
}

} // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();

    // --- Criteria 1-3 and 10 share the three simulation runs. ---
    const SimReport r20 = run_simulation(study_config(20, 1000));
    const SimReport r40 = run_simulation(study_config(40, 1000));
    const SimReport r80 = run_simulation(study_config(80, 1000));

    {
        const bool t1_ok = r40.type1_rate >= 0.034 && r40.type1_rate <= 0.060;
        const bool cov_ok = r40.coverage_rate >= 0.940 && r40.coverage_rate <= 0.966;
        const bool bias_ok = std::abs(r40.mean_bias_sd_units) <= 0.01;
        const bool se_ok = r40.avg_est_se >= 0.95 * r40.true_se;
        report(1, "calibration at m=40, k=5, v=10, rho=0",
               t1_ok && cov_ok && bias_ok && se_ok,
               fmt("type1=%.3f in [0.034,0.060]; coverage=%.3f in [0.940,0.966]; "
                   "|bias|=%.4f<=0.01 SD; avg SE=%.4f >= 0.95*true SE=%.4f",
                   r40.type1_rate, r40.coverage_rate, std::abs(r40.mean_bias_sd_units),
                   r40.avg_est_se, 0.95 * r40.true_se));
    }
    {
        const bool se_ok = r20.avg_est_se > r20.emp_sd_est;
        const bool cov_ok = r20.coverage_rate >= 0.95;
        report(2, "small-m conservativeness at m=20", se_ok && cov_ok,
               fmt("avg SE=%.4f > empirical SD=%.4f; coverage=%.3f >= 0.95", r20.avg_est_se,
                   r20.emp_sd_est, r20.coverage_rate));
    }
    {
        const bool trend = r20.avg_selected_true < r80.avg_selected_true;
        report(3, "true-covariate selection increases from m=20 to m=80", trend,
               fmt("avg true selected: m=20 %.2f (of 3), m=40 %.2f, m=80 %.2f (of 5)",
                   r20.avg_selected_true, r40.avg_selected_true, r80.avg_selected_true));
    }

    // --- Criterion 4: coordinate descent vs exact enumeration. ---
    {
        double worst = 0.0;
        int checked = 0;
        bool all_kkt = true;
        double worst_kkt = 0.0;
        for (std::uint64_t seed = 1; seed <= 50; ++seed) {
            Rng rng(seed * 2654435761ULL);
            StudyFrame frame({"x1", "x2", "x3"});
            for (int j = 0; j < 10; ++j) {
                const int c = frame.add_cluster("c" + std::to_string(j), j % 2);
                std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
                const double y = rng.normal() + (seed % 3 == 0 ? 1.5 * x[0] : 0.6 * x[1]);
                frame.add_record(c, y, 1.0 + rng.uniform(), x);
            }
            const StandardizedDesign d = center_and_standardize(aggregate(frame));
            const double lmax = lambda_max(d);
            const auto grid = make_lambda_grid(lmax, 20, 1e-3);
            const LassoPath path = fit_path(d, grid, {});

            std::vector<double> z(static_cast<std::size_t>(d.m) * d.n_cols());
            for (int j = 0; j < d.m; ++j) {
                for (int col = 0; col < d.n_cols(); ++col) {
                    z[j * d.n_cols() + col] = d.at(j, col);
                }
            }
            for (std::size_t li = 0; li < grid.size(); ++li) {
                const auto exact =
                    oracle::exact_lasso(d.m, d.n_cols(), z, d.ytilde, d.row_weights, grid[li]);
                if (exact.empty()) continue;
                for (int col = 0; col < d.n_cols(); ++col) {
                    worst = std::max(worst, std::abs(path.coefs[li][col] - exact[col]));
                }
                ++checked;
                // Criterion 5 piggybacks: certify every acceptance-run fit.
                const auto kkt = kkt_check(d, path.coefs[li], grid[li], 1e-6 * lmax);
                all_kkt = all_kkt && kkt.pass;
                worst_kkt = std::max(worst_kkt, kkt.max_violation / std::max(lmax, 1e-300));
            }
            // Boundary: at lambda >= lambda_max the solution is exactly zero.
            const auto zero_fit = fit_lasso(d, lmax);
            for (double c : zero_fit) all_kkt = all_kkt && (c == 0.0);
        }
        report(4, "coordinate descent matches exact enumeration on 50 problems x 20 lambdas",
               checked >= 1000 && worst < 1e-6,
               fmt("%d fits compared, max coefficient gap %.2e < 1e-6", checked, worst));
        report(5, "KKT certification of every acceptance fit (tol 1e-6 lambda_max)", all_kkt,
               fmt("max scaled violation %.2e; lambda >= lambda_max fits exactly zero",
                   worst_kkt));
    }

    // --- Criterion 6: variance estimator closed form. ---
    {
        StudyFrame frame;
        const double ybar[4] = {1.0, 3.0, 0.0, 2.0};
        const int treat[4] = {1, 1, 0, 0};
        for (int j = 0; j < 4; ++j) {
            const int c = frame.add_cluster("c" + std::to_string(j), treat[j]);
            frame.add_record(c, ybar[j], 1.0, {});
        }
        const ClusterFrame cf = aggregate(frame);
        const WlsFit fit = fit_wls(frame, std::vector<int>{});
        const AteEstimate est = designbased_se(fit, cf);
        const bool hand = std::abs(est.estimate - 1.0) <= 1e-12 &&
                          std::abs(est.se - std::sqrt(2.0)) <= 1e-12;
        const bool reduction =
            est.r2_tx == 0.0 && est.se == std::sqrt(est.s2_1 / cf.m1 + est.s2_0 / cf.m0);
        report(6, "four-cluster closed form and k=0 reduction", hand && reduction,
               fmt("estimate=%.15f se=%.15f s2(1)=%.1f s2(0)=%.1f R2=%g", est.estimate, est.se,
                   est.s2_1, est.s2_0, est.r2_tx));
    }

    // --- Criterion 7: finite-population variance oracle. ---
    {
        SimConfig cfg = study_config(40, 0);
        const FinitePopulation pop = generate_population(cfg, derive_stream(kSeed, 0, 0));
        const FinitePopVariance fpv = true_finite_pop_variance(pop, cfg.p);

        std::vector<double> wj(pop.m, 0.0), y1bar(pop.m, 0.0), y0bar(pop.m, 0.0);
        for (int i = 0; i < pop.n_total; ++i) {
            const int j = pop.cluster_of[i];
            wj[j] += 1.0;
            y1bar[j] += pop.y1[i];
            y0bar[j] += pop.y0[i];
        }
        for (int j = 0; j < pop.m; ++j) {
            y1bar[j] /= wj[j];
            y0bar[j] /= wj[j];
        }
        Rng rng(derive_stream(kSeed, 7, 7));
        const int m1 = static_cast<int>(std::lround(cfg.m * cfg.p));
        std::vector<double> ests;
        ests.reserve(10000);
        for (int r = 0; r < 10000; ++r) {
            const auto treated = rng.choose(pop.m, m1);
            std::vector<char> is_treated(pop.m, 0);
            for (int j : treated) is_treated[j] = 1;
            double num1 = 0, den1 = 0, num0 = 0, den0 = 0;
            for (int j = 0; j < pop.m; ++j) {
                if (is_treated[j]) {
                    num1 += wj[j] * y1bar[j];
                    den1 += wj[j];
                } else {
                    num0 += wj[j] * y0bar[j];
                    den0 += wj[j];
                }
            }
            ests.push_back(num1 / den1 - num0 / den0);
        }
        const double emp = stddev(ests);
        const double theory = std::sqrt(fpv.var_beta1);
        const double rel = std::abs(emp - theory) / theory;
        report(7, "10,000-draw randomization SD matches sqrt(V_ATE/m) within 5%", rel < 0.05,
               fmt("empirical SD=%.4f vs theory=%.4f (gap %.2f%%)", emp, theory, 100.0 * rel));
    }

    // --- Criterion 8: DGP fidelity on a ~1e6-individual draw. ---
    {
        SimConfig cfg = study_config(40, 0);
        cfg.m = 16700; // about one million individuals at nj in [40, 80]
        const FinitePopulation pop = generate_population(cfg, derive_stream(kSeed, 100, 0));
        const bool r2_ok = pop.realized_r2 >= 0.45 && pop.realized_r2 <= 0.55;
        const bool icc_ok = pop.realized_icc >= 0.08 && pop.realized_icc <= 0.12;
        report(8, "DGP fidelity: realized R2 and ICC on a large draw", r2_ok && icc_ok,
               fmt("n=%d individuals: R2=%.4f in [0.45,0.55], ICC=%.4f in [0.08,0.12]",
                   pop.n_total, pop.realized_r2, pop.realized_icc));
    }

    // --- Criterion 9: determinism across thread counts. ---
    {
        SimConfig cfg;
        cfg.m = 12;
        cfg.k = 2;
        cfg.v = 4;
        cfg.nj_min = 15;
        cfg.nj_max = 25;
        cfg.n_reps = 40;
        cfg.seed = kSeed;
        cfg.pipeline.lasso.n_lambda = 50;
        cfg.n_threads = 1;
        const std::string sim1 = to_json(run_simulation(cfg)).dump();
        cfg.n_threads = 2;
        const std::string sim2 = to_json(run_simulation(cfg)).dump();
        cfg.n_threads = 4;
        const std::string sim4 = to_json(run_simulation(cfg)).dump();

        const FinitePopulation pop = generate_population(cfg, derive_stream(kSeed, 0, 0));
        std::vector<int> t(cfg.m, 0);
        for (int j = 0; j < cfg.m; j += 2) t[j] = 1;
        const StudyFrame frame = make_observed_frame(pop, t);
        PipelineConfig pipe;
        const std::string ts1 = to_json(run_two_stage(frame, pipe)).dump();
        pipe.lasso.n_threads = 3;
        const std::string ts3 = to_json(run_two_stage(frame, pipe)).dump();

        const bool ok = sim1 == sim2 && sim1 == sim4 && ts1 == ts3;
        report(9, "byte-identical reports across thread counts", ok,
               fmt("SimReport bytes: %zu (1==2: %s, 1==4: %s); TwoStageReport bytes: %zu (%s)",
                   sim1.size(), sim1 == sim2 ? "yes" : "no", sim1 == sim4 ? "yes" : "no",
                   ts1.size(), ts1 == ts3 ? "yes" : "no"));
    }

    // --- Criterion 10: normality shape at m=80 over 4,000 replications. ---
    {
        const SimReport r = run_simulation(study_config(80, 4000));
        const bool ok = std::abs(r.skewness_est) < 0.15 && std::abs(r.ex_kurtosis_est) < 0.3;
        report(10, "normality shape of standardized estimates at m=80", ok,
               fmt("|skewness|=%.3f < 0.15, |excess kurtosis|=%.3f < 0.3 over %d reps",
                   std::abs(r.skewness_est), std::abs(r.ex_kurtosis_est), r.n_completed));
    }

    // --- Criterion 11: end-to-end workflow with forced covariates, an
    // interaction pass, and a pretest-only baseline. ---
    {
        Rng rng(derive_stream(kSeed, 11, 0));
        StudyFrame frame({"site2", "site3", "pretest", "x4", "x5", "n1", "n2"});
        for (int j = 0; j < 30; ++j) {
            const int site = j % 3;
            const int c = frame.add_cluster("c" + std::to_string(j), j % 2);
            const double pre = rng.normal(), s4 = rng.normal(), s5 = rng.normal();
            const int nj = 8 + static_cast<int>(rng.uniform_int(0, 4));
            for (int i = 0; i < nj; ++i) {
                const double y = 0.3 * site + 1.2 * pre + 1.0 * s4 + 1.0 * s5 +
                                 1.5 * s4 * s5 + 0.8 * rng.normal();
                frame.add_record(c, y, 1.0,
                                 {site == 1 ? 1.0 : 0.0, site == 2 ? 1.0 : 0.0,
                                  pre + 0.4 * rng.normal(), s4 + 0.4 * rng.normal(),
                                  s5 + 0.4 * rng.normal(), rng.normal(), rng.normal()});
            }
        }
        PipelineConfig cfg;
        cfg.forced_covariates = {0, 1}; // site indicators
        cfg.interaction_pass = true;
        const TwoStageReport rep = compare_to_baseline(frame, std::vector<int>{2}, cfg);
        const bool ok = rep.has_baseline && rep.se_reduction > 0.0;
        std::string selected;
        for (const auto& name : rep.selected_names) selected += name + " ";
        report(11, "workflow with forced covariates + interactions beats the pretest baseline",
               ok,
               fmt("selected: %s| interactions: %zu candidate(s), SE reduction %.1f%%",
                   selected.c_str(), rep.interaction_candidates.size(),
                   100.0 * rep.se_reduction));
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s -- %d criterion failure(s), %.0f s total\n",
                failures == 0 ? "ALL CRITERIA PASSED" : "CRITERIA FAILED", failures, elapsed);
    return failures == 0 ? 0 : 1;
}
