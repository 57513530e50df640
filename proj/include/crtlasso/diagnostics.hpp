#pragma once

// Runnable selection diagnostics.
//
// The irrepresentability check evaluates |Q_NI Q_II^-1 sgn(delta_I)| on the
// empirical weighted second-moment matrix Q of [Ttilde, xtilde] and reports
// the margins 1 - |.| per non-support column; all margins positive is the
// (near) necessary condition for the penalty to recover the support as the
// cluster count grows. The consistency probe measures support recovery
// rates empirically over assignment draws at increasing m.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "crtlasso/data.hpp"
#include "crtlasso/errors.hpp"
#include "crtlasso/parallel.hpp"
#include "crtlasso/rng.hpp"
#include "crtlasso/sim.hpp"
#include "crtlasso/standardize.hpp"
#include "crtlasso/two_stage.hpp"
#include "crtlasso/wls.hpp"

namespace crtlasso {

struct IrrepresentabilityReport {
    std::vector<int> support;        // design column indices (0 = treatment)
    std::vector<int> non_support;
    std::vector<double> eta_margin;  // per non-support column: 1 - |Q_NI Q_II^-1 s|
    double min_margin = 0.0;
    bool holds = false;
};

// Support and signs are given over design columns. Throws if the support
// block is singular; requires a standardized design.
inline IrrepresentabilityReport irrepresentable_check(const StandardizedDesign& d,
                                                      std::span<const int> support,
                                                      std::span<const double> signs) {
    if (support.size() != signs.size()) {
        throw ValidationError("support and sign vectors must have equal length");
    }
    // Argument check: covariate columns must be centered and standardized.
    for (int col = 1; col < d.n_cols(); ++col) {
        double mean_w = 0.0, ss = 0.0, wsum = 0.0;
        const double* zc = d.z.data() + static_cast<std::size_t>(col) * d.m;
        for (int j = 0; j < d.m; ++j) {
            mean_w += d.row_weights[j] * zc[j];
            ss += d.row_weights[j] * zc[j] * zc[j];
            wsum += d.row_weights[j];
        }
        const double sd = std::sqrt(ss / std::max(1, d.m - 1));
        if (std::abs(mean_w / wsum) > 1e-6 || std::abs(sd - 1.0) > 1e-6) {
            throw ValidationError("design column " + std::to_string(col) + " is not standardized");
        }
    }

    const int cols = d.n_cols();
    Eigen::MatrixXd q_full = Eigen::MatrixXd::Zero(cols, cols);
    for (int a = 0; a < cols; ++a) {
        const double* za = d.z.data() + static_cast<std::size_t>(a) * d.m;
        for (int b = a; b < cols; ++b) {
            const double* zb = d.z.data() + static_cast<std::size_t>(b) * d.m;
            double acc = 0.0;
            for (int j = 0; j < d.m; ++j) acc += d.row_weights[j] * za[j] * zb[j];
            q_full(a, b) = acc / d.m;
            q_full(b, a) = q_full(a, b);
        }
    }

    IrrepresentabilityReport report;
    report.support.assign(support.begin(), support.end());
    std::vector<char> in_support(cols, 0);
    for (int c : support) {
        if (c < 0 || c >= cols) throw ValidationError("support index out of range");
        in_support[c] = 1;
    }
    for (int c = 0; c < cols; ++c) {
        if (!in_support[c]) report.non_support.push_back(c);
    }

    const int ks = static_cast<int>(support.size());
    Eigen::MatrixXd q_ii(ks, ks);
    for (int a = 0; a < ks; ++a) {
        for (int b = 0; b < ks; ++b) q_ii(a, b) = q_full(support[a], support[b]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(q_ii);
    if (!lu.isInvertible()) throw SingularSupportBlockError();
    Eigen::VectorXd s(ks);
    for (int a = 0; a < ks; ++a) s(a) = signs[a] >= 0.0 ? (signs[a] > 0.0 ? 1.0 : 0.0) : -1.0;
    const Eigen::VectorXd w = lu.solve(s);

    report.min_margin = 1.0;
    for (int nIdx : report.non_support) {
        double dot = 0.0;
        for (int a = 0; a < ks; ++a) dot += q_full(nIdx, support[a]) * w(a);
        const double margin = 1.0 - std::abs(dot);
        report.eta_margin.push_back(margin);
        report.min_margin = std::min(report.min_margin, margin);
    }
    if (report.non_support.empty()) report.min_margin = 1.0;
    report.holds = report.min_margin > 0.0;
    return report;
}

struct SelectionProbeRow {
    int m = 0;
    int n_reps = 0;
    double exact_rate = 0.0;    // selected set equals the true support
    double contain_rate = 0.0;  // selected set contains the true support
    double false_inclusion_rate = 0.0; // any non-true covariate selected
    double avg_true_selected = 0.0;
};

struct SelectionProbeResult {
    std::vector<SelectionProbeRow> rows;
    bool contain_rate_monotone = false;
};

// Empirical support-recovery rates over assignment draws at each m. Signs
// in simulations come from the true coefficient vector.
inline SelectionProbeResult selection_consistency_probe(const SimConfig& base_cfg,
                                                        std::span<const int> m_values,
                                                        int probe_reps) {
    SelectionProbeResult result;
    for (int m : m_values) {
        SimConfig cfg = base_cfg;
        cfg.m = m;
        cfg.n_reps = probe_reps;
        cfg.validate();
        const FinitePopulation pop =
            generate_population(cfg, derive_stream(cfg.seed, 0x9c0be, static_cast<std::uint64_t>(m)));
        const int m1 = static_cast<int>(std::lround(cfg.m * cfg.p));

        std::vector<int> exact(probe_reps, 0), contain(probe_reps, 0), false_inc(probe_reps, 0),
            n_true(probe_reps, 0);
        parallel_for(probe_reps, cfg.n_threads, [&](int rep) {
            Rng rng(derive_stream(cfg.seed, 0x9c0bf + static_cast<std::uint64_t>(m),
                                  static_cast<std::uint64_t>(rep)));
            const auto treated = rng.choose(cfg.m, m1);
            std::vector<int> t(cfg.m, 0);
            for (int j : treated) t[j] = 1;
            const StudyFrame frame = make_observed_frame(pop, t);
            const StageOneResult s1 = run_stage_one(frame, cfg.pipeline);
            int truly = 0;
            bool extra = false;
            for (int q : s1.selected) {
                if (q < cfg.k) ++truly; else extra = true;
            }
            n_true[rep] = truly;
            contain[rep] = (truly == cfg.k);
            exact[rep] = (truly == cfg.k && !extra);
            false_inc[rep] = extra;
        });

        SelectionProbeRow row;
        row.m = m;
        row.n_reps = probe_reps;
        for (int rep = 0; rep < probe_reps; ++rep) {
            row.exact_rate += exact[rep];
            row.contain_rate += contain[rep];
            row.false_inclusion_rate += false_inc[rep];
            row.avg_true_selected += n_true[rep];
        }
        row.exact_rate /= probe_reps;
        row.contain_rate /= probe_reps;
        row.false_inclusion_rate /= probe_reps;
        row.avg_true_selected /= probe_reps;
        result.rows.push_back(row);
    }
    result.contain_rate_monotone = true;
    for (std::size_t i = 1; i < result.rows.size(); ++i) {
        if (result.rows[i].contain_rate < result.rows[i - 1].contain_rate) {
            result.contain_rate_monotone = false;
        }
    }
    return result;
}

} // namespace crtlasso
