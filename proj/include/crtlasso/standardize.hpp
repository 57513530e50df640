#pragma once

// Centering and standardization of cluster-level data for lasso fitting.
//
// The design has column 0 = T_j - p* (never rescaled) and one column per
// covariate, centered at the weighted grand mean and scaled so the weighted
// standard deviation (weights w_j / wbar, divisor m-1) equals 1. The outcome
// is centered; rescaling it is optional since the penalty search absorbs the
// outcome scale.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "crtlasso/data.hpp"
#include "crtlasso/errors.hpp"

namespace crtlasso {

struct StandardizeOptions {
    bool weighted = true;            // weighted SD; false gives the plain (m-1) SD
    bool standardize_outcome = false;
    bool drop_zero_variance = false; // false: throw ZeroVarianceCovariateError
};

// Cluster-level design ready for penalized fitting. Columns are stored
// contiguously (column-major) since coordinate descent walks one column at
// a time.
struct StandardizedDesign {
    int m = 0;
    std::vector<double> ytilde;        // centered (optionally scaled) outcome
    std::vector<double> row_weights;   // w_j / wbar
    std::vector<double> z;             // m x n_cols, column-major; col 0 = T tilde
    std::vector<double> col_sqnorm;    // sum_j rho_j z_jq^2 per column
    std::vector<double> scale_factors; // per kept covariate (divide raw centered value)
    double outcome_scale = 1.0;
    std::vector<std::string> column_names;  // n_cols entries, [0] = "treatment"
    std::vector<int> kept_covariates;       // ClusterFrame covariate index per covariate column
    std::vector<int> dropped_covariates;    // zero-variance covariates that were dropped
    double p_star = 0.0;
    double ybar_grand = 0.0;
    std::vector<double> center;             // grand mean per kept covariate

    int n_cols() const { return static_cast<int>(column_names.size()); }
    // Design column of a ClusterFrame covariate index, -1 if dropped.
    int column_of_covariate(int q) const {
        for (std::size_t c = 0; c < kept_covariates.size(); ++c) {
            if (kept_covariates[c] == q) return static_cast<int>(c) + 1;
        }
        return -1;
    }
    double at(int j, int col) const { return z[static_cast<std::size_t>(col) * m + j]; }
    std::span<const double> column(int col) const {
        return {z.data() + static_cast<std::size_t>(col) * m, static_cast<std::size_t>(m)};
    }
};

inline StandardizedDesign center_and_standardize(const ClusterFrame& cf,
                                                 const StandardizeOptions& opts = {}) {
    StandardizedDesign d;
    d.m = cf.m;
    d.p_star = cf.p_star;
    d.ybar_grand = cf.ybar_grand;
    d.row_weights.resize(cf.m);
    for (int j = 0; j < cf.m; ++j) d.row_weights[j] = cf.w[j] / cf.wbar;

    d.ytilde.resize(cf.m);
    for (int j = 0; j < cf.m; ++j) d.ytilde[j] = cf.ybar[j] - cf.ybar_grand;

    const double denom = cf.m > 1 ? static_cast<double>(cf.m - 1) : 1.0;
    auto weighted_sd = [&](const std::vector<double>& centered) {
        double ss = 0.0;
        for (int j = 0; j < cf.m; ++j) {
            const double rho = opts.weighted ? d.row_weights[j] : 1.0;
            ss += rho * centered[j] * centered[j];
        }
        return std::sqrt(ss / denom);
    };

    if (opts.standardize_outcome) {
        const double sy = weighted_sd(d.ytilde);
        if (sy > 0.0) {
            d.outcome_scale = sy;
            for (double& yv : d.ytilde) yv /= sy;
        }
    }

    // Column 0: treatment deviation, centered by construction, never scaled.
    d.column_names.push_back("treatment");
    d.z.resize(cf.m);
    for (int j = 0; j < cf.m; ++j) d.z[j] = cf.t[j] - cf.p_star;

    std::vector<double> centered(cf.m);
    for (int q = 0; q < cf.v; ++q) {
        double max_abs = 0.0;
        for (int j = 0; j < cf.m; ++j) {
            centered[j] = cf.xbar_at(j, q) - cf.xbar_grand[q];
            max_abs = std::max(max_abs, std::abs(cf.xbar_at(j, q)));
        }
        const double sd = weighted_sd(centered);
        if (sd <= 1e-10 * std::max(max_abs, 1e-100)) {
            if (!opts.drop_zero_variance) {
                throw ZeroVarianceCovariateError(q, cf.covariate_names[q]);
            }
            d.dropped_covariates.push_back(q);
            continue;
        }
        d.kept_covariates.push_back(q);
        d.column_names.push_back(cf.covariate_names[q]);
        d.scale_factors.push_back(sd);
        d.center.push_back(cf.xbar_grand[q]);
        for (int j = 0; j < cf.m; ++j) d.z.push_back(centered[j] / sd);
    }

    d.col_sqnorm.assign(d.n_cols(), 0.0);
    for (int col = 0; col < d.n_cols(); ++col) {
        double ss = 0.0;
        const double* zc = d.z.data() + static_cast<std::size_t>(col) * cf.m;
        for (int j = 0; j < cf.m; ++j) ss += d.row_weights[j] * zc[j] * zc[j];
        d.col_sqnorm[col] = ss;
    }
    return d;
}

// Back-transforms standardized coefficients to the original covariate scale.
// Index 0 stays the treatment coefficient; covariate q gets gamma_q / scale_q.
// If the outcome was rescaled, everything is multiplied back by its scale.
inline std::vector<double> unstandardize_coefficients(const StandardizedDesign& d,
                                                      std::span<const double> coefs) {
    std::vector<double> out(coefs.begin(), coefs.end());
    for (std::size_t c = 1; c < out.size(); ++c) out[c] /= d.scale_factors[c - 1];
    for (double& b : out) b *= d.outcome_scale;
    return out;
}

} // namespace crtlasso
