#pragma once

// Test-only reference implementations, deliberately independent of the
// library's solver paths. The penalized least-squares oracle solves the
// exact objective by enumerating active-set sign patterns and checking the
// subgradient conditions of each candidate; the t CDF oracle integrates the
// density with adaptive Simpson quadrature.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace oracle {

// argmin_d sum_j rho_j (y_j - z_j' d)^2 + lambda sum_q pf_q |d_q|
// z is row-major m x p. Exact for small p (cost 3^p linear solves).
inline std::vector<double> exact_lasso(int m, int p, std::span<const double> z,
                                       std::span<const double> y, std::span<const double> rho,
                                       double lambda, std::span<const double> pf = {}) {
    auto pf_at = [&](int q) { return pf.empty() ? 1.0 : pf[q]; };
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    double y_ss = 0.0;
    for (int j = 0; j < m; ++j) {
        for (int q = 0; q < p; ++q) {
            b(q) += rho[j] * z[j * p + q] * y[j];
            for (int r = 0; r < p; ++r) a(q, r) += rho[j] * z[j * p + q] * z[j * p + r];
        }
        y_ss += rho[j] * y[j] * y[j];
    }

    std::vector<int> penalized;
    std::vector<int> free_coords;
    for (int q = 0; q < p; ++q) (pf_at(q) > 0.0 ? penalized : free_coords).push_back(q);

    const long n_patterns = static_cast<long>(std::pow(3.0, penalized.size()));
    std::vector<double> best;
    double best_obj = std::numeric_limits<double>::infinity();

    std::vector<int> sign(p, 0);
    for (long code = 0; code < n_patterns; ++code) {
        long rem = code;
        for (int q : penalized) {
            sign[q] = static_cast<int>(rem % 3) - 1;
            rem /= 3;
        }
        std::vector<int> active(free_coords);
        for (int q : penalized) {
            if (sign[q] != 0) active.push_back(q);
        }
        const int na = static_cast<int>(active.size());
        Eigen::VectorXd d_active;
        if (na > 0) {
            Eigen::MatrixXd aa(na, na);
            Eigen::VectorXd rhs(na);
            for (int u = 0; u < na; ++u) {
                rhs(u) = b(active[u]) - 0.5 * lambda * pf_at(active[u]) * sign[active[u]];
                for (int w = 0; w < na; ++w) aa(u, w) = a(active[u], active[w]);
            }
            d_active = aa.fullPivLu().solve(rhs);
            bool consistent = true;
            for (int u = 0; u < na && consistent; ++u) {
                const int q = active[u];
                if (pf_at(q) > 0.0 && d_active(u) * sign[q] <= 0.0) consistent = false;
            }
            if (!consistent) continue;
        }
        // Zero-coordinate subgradient bounds.
        bool ok = true;
        Eigen::VectorXd d_full = Eigen::VectorXd::Zero(p);
        for (int u = 0; u < na; ++u) d_full(active[u]) = d_active(u);
        for (int q : penalized) {
            if (sign[q] != 0) continue;
            const double grad = 2.0 * (b(q) - a.row(q).dot(d_full));
            if (std::abs(grad) > lambda * pf_at(q) * (1.0 + 1e-9) + 1e-12) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        double obj = y_ss - 2.0 * d_full.dot(b) + d_full.dot(a * d_full);
        for (int q = 0; q < p; ++q) obj += lambda * pf_at(q) * std::abs(d_full(q));
        if (obj < best_obj) {
            best_obj = obj;
            best.assign(d_full.data(), d_full.data() + p);
        }
    }
    return best;
}

namespace detail {

inline double t_pdf(double x, double df) {
    const double log_pdf = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
                           0.5 * std::log(df * M_PI) -
                           0.5 * (df + 1.0) * std::log1p(x * x / df);
    return std::exp(log_pdf);
}

inline double simpson(double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson(double a, double b, double fa, double fm, double fb, double whole,
                               double tol, double df, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = t_pdf(lm, df), frm = t_pdf(rm, df);
    const double left = simpson(a, m, fa, flm, fm);
    const double right = simpson(m, b, fm, frm, fb);
    if (depth > 50 || std::abs(left + right - whole) < 15.0 * tol) {
        return left + right + (left + right - whole) / 15.0;
    }
    return adaptive_simpson(a, m, fa, flm, fm, left, tol / 2.0, df, depth + 1) +
           adaptive_simpson(m, b, fm, frm, fb, right, tol / 2.0, df, depth + 1);
}

} // namespace detail

// Student t CDF by quadrature of the density (plus the symmetric tail
// beyond +/- 60, which is negligible at the tolerances used).
inline double t_cdf_quadrature(double t, double df) {
    if (t == 0.0) return 0.5;
    const double hi = std::min(std::abs(t), 1e6);
    const double fa = detail::t_pdf(0.0, df);
    const double fb = detail::t_pdf(hi, df);
    const double fm = detail::t_pdf(0.5 * hi, df);
    const double whole = detail::simpson(0.0, hi, fa, fm, fb);
    const double integral =
        detail::adaptive_simpson(0.0, hi, fa, fm, fb, whole, 1e-14, df, 0);
    return t > 0.0 ? 0.5 + integral : 0.5 - integral;
}

inline double weighted_mean(std::span<const double> xs, std::span<const double> ws) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        num += ws[i] * xs[i];
        den += ws[i];
    }
    return num / den;
}

// Weighted variance about the weighted mean with an explicit divisor.
inline double weighted_variance(std::span<const double> xs, std::span<const double> ws,
                                double divisor) {
    const double mu = weighted_mean(xs, ws);
    double ss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) ss += ws[i] * (xs[i] - mu) * (xs[i] - mu);
    return ss / divisor;
}

} // namespace oracle
