#pragma once

// Study data model for cluster-randomized designs.
//
// StudyFrame holds individual-level records (outcome, covariates, weight,
// cluster membership) plus the cluster-level treatment assignment.
// ClusterFrame is its weighted aggregation: per-cluster weighted means,
// cluster weights, grand means, and the weighted treatment rate. Everything
// downstream (WLS, lasso, diagnostics) consumes these two types. Both are
// immutable after construction / aggregation; all operations here are pure.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crtlasso/errors.hpp"

namespace crtlasso {

struct IndividualRecord {
    std::string cluster_id;
    double y = 0.0;
    double w = 1.0;
    std::vector<double> x;
};

// Individual-level records with cluster treatment assignment. Storage is
// flat (struct-of-arrays); clusters keep first-appearance order so runs are
// reproducible regardless of how the input was chunked.
class StudyFrame {
public:
    StudyFrame() = default;
    explicit StudyFrame(std::vector<std::string> covariate_names)
        : covariate_names_(std::move(covariate_names)) {}

    // Registers (or finds) a cluster and checks treatment consistency.
    int add_cluster(const std::string& cluster_id, int treatment) {
        auto it = cluster_index_.find(cluster_id);
        if (it != cluster_index_.end()) {
            if (assignment_[it->second] != treatment) {
                throw ValidationError("inconsistent treatment within cluster '" + cluster_id + "'");
            }
            return it->second;
        }
        const int idx = static_cast<int>(cluster_ids_.size());
        cluster_ids_.push_back(cluster_id);
        assignment_.push_back(treatment);
        cluster_index_.emplace(cluster_id, idx);
        return idx;
    }

    void add_record(int cluster_index, double y, double w, std::span<const double> x) {
        if (x.size() != covariate_names_.size()) {
            throw ValidationError("record has " + std::to_string(x.size()) + " covariates, expected " +
                                  std::to_string(covariate_names_.size()));
        }
        cluster_of_.push_back(cluster_index);
        y_.push_back(y);
        w_.push_back(w);
        x_.insert(x_.end(), x.begin(), x.end());
    }

    void add_record(int cluster_index, double y, double w, std::initializer_list<double> x) {
        add_record(cluster_index, y, w, std::span<const double>(x.begin(), x.size()));
    }

    void add_record(const IndividualRecord& rec, int treatment) {
        add_record(add_cluster(rec.cluster_id, treatment), rec.y, rec.w, rec.x);
    }

    int n() const { return static_cast<int>(y_.size()); }
    int m() const { return static_cast<int>(cluster_ids_.size()); }
    int v() const { return static_cast<int>(covariate_names_.size()); }

    double y(int i) const { return y_[i]; }
    double w(int i) const { return w_[i]; }
    int cluster(int i) const { return cluster_of_[i]; }
    std::span<const double> x_row(int i) const {
        return {x_.data() + static_cast<std::size_t>(i) * covariate_names_.size(),
                covariate_names_.size()};
    }
    double x(int i, int q) const { return x_[static_cast<std::size_t>(i) * covariate_names_.size() + q]; }

    int treatment(int cluster_index) const { return assignment_[cluster_index]; }
    const std::string& cluster_id(int cluster_index) const { return cluster_ids_[cluster_index]; }
    const std::vector<std::string>& covariate_names() const { return covariate_names_; }
    const std::vector<int>& assignment() const { return assignment_; }

    // Invariants: positive finite weights, finite outcomes/covariates,
    // >= 1 record per cluster, both arms populated.
    void validate() const {
        if (m() == 0) throw ValidationError("frame has no clusters");
        int treated = 0, control = 0;
        for (int t : assignment_) {
            if (t != 0 && t != 1) throw ValidationError("treatment must be 0 or 1");
            (t == 1 ? treated : control)++;
        }
        if (treated == 0) throw ValidationError("empty treatment arm");
        if (control == 0) throw ValidationError("empty control arm");

        std::vector<char> seen(m(), 0);
        for (int i = 0; i < n(); ++i) {
            if (!(w_[i] > 0.0) || !std::isfinite(w_[i])) {
                throw ValidationError("record " + std::to_string(i) + " has non-positive weight");
            }
            if (!std::isfinite(y_[i])) {
                throw ValidationError("record " + std::to_string(i) + " has non-finite outcome");
            }
            for (double xv : x_row(i)) {
                if (!std::isfinite(xv)) {
                    throw ValidationError("record " + std::to_string(i) + " has non-finite covariate");
                }
            }
            seen[cluster_of_[i]] = 1;
        }
        for (int j = 0; j < m(); ++j) {
            if (!seen[j]) throw ValidationError("cluster '" + cluster_ids_[j] + "' has no records");
        }
    }

private:
    std::vector<std::string> covariate_names_;
    std::vector<std::string> cluster_ids_;
    std::vector<int> assignment_;
    std::map<std::string, int> cluster_index_;
    std::vector<int> cluster_of_;
    std::vector<double> y_;
    std::vector<double> w_;
    std::vector<double> x_; // n x v, row-major
};

// Weighted cluster-level aggregation of a StudyFrame.
struct ClusterFrame {
    int m = 0, m1 = 0, m0 = 0;
    int v = 0;
    std::vector<std::string> cluster_ids;
    std::vector<std::string> covariate_names;
    std::vector<int> t;           // T_j
    std::vector<double> w;        // w_j = sum_i w_ij
    std::vector<double> ybar;     // cluster weighted mean outcome
    std::vector<double> xbar;     // m x v, row-major, cluster weighted covariate means
    double ybar_grand = 0.0;
    std::vector<double> xbar_grand;
    double p_star = 0.0;          // weighted treatment rate
    double wbar = 0.0, wbar1 = 0.0, wbar0 = 0.0;

    double xbar_at(int j, int q) const { return xbar[static_cast<std::size_t>(j) * v + q]; }
    std::span<const double> xbar_row(int j) const {
        return {xbar.data() + static_cast<std::size_t>(j) * v, static_cast<std::size_t>(v)};
    }
};

// Weighted aggregation: cluster means, grand means, p*. Weight-scale
// invariant: multiplying every w_ij by c > 0 changes only w_j (by c).
inline ClusterFrame aggregate(const StudyFrame& frame) {
    frame.validate();
    ClusterFrame cf;
    cf.m = frame.m();
    cf.v = frame.v();
    cf.cluster_ids.assign(frame.m(), {});
    cf.covariate_names = frame.covariate_names();
    cf.t.assign(cf.m, 0);
    cf.w.assign(cf.m, 0.0);
    cf.ybar.assign(cf.m, 0.0);
    cf.xbar.assign(static_cast<std::size_t>(cf.m) * cf.v, 0.0);
    cf.xbar_grand.assign(cf.v, 0.0);

    for (int j = 0; j < cf.m; ++j) {
        cf.cluster_ids[j] = frame.cluster_id(j);
        cf.t[j] = frame.treatment(j);
    }
    for (int i = 0; i < frame.n(); ++i) {
        const int j = frame.cluster(i);
        const double wi = frame.w(i);
        cf.w[j] += wi;
        cf.ybar[j] += wi * frame.y(i);
        auto xrow = frame.x_row(i);
        for (int q = 0; q < cf.v; ++q) cf.xbar[static_cast<std::size_t>(j) * cf.v + q] += wi * xrow[q];
    }

    double w_total = 0.0, w_treated = 0.0;
    for (int j = 0; j < cf.m; ++j) {
        cf.ybar[j] /= cf.w[j];
        for (int q = 0; q < cf.v; ++q) cf.xbar[static_cast<std::size_t>(j) * cf.v + q] /= cf.w[j];
        w_total += cf.w[j];
        if (cf.t[j] == 1) {
            w_treated += cf.w[j];
            cf.m1++;
        } else {
            cf.m0++;
        }
    }
    cf.p_star = w_treated / w_total;

    for (int j = 0; j < cf.m; ++j) {
        cf.ybar_grand += cf.w[j] * cf.ybar[j];
        for (int q = 0; q < cf.v; ++q) cf.xbar_grand[q] += cf.w[j] * cf.xbar_at(j, q);
    }
    cf.ybar_grand /= w_total;
    for (int q = 0; q < cf.v; ++q) cf.xbar_grand[q] /= w_total;

    cf.wbar = w_total / cf.m;
    cf.wbar1 = w_treated / cf.m1;
    cf.wbar0 = (w_total - w_treated) / cf.m0;
    return cf;
}

// Removes one cluster and recomputes the frame-level summaries. Used by
// leave-one-out CV; deliberately skips the two-arm validation since a fold
// may empty an arm.
inline ClusterFrame drop_cluster(const ClusterFrame& cf, int drop) {
    ClusterFrame out;
    out.m = cf.m - 1;
    out.v = cf.v;
    out.covariate_names = cf.covariate_names;
    out.cluster_ids.reserve(out.m);
    out.t.reserve(out.m);
    out.w.reserve(out.m);
    out.ybar.reserve(out.m);
    out.xbar.reserve(static_cast<std::size_t>(out.m) * out.v);
    out.xbar_grand.assign(out.v, 0.0);

    double w_total = 0.0, w_treated = 0.0;
    for (int j = 0; j < cf.m; ++j) {
        if (j == drop) continue;
        out.cluster_ids.push_back(cf.cluster_ids[j]);
        out.t.push_back(cf.t[j]);
        out.w.push_back(cf.w[j]);
        out.ybar.push_back(cf.ybar[j]);
        auto row = cf.xbar_row(j);
        out.xbar.insert(out.xbar.end(), row.begin(), row.end());
        w_total += cf.w[j];
        if (cf.t[j] == 1) {
            w_treated += cf.w[j];
            out.m1++;
        } else {
            out.m0++;
        }
        out.ybar_grand += cf.w[j] * cf.ybar[j];
        for (int q = 0; q < out.v; ++q) out.xbar_grand[q] += cf.w[j] * cf.xbar_at(j, q);
    }
    out.p_star = w_treated / w_total;
    out.ybar_grand /= w_total;
    for (int q = 0; q < out.v; ++q) out.xbar_grand[q] /= w_total;
    out.wbar = w_total / out.m;
    out.wbar1 = out.m1 > 0 ? w_treated / out.m1 : 0.0;
    out.wbar0 = out.m0 > 0 ? (w_total - w_treated) / out.m0 : 0.0;
    return out;
}

} // namespace crtlasso
