#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "macroxfer/dataset.hpp"
#include "macroxfer/error.hpp"

namespace macroxfer {

struct ConfusionMatrix {
    std::size_t tn = 0, fp = 0, fn = 0, tp = 0;
    std::size_t total() const { return tn + fp + fn + tp; }
    bool operator==(const ConfusionMatrix&) const = default;
};

namespace detail {
inline void require_pair(const Eigen::VectorXd& a, const Eigen::VectorXd& b, std::size_t min_len, const char* op) {
    if (a.size() != b.size()) throw DataError(std::string(op) + ": length mismatch");
    if (static_cast<std::size_t>(a.size()) < min_len)
        throw DataError(std::string(op) + ": need at least " + std::to_string(min_len) + " values");
}
inline bool is_positive_label(double y, const char* op) {
    if (y == 1.0) return true;
    if (y == 0.0) return false;
    throw DataError(std::string(op) + ": labels must be 0 or 1");
}
}  // namespace detail

/// Predicted positive iff score >= threshold.
inline ConfusionMatrix confusion(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels, double threshold = 0.5) {
    detail::require_pair(scores, labels, 1, "confusion");
    ConfusionMatrix c;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        const bool actual = detail::is_positive_label(labels(i), "confusion");
        const bool predicted = scores(i) >= threshold;
        if (actual)
            ++(predicted ? c.tp : c.fn);
        else
            ++(predicted ? c.fp : c.tn);
    }
    return c;
}

/// Area under the ROC curve in Mann-Whitney form: the probability that a
/// random positive scores above a random negative, ties counting one half.
/// Computed from midranks in O(n log n).
inline double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
    detail::require_pair(scores, labels, 2, "auc");
    const auto n = static_cast<std::size_t>(scores.size());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores(static_cast<Eigen::Index>(a)) < scores(static_cast<Eigen::Index>(b));
    });
    double pos = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores(static_cast<Eigen::Index>(order[j])) == scores(static_cast<Eigen::Index>(order[i]))) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (detail::is_positive_label(labels(static_cast<Eigen::Index>(order[k])), "auc")) {
                pos += 1.0;
                rank_sum += midrank;
            }
        i = j;
    }
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0.0 || neg == 0.0) throw DataError("auc: undefined when only one class is present");
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

struct RocPoint {
    double threshold;
    double tpr;
    double fpr;
};

/// ROC curve with one point per distinct score, thresholds descending, starting at (0, 0).
inline std::vector<RocPoint> roc_curve(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
    detail::require_pair(scores, labels, 2, "roc_curve");
    std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
    });
    double pos = 0.0;
    for (double y : labels) pos += detail::is_positive_label(y, "roc_curve") ? 1.0 : 0.0;
    const double neg = static_cast<double>(labels.size()) - pos;
    if (pos == 0.0 || neg == 0.0) throw DataError("roc_curve: undefined when only one class is present");
    std::vector<RocPoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores(static_cast<Eigen::Index>(order[i]));
        while (i < order.size() && scores(static_cast<Eigen::Index>(order[i])) == s) {
            (labels(static_cast<Eigen::Index>(order[i])) == 1.0 ? tp : fp) += 1.0;
            ++i;
        }
        curve.push_back({s, tp / pos, fp / neg});
    }
    return curve;
}

/// Trapezoidal area under a ROC curve.
inline double trapezoid_area(const std::vector<RocPoint>& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        area += (curve[i].fpr - curve[i - 1].fpr) * 0.5 * (curve[i].tpr + curve[i - 1].tpr);
    return area;
}

inline double mae(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
    detail::require_pair(predictions, targets, 1, "mae");
    return (predictions - targets).cwiseAbs().mean();
}

inline double mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
    detail::require_pair(predictions, targets, 1, "mse");
    return (predictions - targets).squaredNorm() / static_cast<double>(targets.size());
}

/// Sample Pearson correlation.
inline double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    detail::require_pair(x, y, 2, "pearson");
    const Eigen::ArrayXd dx = x.array() - x.mean();
    const Eigen::ArrayXd dy = y.array() - y.mean();
    const double sxx = dx.square().sum();
    const double syy = dy.square().sum();
    if (!(sxx > 0.0) || !(syy > 0.0)) throw DataError("pearson: constant input");
    return std::clamp((dx * dy).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Evaluation summary. Fields not computed for a task are left empty.
struct MetricReport {
    std::optional<double> auc;
    std::optional<ConfusionMatrix> confusion;
    std::optional<double> mae;
    std::optional<double> pearson;
    std::size_t count = 0;
};

inline MetricReport classification_report(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                                          double threshold = 0.5) {
    MetricReport r;
    r.confusion = confusion(scores, labels, threshold);
    r.auc = auc(scores, labels);
    r.count = static_cast<std::size_t>(scores.size());
    return r;
}

inline MetricReport regression_report(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
    MetricReport r;
    r.mae = mae(predictions, targets);
    r.count = static_cast<std::size_t>(predictions.size());
    const auto constant = [](const Eigen::VectorXd& v) { return (v.array() == v(0)).all(); };
    if (predictions.size() >= 2 && !constant(predictions) && !constant(targets)) r.pearson = pearson(predictions, targets);
    return r;
}

/// JSON with six-decimal fixed formatting; `extra` lines are inserted verbatim
/// as additional members (already formatted `"key": value`).
inline std::string to_json(const MetricReport& r, const std::vector<std::string>& extra = {}) {
    std::vector<std::string> members;
    if (r.auc) members.push_back("\"auc\": " + fmt6(*r.auc));
    if (r.confusion) {
        const auto& c = *r.confusion;
        members.push_back("\"confusion\": {\"tn\": " + std::to_string(c.tn) + ", \"fp\": " + std::to_string(c.fp) +
                          ", \"fn\": " + std::to_string(c.fn) + ", \"tp\": " + std::to_string(c.tp) + "}");
    }
    if (r.mae) members.push_back("\"mae\": " + fmt6(*r.mae));
    if (r.pearson) members.push_back("\"pearson\": " + fmt6(*r.pearson));
    members.push_back("\"count\": " + std::to_string(r.count));
    members.insert(members.end(), extra.begin(), extra.end());
    std::ostringstream os;
    os << "{\n";
    for (std::size_t i = 0; i < members.size(); ++i) os << "  " << members[i] << (i + 1 < members.size() ? ",\n" : "\n");
    os << "}\n";
    return os.str();
}

}  // namespace macroxfer
