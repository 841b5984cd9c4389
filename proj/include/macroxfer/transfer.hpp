#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "macroxfer/dataset.hpp"
#include "macroxfer/error.hpp"
#include "macroxfer/metrics.hpp"
#include "macroxfer/network.hpp"
#include "macroxfer/optim.hpp"
#include "macroxfer/propagation.hpp"

namespace macroxfer {

enum class TransferMode { locked, unlocked };

inline std::string_view to_string(TransferMode m) { return m == TransferMode::locked ? "locked" : "unlocked"; }

inline TransferMode parse_transfer_mode(std::string_view s) {
    if (s == "locked") return TransferMode::locked;
    if (s == "unlocked") return TransferMode::unlocked;
    throw ConfigError("unknown transfer mode '" + std::string(s) + "'");
}

/// An independent, parameter-identical copy.
inline Network copy_network(const Network& source) { return source; }

/// Locked: every layer frozen. Unlocked: the last hidden dense layer and the
/// output layer are trainable, everything before them frozen.
inline std::vector<bool> default_lock_mask(const Network& net, TransferMode mode) {
    std::vector<bool> mask(net.layer_count(), true);
    if (mode == TransferMode::unlocked) {
        mask.back() = false;
        if (net.dense.size() >= 2) mask[mask.size() - 2] = false;
    }
    return mask;
}

struct TransferPlan {
    Network source;
    TransferMode mode = TransferMode::locked;
    std::vector<bool> lock_mask;            // true = frozen, one entry per layer
    std::vector<std::size_t> feature_map;   // feature_map[k] = target column feeding source input k

    static TransferPlan make(Network source, TransferMode mode, std::size_t target_width) {
        TransferPlan p;
        p.mode = mode;
        p.lock_mask = default_lock_mask(source, mode);
        p.feature_map.resize(source.input_width());
        for (std::size_t k = 0; k < p.feature_map.size(); ++k) p.feature_map[k] = k;
        p.source = std::move(source);
        p.validate(target_width);
        return p;
    }

    void validate(std::size_t target_width) const {
        if (lock_mask.size() != source.layer_count())
            throw ConfigError("lock_mask has " + std::to_string(lock_mask.size()) + " entries, network has " +
                              std::to_string(source.layer_count()) + " layers");
        if (mode == TransferMode::locked && std::find(lock_mask.begin(), lock_mask.end(), false) != lock_mask.end())
            throw ConfigError("locked transfer requires every layer frozen");
        if (mode == TransferMode::unlocked && std::find(lock_mask.begin(), lock_mask.end(), false) == lock_mask.end())
            throw ConfigError("unlocked transfer needs at least one unfrozen layer");
        if (feature_map.size() != source.input_width() || target_width != source.input_width())
            throw DataError("feature_map width mismatch: source expects " + std::to_string(source.input_width()) +
                            " inputs, map has " + std::to_string(feature_map.size()) + ", target has " +
                            std::to_string(target_width) + " columns");
        std::vector<bool> seen(target_width, false);
        for (auto c : feature_map) {
            if (c >= target_width || seen[c]) throw DataError("feature_map is not a bijection onto the target columns");
            seen[c] = true;
        }
    }
};

/// Reorder target rows (row = period) into the source's input order.
inline Eigen::MatrixXd map_features(const TransferPlan& plan, const Eigen::MatrixXd& target_rows) {
    plan.validate(static_cast<std::size_t>(target_rows.cols()));
    std::vector<Eigen::Index> cols(plan.feature_map.begin(), plan.feature_map.end());
    return target_rows(Eigen::all, cols);
}

/// Map target columns, refit the scaler on target training rows, split and window.
inline PreparedData prepare_target(const TransferPlan& plan, const Eigen::MatrixXd& target_rows,
                                   const Eigen::VectorXd& targets, const SplitOptions& opt, std::size_t window = 1) {
    return prepare(map_features(plan, target_rows), targets, opt, window);
}

/// Pure inference with the source parameters.
inline Eigen::VectorXd apply_locked(const TransferPlan& plan, const Samples& target) {
    if (plan.mode != TransferMode::locked) throw ConfigError("apply_locked: plan is not locked");
    plan.validate(static_cast<std::size_t>(target.width()));
    return predict(plan.source, target.steps);
}

/// Retrain the unfrozen layers on target data only. Frozen parameters are
/// bit-identical afterwards.
inline std::pair<Network, TrainHistory> fine_tune_unlocked(const TransferPlan& plan, const SplitBundle& target,
                                                           const TrainConfig& config) {
    if (plan.mode != TransferMode::unlocked) throw ConfigError("fine_tune_unlocked: plan is not unlocked");
    plan.validate(static_cast<std::size_t>(target.train.width()));
    return train(copy_network(plan.source), target, config, plan.lock_mask);
}

enum class ComparisonMetric { auc, mae };

struct TransferReport {
    MetricReport target;
    MetricReport baseline;
    bool negative_transfer = false;
};

/// Flags transfer whose objective is strictly worse than the baseline's.
inline TransferReport detect_negative_transfer(const MetricReport& transfer, const MetricReport& baseline,
                                               ComparisonMetric metric) {
    if (transfer.count != baseline.count)
        throw DataError("detect_negative_transfer: metrics computed on different test sets (" +
                        std::to_string(transfer.count) + " vs " + std::to_string(baseline.count) + " rows)");
    TransferReport r{transfer, baseline, false};
    if (metric == ComparisonMetric::auc) {
        if (!transfer.auc || !baseline.auc) throw DataError("detect_negative_transfer: AUC missing");
        r.negative_transfer = *transfer.auc < *baseline.auc;
    } else {
        if (!transfer.mae || !baseline.mae) throw DataError("detect_negative_transfer: MAE missing");
        r.negative_transfer = *transfer.mae > *baseline.mae;
    }
    return r;
}

/// On-disk plan: {source_model, mode, lock_mask, feature_map}. feature_map
/// entries are target column names (or indices), in source input order.
struct TransferPlanFile {
    std::string source_model;
    TransferMode mode = TransferMode::locked;
    std::vector<bool> lock_mask;  // empty = default for the mode
    std::vector<std::variant<std::string, std::size_t>> feature_map;  // empty = identity

    nlohmann::json to_json() const {
        nlohmann::json fm = nlohmann::json::array();
        for (const auto& e : feature_map) {
            if (std::holds_alternative<std::string>(e))
                fm.push_back(std::get<std::string>(e));
            else
                fm.push_back(std::get<std::size_t>(e));
        }
        nlohmann::json j{{"source_model", source_model}, {"mode", to_string(mode)}, {"feature_map", fm}};
        j["lock_mask"] = nlohmann::json::array();
        for (bool b : lock_mask) j["lock_mask"].push_back(b);
        return j;
    }

    static TransferPlanFile from_json(const nlohmann::json& j) {
        TransferPlanFile p;
        p.source_model = j.at("source_model").get<std::string>();
        p.mode = parse_transfer_mode(j.value("mode", std::string("locked")));
        if (j.contains("lock_mask"))
            for (const auto& b : j.at("lock_mask")) p.lock_mask.push_back(b.get<bool>());
        if (j.contains("feature_map"))
            for (const auto& e : j.at("feature_map")) {
                if (e.is_string())
                    p.feature_map.emplace_back(e.get<std::string>());
                else
                    p.feature_map.emplace_back(e.get<std::size_t>());
            }
        return p;
    }

    /// Resolve against a loaded source network and the target's column names.
    TransferPlan resolve(Network source, const std::vector<std::string>& target_columns) const {
        TransferPlan plan;
        plan.mode = mode;
        plan.lock_mask = lock_mask.empty() ? default_lock_mask(source, mode) : lock_mask;
        if (feature_map.empty()) {
            for (std::size_t k = 0; k < target_columns.size(); ++k) plan.feature_map.push_back(k);
        } else {
            for (const auto& e : feature_map) {
                if (std::holds_alternative<std::size_t>(e)) {
                    plan.feature_map.push_back(std::get<std::size_t>(e));
                    continue;
                }
                const auto& name = std::get<std::string>(e);
                auto it = std::find(target_columns.begin(), target_columns.end(), name);
                if (it == target_columns.end()) throw DataError("feature_map: no target column '" + name + "'");
                plan.feature_map.push_back(static_cast<std::size_t>(it - target_columns.begin()));
            }
        }
        plan.source = std::move(source);
        plan.validate(target_columns.size());
        return plan;
    }
};

}  // namespace macroxfer
