#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "macroxfer/dataset.hpp"
#include "macroxfer/error.hpp"
#include "macroxfer/metrics.hpp"
#include "macroxfer/network.hpp"
#include "macroxfer/propagation.hpp"
#include "macroxfer/random.hpp"

namespace macroxfer {

enum class OptimizerKind { adam, adagrad };

inline OptimizerKind parse_optimizer(std::string_view s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "adagrad") return OptimizerKind::adagrad;
    throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "adagrad"; }

/// Per-parameter accumulators, one array per parameter block. Sized lazily on
/// the first step.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t t = 0;
    std::vector<std::vector<double>> m, v;  // adam moments
    std::vector<std::vector<double>> g2;    // adagrad squared-gradient sums

    explicit OptimizerState(OptimizerKind k = OptimizerKind::adam) : kind(k) {}
};

namespace detail {
template <class P, class G>
void check_shapes(const std::vector<P>& params, const std::vector<G>& grads) {
    if (params.size() != grads.size()) throw DataError("optimizer: parameter/gradient block count mismatch");
    for (std::size_t b = 0; b < params.size(); ++b)
        if (params[b].size() != grads[b].size()) throw DataError("optimizer: parameter/gradient shape mismatch");
}
inline void ensure_sized(std::vector<std::vector<double>>& acc, const std::vector<std::span<double>>& params) {
    if (acc.size() == params.size()) return;
    acc.clear();
    for (const auto& p : params) acc.emplace_back(p.size(), 0.0);
}
}  // namespace detail

/// Adam with bias correction. Blocks listed in `skip` are left untouched and
/// their accumulators are not advanced.
inline void adam_step(OptimizerState& st, const std::vector<std::span<double>>& params,
                      const std::vector<std::span<const double>>& grads, double lr,
                      const std::vector<bool>& skip = {}) {
    if (st.kind != OptimizerKind::adam) throw ConfigError("adam_step on a non-adam state");
    detail::check_shapes(params, grads);
    detail::ensure_sized(st.m, params);
    detail::ensure_sized(st.v, params);
    if (st.m.size() != params.size()) throw DataError("optimizer: state/parameter shape mismatch");
    ++st.t;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (!skip.empty() && skip[b]) continue;
        auto& m = st.m[b];
        auto& v = st.v[b];
        if (m.size() != params[b].size()) throw DataError("optimizer: state/parameter shape mismatch");
        for (std::size_t i = 0; i < params[b].size(); ++i) {
            const double g = grads[b][i];
            m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g;
            v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g * g;
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            params[b][i] -= lr * m_hat / (std::sqrt(v_hat) + st.epsilon);
        }
    }
}

inline void adagrad_step(OptimizerState& st, const std::vector<std::span<double>>& params,
                         const std::vector<std::span<const double>>& grads, double lr,
                         const std::vector<bool>& skip = {}) {
    if (st.kind != OptimizerKind::adagrad) throw ConfigError("adagrad_step on a non-adagrad state");
    detail::check_shapes(params, grads);
    detail::ensure_sized(st.g2, params);
    ++st.t;
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (!skip.empty() && skip[b]) continue;
        auto& acc = st.g2[b];
        if (acc.size() != params[b].size()) throw DataError("optimizer: state/parameter shape mismatch");
        for (std::size_t i = 0; i < params[b].size(); ++i) {
            const double g = grads[b][i];
            acc[i] += g * g;
            params[b][i] -= lr * g / (std::sqrt(acc[i]) + st.epsilon);
        }
    }
}

/// Apply one optimizer step to a network. `frozen` (per layer, may be empty)
/// marks layers whose gradients are discarded.
inline void optimizer_step(OptimizerState& st, Network& net, const Network& grad, double lr,
                           const std::vector<bool>& frozen = {}) {
    auto pb = net.blocks();
    const auto gb = grad.blocks();
    std::vector<std::span<double>> params;
    std::vector<std::span<const double>> grads;
    std::vector<bool> skip;
    for (std::size_t b = 0; b < pb.size(); ++b) {
        params.push_back(pb[b].values);
        grads.push_back(gb[b].values);
        skip.push_back(!frozen.empty() && frozen[pb[b].layer]);
    }
    if (st.kind == OptimizerKind::adam)
        adam_step(st, params, grads, lr, skip);
    else
        adagrad_step(st, params, grads, lr, skip);
}

// ---------------------------------------------------------------------------
// Training loop

enum class Objective { max_val_auc, min_val_mse, min_val_loss };

inline Objective parse_objective(std::string_view s) {
    if (s == "max_val_auc") return Objective::max_val_auc;
    if (s == "min_val_mse") return Objective::min_val_mse;
    if (s == "min_val_loss") return Objective::min_val_loss;
    throw ConfigError("unknown objective '" + std::string(s) + "'");
}

inline std::string_view to_string(Objective o) {
    switch (o) {
        case Objective::max_val_auc: return "max_val_auc";
        case Objective::min_val_mse: return "min_val_mse";
        case Objective::min_val_loss: return "min_val_loss";
    }
    return "?";
}

inline bool maximizes(Objective o) { return o == Objective::max_val_auc; }

struct TrainConfig {
    std::size_t epochs = 50;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::bce;
    Objective objective = Objective::max_val_auc;
    OptimizerKind optimizer = OptimizerKind::adam;
    /// Reshuffle minibatch order every epoch (cross-sectional mode). When
    /// false, batches follow time order (sequential mode).
    bool shuffle_batches = true;

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
    }
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> val_objective;

    std::size_t size() const { return train_loss.size(); }
};

inline void write_history_csv(std::ostream& out, const TrainHistory& h) {
    out << "epoch,train_loss,val_loss,val_objective\n";
    for (std::size_t e = 0; e < h.size(); ++e)
        out << (e + 1) << ',' << fmt6(h.train_loss[e]) << ',' << fmt6(h.val_loss[e]) << ','
            << fmt6(h.val_objective[e]) << '\n';
}

/// Value of the validation objective for a set of predictions. Returns NaN
/// when undefined (e.g. AUC on a single-class validation set).
inline double objective_value(Objective o, const Network& net, LossKind loss_kind, const Samples& val) {
    const auto r = forward(net, val.steps, Mode::infer);
    switch (o) {
        case Objective::max_val_auc: {
            try {
                return auc(r.output.transpose(), val.targets);
            } catch (const DataError&) {
                return std::numeric_limits<double>::quiet_NaN();
            }
        }
        case Objective::min_val_mse: return mse(r.output.transpose(), val.targets);
        case Objective::min_val_loss: return batch_objective(net, loss_kind, r, val.targets);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

/// Resumable training run: owns the network, optimizer state and generator,
/// so training for a then b epochs equals training for a + b epochs.
class Trainer {
public:
    Trainer(Network net, TrainConfig config, std::vector<bool> frozen = {})
        : net_(std::move(net)), config_(config), frozen_(std::move(frozen)), opt_(config.optimizer), rng_(config.seed) {
        config_.validate();
        if (!frozen_.empty() && frozen_.size() != net_.layer_count())
            throw ConfigError("freeze mask length does not match the layer count");
    }

    void run_epochs(const Samples& train, const Samples& val, std::size_t epochs) {
        if (train.size() == 0 || val.size() == 0) throw DataError("train: empty split");
        if (train.width() != static_cast<Eigen::Index>(net_.input_width()))
            throw DataError("train: feature width " + std::to_string(train.width()) + ", network expects " +
                            std::to_string(net_.input_width()));
        std::vector<std::size_t> order(train.size());
        for (std::size_t e = 0; e < epochs; ++e) {
            const std::size_t epoch = epochs_run_ + 1;
            std::iota(order.begin(), order.end(), std::size_t{0});
            if (config_.shuffle_batches) rng_.shuffle(order.begin(), order.end());
            double sum = 0.0;
            std::size_t batches = 0;
            ForwardTrace trace;
            for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
                const std::size_t end = std::min(order.size(), start + config_.batch_size);
                const Samples batch = train.gather({order.begin() + static_cast<std::ptrdiff_t>(start),
                                                    order.begin() + static_cast<std::ptrdiff_t>(end)});
                ForwardResult r;
                try {
                    r = forward(net_, batch.steps, Mode::train, &rng_, &trace);
                } catch (const TrainingError& err) {
                    throw TrainingError(std::string(err.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                                        std::to_string(batches + 1) + ")");
                }
                const double value = batch_objective(net_, config_.loss, r, batch.targets);
                if (!std::isfinite(value))
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                        std::to_string(batches + 1));
                const Network grad = backward(net_, trace, config_.loss, batch.targets);
                optimizer_step(opt_, net_, grad, config_.learning_rate, frozen_);
                sum += value;
                ++batches;
            }
            history_.train_loss.push_back(sum / static_cast<double>(batches));
            const auto vr = forward(net_, val.steps, Mode::infer);
            const double vl = batch_objective(net_, config_.loss, vr, val.targets);
            if (!std::isfinite(vl)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
            history_.val_loss.push_back(vl);
            history_.val_objective.push_back(objective_value(config_.objective, net_, config_.loss, val));
            ++epochs_run_;
        }
    }

    const Network& network() const { return net_; }
    Network release() { return std::move(net_); }
    const TrainHistory& history() const { return history_; }
    std::size_t epochs_run() const { return epochs_run_; }
    const TrainConfig& config() const { return config_; }

private:
    Network net_;
    TrainConfig config_;
    std::vector<bool> frozen_;
    OptimizerState opt_;
    Rng rng_;
    TrainHistory history_;
    std::size_t epochs_run_ = 0;
};

/// Minibatch training for `config.epochs` epochs.
inline std::pair<Network, TrainHistory> train(Network network, const SplitBundle& bundle, const TrainConfig& config,
                                              std::vector<bool> frozen = {}) {
    Trainer trainer(std::move(network), config, std::move(frozen));
    trainer.run_epochs(bundle.train, bundle.val, config.epochs);
    TrainHistory h = trainer.history();
    return {trainer.release(), std::move(h)};
}

enum class Task { classification, regression };

inline MetricReport evaluate(const Network& net, const Samples& samples, Task task, double threshold = 0.5) {
    if (samples.width() != static_cast<Eigen::Index>(net.input_width()))
        throw DataError("evaluate: feature width does not match the network");
    const Eigen::VectorXd p = predict(net, samples.steps);
    return task == Task::classification ? classification_report(p, samples.targets, threshold)
                                        : regression_report(p, samples.targets);
}

}  // namespace macroxfer
