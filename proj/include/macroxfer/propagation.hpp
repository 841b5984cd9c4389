#pragma once

// Forward and backward passes for the dense/LSTM network family.
//
// Batches are column-major: every matrix holds one sample per column.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "macroxfer/error.hpp"
#include "macroxfer/network.hpp"
#include "macroxfer/random.hpp"

namespace macroxfer {

enum class Mode { train, infer };

enum class LossKind { bce, mse, squared_hinge };

inline std::string_view to_string(LossKind k) {
    switch (k) {
        case LossKind::bce: return "bce";
        case LossKind::mse: return "mse";
        case LossKind::squared_hinge: return "squared_hinge";
    }
    return "?";
}

inline LossKind parse_loss(std::string_view s) {
    if (s == "bce" || s == "binary_crossentropy") return LossKind::bce;
    if (s == "mse" || s == "mean_squared_error") return LossKind::mse;
    if (s == "squared_hinge") return LossKind::squared_hinge;
    throw ConfigError("unknown loss '" + std::string(s) + "'");
}

inline constexpr double kBceEpsilon = 1e-7;

/// Per-sample loss. For squared_hinge, `prediction` is the raw output score
/// (pre-sigmoid) and the {0,1} target is mapped to {-1,+1}.
inline double loss(LossKind kind, double prediction, double target) {
    switch (kind) {
        case LossKind::bce: {
            const double p = std::clamp(prediction, kBceEpsilon, 1.0 - kBceEpsilon);
            return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
        }
        case LossKind::mse: return (prediction - target) * (prediction - target);
        case LossKind::squared_hinge: {
            const double y = target > 0.5 ? 1.0 : -1.0;
            const double m = std::max(0.0, 1.0 - y * prediction);
            return m * m;
        }
    }
    return 0.0;
}

/// lambda * sum|w| (l1) or lambda * sum w^2 (l2) over weight matrices; biases excluded.
inline double regularization_penalty(Regularization kind, double lambda, const Network& net) {
    if (kind == Regularization::none || lambda == 0.0) return 0.0;
    double sum = 0.0;
    for (const auto& b : net.blocks()) {
        if (!b.is_weight) continue;
        for (double w : b.values) sum += kind == Regularization::l1 ? std::abs(w) : w * w;
    }
    return lambda * sum;
}

inline double regularization_penalty(const Network& net) {
    return regularization_penalty(net.spec.regularization, net.spec.lambda, net);
}

// ---------------------------------------------------------------------------
// LSTM cell

struct LstmStepTrace {
    Eigen::MatrixXd x, h_prev, s_prev;
    Eigen::MatrixXd forget, input, candidate, output;  // post-activation gate values
    Eigen::MatrixXd s, tanh_s, h;
};

namespace detail {

inline Eigen::MatrixXd gate_preactivation(const LstmGate& g, const Eigen::MatrixXd& x, const Eigen::MatrixXd& h) {
    Eigen::MatrixXd a = g.input_weights * x + g.recurrent_weights * h;
    a.colwise() += g.bias;
    return a;
}

inline Eigen::MatrixXd logistic(const Eigen::MatrixXd& a) {
    return a.unaryExpr([](double v) { return sigmoid(v); });
}

inline LstmStepTrace lstm_step_batch(const LstmLayer& layer, const Eigen::MatrixXd& x, const Eigen::MatrixXd& h_prev,
                                     const Eigen::MatrixXd& s_prev) {
    LstmStepTrace t;
    t.x = x;
    t.h_prev = h_prev;
    t.s_prev = s_prev;
    t.forget = logistic(gate_preactivation(layer.gates[kForget], x, h_prev));
    t.input = logistic(gate_preactivation(layer.gates[kInput], x, h_prev));
    const Eigen::MatrixXd a_c = gate_preactivation(layer.gates[kCandidate], x, h_prev);
    t.candidate = layer.candidate == LstmCandidate::sigmoid_as_printed ? logistic(a_c) : Eigen::MatrixXd(a_c.unaryExpr([](double v) { return std::tanh(v); }));
    t.output = logistic(gate_preactivation(layer.gates[kOutput], x, h_prev));
    t.s = (t.forget.array() * s_prev.array() + t.input.array() * t.candidate.array()).matrix();
    t.tanh_s = t.s.unaryExpr([](double v) { return std::tanh(v); });
    t.h = (t.tanh_s.array() * t.output.array()).matrix();
    return t;
}

}  // namespace detail

/// One cell update: forget gate f, external input gate g, candidate c, output
/// gate q; s = f*s_prev + g*c and h = tanh(s)*q.
inline LstmState lstm_step(const LstmLayer& layer, const Eigen::VectorXd& x, const LstmState& prev) {
    if (x.size() != layer.input_size())
        throw DataError("lstm_step: input width " + std::to_string(x.size()) + ", layer expects " +
                        std::to_string(layer.input_size()));
    if (prev.s.size() != layer.hidden_size() || prev.h.size() != layer.hidden_size())
        throw DataError("lstm_step: state size does not match the layer");
    const auto t = detail::lstm_step_batch(layer, x, prev.h, prev.s);
    return {t.s.col(0), t.h.col(0)};
}

/// Fold lstm_step over a sequence; returns the final state.
inline LstmState lstm_forward(const LstmLayer& layer, std::span<const Eigen::VectorXd> sequence,
                              const LstmState* initial = nullptr) {
    if (sequence.empty()) throw DataError("lstm_forward: empty sequence");
    LstmState state = initial ? *initial : LstmState::zeros(layer.hidden_size());
    for (const auto& x : sequence) state = lstm_step(layer, x, state);
    return state;
}

// ---------------------------------------------------------------------------
// Network forward / backward

struct ForwardTrace {
    Eigen::MatrixXd lstm_input_mask;  // empty when no input dropout was drawn
    std::vector<LstmStepTrace> lstm_steps;
    std::vector<Eigen::MatrixXd> dense_input;  // input to each dense layer (post-dropout for the output layer)
    std::vector<Eigen::MatrixXd> dense_pre;
    std::vector<Eigen::MatrixXd> dense_post;
    Eigen::MatrixXd dropout_mask;  // before the output layer; empty when unused
    Eigen::RowVectorXd score;      // output pre-activation
    Eigen::RowVectorXd output;
};

struct ForwardResult {
    Eigen::RowVectorXd output;
    Eigen::RowVectorXd score;
};

namespace detail {

inline Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    const double keep = 1.0 - rate;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
    return m;
}

inline void require_finite(const Eigen::MatrixXd& m, std::size_t layer) {
    if (!m.allFinite()) throw TrainingError("non-finite activation at layer " + std::to_string(layer));
}

}  // namespace detail

/// Forward pass over a batch. `steps[k]` is time step k (width x batch); a
/// network without an LSTM layer takes exactly one step. In train mode,
/// inverted dropout masks are drawn from `rng`; infer mode ignores it.
inline ForwardResult forward(const Network& net, std::span<const Eigen::MatrixXd> steps, Mode mode, Rng* rng = nullptr,
                             ForwardTrace* trace = nullptr) {
    if (steps.empty()) throw DataError("forward: empty input sequence");
    const auto width = static_cast<Eigen::Index>(net.input_width());
    const Eigen::Index batch = steps.front().cols();
    for (const auto& s : steps)
        if (s.rows() != width || s.cols() != batch)
            throw DataError("forward: input width " + std::to_string(s.rows()) + ", network expects " +
                            std::to_string(width));
    const bool training = mode == Mode::train;
    if (training && !rng && (net.spec.dropout_rate > 0.0 || net.spec.lstm_dropout > 0.0))
        throw ConfigError("forward: train mode with dropout needs a generator");
    if (trace) *trace = ForwardTrace{};

    Eigen::MatrixXd x;
    std::size_t layer = 0;
    if (net.lstm) {
        const auto& lstm = *net.lstm;
        Eigen::MatrixXd mask;
        if (training && net.spec.lstm_dropout > 0.0)
            mask = detail::dropout_mask(width, batch, net.spec.lstm_dropout, *rng);
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(lstm.hidden_size(), batch);
        Eigen::MatrixXd s = h;
        for (const auto& step : steps) {
            const Eigen::MatrixXd in = mask.size() ? Eigen::MatrixXd(step.array() * mask.array()) : step;
            auto t = detail::lstm_step_batch(lstm, in, h, s);
            h = t.h;
            s = t.s;
            if (trace) trace->lstm_steps.push_back(std::move(t));
        }
        detail::require_finite(h, layer);
        if (trace) trace->lstm_input_mask = std::move(mask);
        x = std::move(h);
        ++layer;
    } else {
        if (steps.size() != 1) throw DataError("forward: sequence input needs an LSTM layer");
        x = steps.front();
    }

    const std::size_t hidden = net.dense.size() - 1;
    for (std::size_t l = 0; l < net.dense.size(); ++l, ++layer) {
        const auto& d = net.dense[l];
        if (l == hidden && training && net.spec.dropout_rate > 0.0) {
            Eigen::MatrixXd mask = detail::dropout_mask(x.rows(), batch, net.spec.dropout_rate, *rng);
            x = (x.array() * mask.array()).matrix();
            if (trace) trace->dropout_mask = std::move(mask);
        }
        Eigen::MatrixXd a = d.weights * x;
        a.colwise() += d.bias;
        Eigen::MatrixXd z = activation_apply(d.activation, a);
        detail::require_finite(z, layer);
        if (trace) {
            trace->dense_input.push_back(std::move(x));
            trace->dense_pre.push_back(a);
            trace->dense_post.push_back(z);
        }
        if (l == hidden) {
            ForwardResult r{z.row(0), a.row(0)};
            if (trace) {
                trace->score = r.score;
                trace->output = r.output;
            }
            return r;
        }
        x = std::move(z);
    }
    return {};
}

inline ForwardResult forward(const Network& net, const std::vector<Eigen::MatrixXd>& steps, Mode mode,
                             Rng* rng = nullptr, ForwardTrace* trace = nullptr) {
    return forward(net, std::span<const Eigen::MatrixXd>(steps), mode, rng, trace);
}

/// Single-sample cross-sectional forward pass.
inline double dense_forward(const Network& net, const Eigen::VectorXd& input, Mode mode = Mode::infer,
                            Rng* rng = nullptr, ForwardTrace* trace = nullptr) {
    std::vector<Eigen::MatrixXd> steps{Eigen::MatrixXd(input)};
    return forward(net, steps, mode, rng, trace).output(0);
}

/// Mean per-sample data loss over a batch.
inline double data_loss(LossKind kind, const ForwardResult& r, const Eigen::VectorXd& targets) {
    if (r.output.size() != targets.size()) throw DataError("data_loss: prediction/target length mismatch");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < targets.size(); ++i)
        sum += loss(kind, kind == LossKind::squared_hinge ? r.score(i) : r.output(i), targets(i));
    return targets.size() ? sum / static_cast<double>(targets.size()) : 0.0;
}

/// Training objective of a batch: mean data loss plus the regularization penalty.
inline double batch_objective(const Network& net, LossKind kind, const ForwardResult& r,
                              const Eigen::VectorXd& targets) {
    return data_loss(kind, r, targets) + regularization_penalty(net);
}

/// Exact gradient of batch_objective with respect to every parameter,
/// including backpropagation through time for the LSTM layer. Returned with
/// the network's own shapes.
inline Network backward(const Network& net, const ForwardTrace& trace, LossKind kind, const Eigen::VectorXd& targets) {
    const Eigen::Index batch = trace.output.size();
    if (batch == 0 || targets.size() != batch || trace.dense_pre.size() != net.dense.size() ||
        (net.lstm.has_value() != !trace.lstm_steps.empty()))
        throw DataError("backward: trace does not match the network/targets");

    Network grad = net.zeros_like();
    const double inv_b = 1.0 / static_cast<double>(batch);
    const auto& out_layer = net.output_layer();

    // dL/d(score) per sample
    Eigen::MatrixXd delta(1, batch);
    for (Eigen::Index i = 0; i < batch; ++i) {
        const double y = targets(i);
        const double p = trace.output(i);
        const double a = trace.score(i);
        double d = 0.0;
        switch (kind) {
            case LossKind::bce: {
                if (p < kBceEpsilon || p > 1.0 - kBceEpsilon) {
                    d = 0.0;  // inside the clamp the loss is flat
                } else if (out_layer.activation == Activation::sigmoid) {
                    d = p - y;
                } else {
                    d = (-(y / p) + (1.0 - y) / (1.0 - p)) * activation_derivative(out_layer.activation, a, p);
                }
                break;
            }
            case LossKind::mse: d = 2.0 * (p - y) * activation_derivative(out_layer.activation, a, p); break;
            case LossKind::squared_hinge: {
                const double s = y > 0.5 ? 1.0 : -1.0;
                d = -2.0 * s * std::max(0.0, 1.0 - s * a);
                break;
            }
        }
        delta(0, i) = d * inv_b;
    }

    for (std::size_t l = net.dense.size(); l-- > 0;) {
        const auto& d = net.dense[l];
        auto& g = grad.dense[l];
        if (l + 1 != net.dense.size())
            delta = (delta.array() * activation_derivative(d.activation, trace.dense_pre[l], trace.dense_post[l]).array())
                        .matrix();
        g.weights = delta * trace.dense_input[l].transpose();
        g.bias = delta.rowwise().sum();
        delta = d.weights.transpose() * delta;  // d(input of layer l)
        if (l + 1 == net.dense.size() && trace.dropout_mask.size())
            delta = (delta.array() * trace.dropout_mask.array()).matrix();
    }

    if (net.lstm) {
        const auto& lstm = *net.lstm;
        auto& lg = *grad.lstm;
        const bool sigmoid_candidate = lstm.candidate == LstmCandidate::sigmoid_as_printed;
        Eigen::MatrixXd dh = delta;
        Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(dh.rows(), dh.cols());
        for (std::size_t t = trace.lstm_steps.size(); t-- > 0;) {
            const auto& st = trace.lstm_steps[t];
            const Eigen::ArrayXXd q = st.output.array();
            const Eigen::ArrayXXd ts = st.tanh_s.array();
            ds = (ds.array() + dh.array() * q * (1.0 - ts * ts)).matrix();
            std::array<Eigen::MatrixXd, 4> da;
            da[kOutput] = (dh.array() * ts * q * (1.0 - q)).matrix();
            const Eigen::ArrayXXd f = st.forget.array();
            const Eigen::ArrayXXd gi = st.input.array();
            const Eigen::ArrayXXd c = st.candidate.array();
            da[kForget] = (ds.array() * st.s_prev.array() * f * (1.0 - f)).matrix();
            da[kInput] = (ds.array() * c * gi * (1.0 - gi)).matrix();
            da[kCandidate] = sigmoid_candidate ? Eigen::MatrixXd(ds.array() * gi * c * (1.0 - c))
                                               : Eigen::MatrixXd(ds.array() * gi * (1.0 - c * c));
            Eigen::MatrixXd dh_prev = Eigen::MatrixXd::Zero(dh.rows(), dh.cols());
            for (std::size_t k = 0; k < 4; ++k) {
                lg.gates[k].input_weights.noalias() += da[k] * st.x.transpose();
                lg.gates[k].recurrent_weights.noalias() += da[k] * st.h_prev.transpose();
                lg.gates[k].bias += da[k].rowwise().sum();
                dh_prev.noalias() += lstm.gates[k].recurrent_weights.transpose() * da[k];
            }
            ds = (ds.array() * f).matrix();
            dh = std::move(dh_prev);
        }
    }

    // penalty
    const auto kind_reg = net.spec.regularization;
    const double lambda = net.spec.lambda;
    if (kind_reg != Regularization::none && lambda != 0.0) {
        const auto pb = net.blocks();
        auto gb = grad.blocks();
        for (std::size_t b = 0; b < pb.size(); ++b) {
            if (!pb[b].is_weight) continue;
            for (std::size_t i = 0; i < pb[b].values.size(); ++i) {
                const double w = pb[b].values[i];
                gb[b].values[i] += kind_reg == Regularization::l1 ? lambda * ((w > 0.0) - (w < 0.0)) : 2.0 * lambda * w;
            }
        }
    }
    return grad;
}

/// Infer-mode predictions for every sample, processed in chunks.
inline Eigen::VectorXd predict(const Network& net, const std::vector<Eigen::MatrixXd>& steps,
                               Eigen::Index chunk = 512) {
    if (steps.empty()) throw DataError("predict: no input steps");
    const Eigen::Index n = steps.front().cols();
    Eigen::VectorXd out(n);
    for (Eigen::Index start = 0; start < n; start += chunk) {
        const Eigen::Index len = std::min(chunk, n - start);
        std::vector<Eigen::MatrixXd> part;
        part.reserve(steps.size());
        for (const auto& s : steps) part.push_back(s.middleCols(start, len));
        out.segment(start, len) = forward(net, part, Mode::infer).output.transpose();
    }
    return out;
}

}  // namespace macroxfer
