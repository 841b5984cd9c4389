#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "macroxfer/error.hpp"
#include "macroxfer/random.hpp"

namespace macroxfer {

enum class Activation { relu, tanh, sigmoid, identity };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::identity: return "identity";
    }
    return "?";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "identity" || s == "linear") return Activation::identity;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline double sigmoid(double x) {
    // split on sign so exp never overflows
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double activation_apply(Activation kind, double x) {
    switch (kind) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
        case Activation::sigmoid: return sigmoid(x);
        case Activation::identity: return x;
    }
    return x;
}

/// Derivative expressed through the pre-activation `a` and output `z = g(a)`.
/// ReLU'(0) is 0.
inline double activation_derivative(Activation kind, double a, double z) {
    switch (kind) {
        case Activation::relu: return a > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: return 1.0 - z * z;
        case Activation::sigmoid: return z * (1.0 - z);
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

inline Eigen::MatrixXd activation_apply(Activation kind, const Eigen::MatrixXd& a) {
    return a.unaryExpr([kind](double x) { return activation_apply(kind, x); });
}

inline Eigen::MatrixXd activation_derivative(Activation kind, const Eigen::MatrixXd& a, const Eigen::MatrixXd& z) {
    return a.binaryExpr(z, [kind](double x, double y) { return activation_derivative(kind, x, y); });
}

enum class Regularization { none, l1, l2 };

inline std::string_view to_string(Regularization r) {
    switch (r) {
        case Regularization::none: return "none";
        case Regularization::l1: return "l1";
        case Regularization::l2: return "l2";
    }
    return "?";
}

inline Regularization parse_regularization(std::string_view s) {
    if (s == "none") return Regularization::none;
    if (s == "l1") return Regularization::l1;
    if (s == "l2") return Regularization::l2;
    throw ConfigError("unknown regularization '" + std::string(s) + "'");
}

/// Activation of the LSTM candidate block. The printed cell equations use a
/// logistic candidate; most frameworks use tanh.
enum class LstmCandidate { sigmoid_as_printed, tanh_conventional };

inline std::string_view to_string(LstmCandidate c) {
    return c == LstmCandidate::sigmoid_as_printed ? "sigmoid_as_printed" : "tanh_conventional";
}

inline LstmCandidate parse_lstm_candidate(std::string_view s) {
    if (s == "sigmoid_as_printed") return LstmCandidate::sigmoid_as_printed;
    if (s == "tanh_conventional") return LstmCandidate::tanh_conventional;
    throw ConfigError("unknown lstm_candidate '" + std::string(s) + "'");
}

struct NetworkSpec {
    std::size_t input_width = 1;
    std::size_t lstm_units = 0;  // 0 = no LSTM layer
    LstmCandidate lstm_candidate = LstmCandidate::sigmoid_as_printed;
    double lstm_dropout = 0.0;  // on the LSTM inputs
    std::size_t dense_depth = 1;  // hidden dense layers, 0..4
    std::size_t dense_units = 16;
    Activation hidden_activation = Activation::relu;
    double dropout_rate = 0.0;  // after the last hidden layer
    Activation output_activation = Activation::sigmoid;
    double output_bias_init = 0.0;
    Regularization regularization = Regularization::none;
    double lambda = 0.0;

    bool has_lstm() const { return lstm_units > 0; }
    std::size_t layer_count() const { return (has_lstm() ? 1 : 0) + dense_depth + 1; }

    void validate() const {
        if (input_width == 0) throw ConfigError("network input width must be positive");
        if (dense_depth > 0 && dense_units == 0) throw ConfigError("dense_units must be positive");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
        if (!(lstm_dropout >= 0.0 && lstm_dropout < 1.0)) throw ConfigError("lstm_dropout must lie in [0, 1)");
        if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
        if (!std::isfinite(output_bias_init)) throw ConfigError("output_bias_init must be finite");
    }

    bool operator==(const NetworkSpec&) const = default;
};

struct DenseLayer {
    Eigen::MatrixXd weights;  // units_out x units_in
    Eigen::VectorXd bias;     // units_out
    Activation activation = Activation::identity;

    Eigen::Index units_in() const { return weights.cols(); }
    Eigen::Index units_out() const { return weights.rows(); }
    bool operator==(const DenseLayer& o) const {
        return activation == o.activation && weights == o.weights && bias == o.bias;
    }
};

/// One gate (or the candidate block) of an LSTM layer.
struct LstmGate {
    Eigen::MatrixXd input_weights;      // hidden x input   (U)
    Eigen::MatrixXd recurrent_weights;  // hidden x hidden  (W)
    Eigen::VectorXd bias;               // hidden           (b)
    bool operator==(const LstmGate& o) const {
        return input_weights == o.input_weights && recurrent_weights == o.recurrent_weights && bias == o.bias;
    }
};

enum GateIndex : std::size_t { kForget = 0, kInput = 1, kCandidate = 2, kOutput = 3 };
inline constexpr std::array<std::string_view, 4> kGateNames{"forget", "input", "candidate", "output"};

struct LstmLayer {
    std::array<LstmGate, 4> gates;
    LstmCandidate candidate = LstmCandidate::sigmoid_as_printed;

    Eigen::Index hidden_size() const { return gates[0].bias.size(); }
    Eigen::Index input_size() const { return gates[0].input_weights.cols(); }
    bool operator==(const LstmLayer& o) const { return candidate == o.candidate && gates == o.gates; }
};

struct LstmState {
    Eigen::VectorXd s;  // cell state
    Eigen::VectorXd h;  // output

    static LstmState zeros(Eigen::Index hidden) {
        return {Eigen::VectorXd::Zero(hidden), Eigen::VectorXd::Zero(hidden)};
    }
};

/// A parameter array viewed as flat storage, tagged with its layer.
template <class T>
struct ParamBlockT {
    std::size_t layer;
    std::span<T> values;
    bool is_weight;  // false for biases (excluded from regularization)
};
using ParamBlock = ParamBlockT<double>;
using ConstParamBlock = ParamBlockT<const double>;

/// Layers in order: optional LSTM, hidden dense layers, output dense layer.
class Network {
public:
    NetworkSpec spec;
    std::optional<LstmLayer> lstm;
    std::vector<DenseLayer> dense;  // hidden layers followed by the output layer

    Network() = default;

    /// Glorot-uniform weights, zero biases, output bias from the spec.
    static Network create(const NetworkSpec& spec, Rng& rng) {
        spec.validate();
        Network net;
        net.spec = spec;
        const auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols) {
            const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
            Eigen::MatrixXd m(rows, cols);
            // column-major fill order is fixed, so draws are reproducible
            for (Eigen::Index j = 0; j < cols; ++j)
                for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-limit, limit);
            return m;
        };
        auto width = static_cast<Eigen::Index>(spec.input_width);
        if (spec.has_lstm()) {
            const auto h = static_cast<Eigen::Index>(spec.lstm_units);
            LstmLayer layer;
            layer.candidate = spec.lstm_candidate;
            for (auto& g : layer.gates) {
                g.input_weights = glorot(h, width);
                g.recurrent_weights = glorot(h, h);
                g.bias = Eigen::VectorXd::Zero(h);
            }
            net.lstm = std::move(layer);
            width = h;
        }
        for (std::size_t l = 0; l < spec.dense_depth; ++l) {
            const auto u = static_cast<Eigen::Index>(spec.dense_units);
            net.dense.push_back({glorot(u, width), Eigen::VectorXd::Zero(u), spec.hidden_activation});
            width = u;
        }
        net.dense.push_back({glorot(1, width), Eigen::VectorXd::Constant(1, spec.output_bias_init),
                             spec.output_activation});
        return net;
    }

    static Network create(const NetworkSpec& spec, std::uint64_t seed) {
        Rng rng(seed);
        return create(spec, rng);
    }

    std::size_t layer_count() const { return (lstm ? 1 : 0) + dense.size(); }
    std::size_t input_width() const { return spec.input_width; }
    const DenseLayer& output_layer() const { return dense.back(); }
    DenseLayer& output_layer() { return dense.back(); }

    /// Index of dense layer `i` in the overall layer numbering.
    std::size_t dense_layer_index(std::size_t i) const { return (lstm ? 1 : 0) + i; }

    std::vector<ParamBlock> blocks() { return blocks_impl<double>(*this); }
    std::vector<ConstParamBlock> blocks() const { return blocks_impl<const double>(*this); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& b : blocks()) n += b.values.size();
        return n;
    }

    /// Same architecture with every parameter zero (gradient accumulator).
    Network zeros_like() const {
        Network z = *this;
        for (auto& b : z.blocks()) std::fill(b.values.begin(), b.values.end(), 0.0);
        return z;
    }

    bool operator==(const Network& o) const { return spec == o.spec && lstm == o.lstm && dense == o.dense; }

private:
    template <class T, class Net>
    static std::vector<ParamBlockT<T>> blocks_impl(Net& net) {
        std::vector<ParamBlockT<T>> out;
        const auto add = [&out](std::size_t layer, auto& m, bool is_weight) {
            out.push_back({layer, std::span<T>(m.data(), static_cast<std::size_t>(m.size())), is_weight});
        };
        std::size_t layer = 0;
        if (net.lstm) {
            for (auto& g : net.lstm->gates) {
                add(layer, g.input_weights, true);
                add(layer, g.recurrent_weights, true);
                add(layer, g.bias, false);
            }
            ++layer;
        }
        for (auto& d : net.dense) {
            add(layer, d.weights, true);
            add(layer, d.bias, false);
            ++layer;
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw DataError("matrix data length does not match its shape");
    Eigen::MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[k++].get<double>();
    return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline nlohmann::json spec_to_json(const NetworkSpec& s) {
    return {{"input_width", s.input_width},
            {"lstm_units", s.lstm_units},
            {"lstm_candidate", to_string(s.lstm_candidate)},
            {"lstm_dropout", s.lstm_dropout},
            {"dense_depth", s.dense_depth},
            {"dense_units", s.dense_units},
            {"hidden_activation", to_string(s.hidden_activation)},
            {"dropout_rate", s.dropout_rate},
            {"output_activation", to_string(s.output_activation)},
            {"output_bias_init", s.output_bias_init},
            {"regularization", to_string(s.regularization)},
            {"lambda", s.lambda}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec s;
    s.input_width = j.at("input_width").get<std::size_t>();
    s.lstm_units = j.value("lstm_units", std::size_t{0});
    s.lstm_candidate = parse_lstm_candidate(j.value("lstm_candidate", std::string("sigmoid_as_printed")));
    s.lstm_dropout = j.value("lstm_dropout", 0.0);
    s.dense_depth = j.at("dense_depth").get<std::size_t>();
    s.dense_units = j.value("dense_units", std::size_t{0});
    s.hidden_activation = parse_activation(j.value("hidden_activation", std::string("relu")));
    s.dropout_rate = j.value("dropout_rate", 0.0);
    s.output_activation = parse_activation(j.value("output_activation", std::string("sigmoid")));
    s.output_bias_init = j.value("output_bias_init", 0.0);
    s.regularization = parse_regularization(j.value("regularization", std::string("none")));
    s.lambda = j.value("lambda", 0.0);
    return s;
}

/// Self-describing document; doubles are written in shortest round-trip form,
/// so parsing the output reproduces every parameter bit for bit.
inline nlohmann::json to_json(const Network& net) {
    nlohmann::json layers = nlohmann::json::array();
    if (net.lstm) {
        nlohmann::json gates;
        for (std::size_t g = 0; g < 4; ++g) {
            const auto& gate = net.lstm->gates[g];
            gates[std::string(kGateNames[g])] = {{"input_weights", detail::matrix_to_json(gate.input_weights)},
                                                 {"recurrent_weights", detail::matrix_to_json(gate.recurrent_weights)},
                                                 {"bias", detail::vector_to_json(gate.bias)}};
        }
        layers.push_back({{"type", "lstm"},
                          {"hidden_size", net.lstm->hidden_size()},
                          {"input_size", net.lstm->input_size()},
                          {"candidate", to_string(net.lstm->candidate)},
                          {"gates", gates}});
    }
    for (const auto& d : net.dense)
        layers.push_back({{"type", "dense"},
                          {"activation", to_string(d.activation)},
                          {"weights", detail::matrix_to_json(d.weights)},
                          {"bias", detail::vector_to_json(d.bias)}});
    return {{"format", "macroxfer-network"}, {"version", 1}, {"spec", spec_to_json(net.spec)}, {"layers", layers}};
}

inline Network network_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != "macroxfer-network") throw DataError("not a macroxfer network document");
    Network net;
    net.spec = spec_from_json(j.at("spec"));
    for (const auto& layer : j.at("layers")) {
        const auto type = layer.at("type").get<std::string>();
        if (type == "lstm") {
            if (net.lstm || !net.dense.empty()) throw DataError("LSTM layer must come first");
            LstmLayer l;
            l.candidate = parse_lstm_candidate(layer.at("candidate").get<std::string>());
            for (std::size_t g = 0; g < 4; ++g) {
                const auto& gj = layer.at("gates").at(std::string(kGateNames[g]));
                l.gates[g] = {detail::matrix_from_json(gj.at("input_weights")),
                              detail::matrix_from_json(gj.at("recurrent_weights")),
                              detail::vector_from_json(gj.at("bias"))};
            }
            net.lstm = std::move(l);
        } else if (type == "dense") {
            net.dense.push_back({detail::matrix_from_json(layer.at("weights")),
                                 detail::vector_from_json(layer.at("bias")),
                                 parse_activation(layer.at("activation").get<std::string>())});
        } else {
            throw DataError("unknown layer type '" + type + "'");
        }
    }
    // shape chain check
    auto width = static_cast<Eigen::Index>(net.spec.input_width);
    if (net.lstm) {
        const auto h = net.lstm->hidden_size();
        for (const auto& g : net.lstm->gates)
            if (g.input_weights.rows() != h || g.input_weights.cols() != width || g.recurrent_weights.rows() != h ||
                g.recurrent_weights.cols() != h || g.bias.size() != h)
                throw DataError("inconsistent LSTM gate shapes");
        width = h;
    }
    if (net.dense.empty()) throw DataError("network has no output layer");
    for (const auto& d : net.dense) {
        if (d.weights.cols() != width || d.bias.size() != d.weights.rows())
            throw DataError("dense layer shapes do not chain");
        width = d.weights.rows();
    }
    if (width != 1) throw DataError("network output width must be 1");
    return net;
}

inline std::string serialize(const Network& net) { return to_json(net).dump(); }

inline Network deserialize(std::string_view text) {
    try {
        return network_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed network document: ") + e.what());
    }
}

}  // namespace macroxfer
