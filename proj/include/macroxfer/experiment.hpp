#pragma once

// Configuration-driven experiments: load, transform, split, (tune), train,
// (transfer), evaluate, and write the result files.

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "macroxfer/dataset.hpp"
#include "macroxfer/disagg.hpp"
#include "macroxfer/error.hpp"
#include "macroxfer/metrics.hpp"
#include "macroxfer/network.hpp"
#include "macroxfer/optim.hpp"
#include "macroxfer/synthetic.hpp"
#include "macroxfer/transfer.hpp"
#include "macroxfer/tuner.hpp"

namespace macroxfer {

enum class TaskKind { cycle_classification, output_gap_regression, disaggregation, synth };
enum class ModelKind { logit_baseline, linear_baseline, fnn, lstm };
enum class FeatureTransform { level, first_log_diff, yoy };

inline TaskKind parse_task(std::string_view s) {
    if (s == "cycle_classification") return TaskKind::cycle_classification;
    if (s == "output_gap_regression") return TaskKind::output_gap_regression;
    if (s == "disaggregation") return TaskKind::disaggregation;
    if (s == "synth") return TaskKind::synth;
    throw ConfigError("unknown task '" + std::string(s) + "'");
}

inline std::string_view to_string(TaskKind t) {
    switch (t) {
        case TaskKind::cycle_classification: return "cycle_classification";
        case TaskKind::output_gap_regression: return "output_gap_regression";
        case TaskKind::disaggregation: return "disaggregation";
        case TaskKind::synth: return "synth";
    }
    return "?";
}

inline ModelKind parse_model(std::string_view s) {
    if (s == "logit_baseline") return ModelKind::logit_baseline;
    if (s == "linear_baseline") return ModelKind::linear_baseline;
    if (s == "fnn") return ModelKind::fnn;
    if (s == "lstm") return ModelKind::lstm;
    throw ConfigError("unknown model '" + std::string(s) + "'");
}

inline std::string_view to_string(ModelKind m) {
    switch (m) {
        case ModelKind::logit_baseline: return "logit_baseline";
        case ModelKind::linear_baseline: return "linear_baseline";
        case ModelKind::fnn: return "fnn";
        case ModelKind::lstm: return "lstm";
    }
    return "?";
}

inline FeatureTransform parse_transform(std::string_view s) {
    if (s == "level") return FeatureTransform::level;
    if (s == "first_log_diff") return FeatureTransform::first_log_diff;
    if (s == "yoy") return FeatureTransform::yoy;
    throw ConfigError("unknown transform '" + std::string(s) + "'");
}

inline std::string_view to_string(FeatureTransform t) {
    switch (t) {
        case FeatureTransform::level: return "level";
        case FeatureTransform::first_log_diff: return "first_log_diff";
        case FeatureTransform::yoy: return "yoy";
    }
    return "?";
}

inline bool is_baseline(ModelKind m) { return m == ModelKind::logit_baseline || m == ModelKind::linear_baseline; }

struct DataConfig {
    std::string path;
    std::string date_column = "date";
    Frequency frequency = Frequency::quarterly;
    std::string target;
    std::vector<std::string> features;  // empty: every column except date and target
};

struct NetworkConfig {
    std::size_t dense_depth = 2;
    std::size_t dense_units = 32;
    std::size_t lstm_units = 32;
    Activation activation = Activation::relu;
    std::optional<double> dropout;       // default 0.5 (fnn/lstm), 0 for baselines
    std::optional<double> lstm_dropout;  // default 0.3
    std::optional<Regularization> regularization;  // default none (classification), l1 (regression)
    double lambda = 1e-3;
    LstmCandidate lstm_candidate = LstmCandidate::sigmoid_as_printed;
};

struct TunerBlock {
    bool enabled = false;
    std::size_t max_resource = 10;
    std::size_t eta = 3;
};

enum class DisaggMethod { chowlin, ride };

inline DisaggMethod parse_disagg_method(std::string_view s) {
    if (s == "chowlin") return DisaggMethod::chowlin;
    if (s == "ride") return DisaggMethod::ride;
    throw ConfigError("unknown disaggregation method '" + std::string(s) + "'");
}

struct DisaggBlock {
    std::string target_path;
    std::string indicators_path;
    std::string target_column;  // empty: the only non-date column
    std::string date_column = "date";
    DisaggMethod method = DisaggMethod::chowlin;
    AggregationMode mode = AggregationMode::flow;
    std::optional<double> rho;  // empty: estimate
    bool intercept = true;
    RideTransform ride_transform = RideTransform::level;
    std::size_t epochs = 50;
    std::string output = "monthly.csv";
};

enum class SynthKind { regime, gap, monthly };

inline SynthKind parse_synth_kind(std::string_view s) {
    if (s == "regime") return SynthKind::regime;
    if (s == "gap") return SynthKind::gap;
    if (s == "monthly") return SynthKind::monthly;
    throw ConfigError("unknown synth kind '" + std::string(s) + "'");
}

struct SynthBlock {
    SynthKind kind = SynthKind::regime;
    std::size_t n = 400;  // periods (quarters for monthly: target quarters)
    std::string form = "growth";  // growth | level (regime only)
    std::size_t extra_months = 0;
    std::string output = "synth.csv";
    std::string target_output;  // monthly kind: quarterly target file
};

struct ExperimentConfig {
    TaskKind task = TaskKind::cycle_classification;
    DataConfig data;
    FeatureTransform transform = FeatureTransform::level;
    bool transform_set = false;
    ModelKind model = ModelKind::fnn;
    SplitOptions split;
    bool split_seed_set = false;
    std::size_t window = 1;
    bool window_set = false;
    NetworkConfig network;
    TrainConfig train;
    std::optional<TrainConfig> baseline_train;  // transfer runs: budget for the comparison baseline
    TunerBlock tuner;
    std::optional<TransferPlanFile> transfer;
    DisaggBlock disagg;
    SynthBlock synth;
    double threshold = 0.5;
    std::string output_dir = "out";
    std::uint64_t seed = 0;

    Task supervised_task() const {
        return task == TaskKind::cycle_classification ? Task::classification : Task::regression;
    }

    /// Task/model/setting combinations; runs before any data is read.
    void validate() const {
        switch (task) {
            case TaskKind::cycle_classification:
                if (model == ModelKind::linear_baseline)
                    throw ConfigError("model linear_baseline does not fit task cycle_classification");
                break;
            case TaskKind::output_gap_regression:
                if (model == ModelKind::logit_baseline)
                    throw ConfigError("model logit_baseline does not fit task output_gap_regression");
                break;
            case TaskKind::disaggregation:
                if (disagg.target_path.empty() || disagg.indicators_path.empty())
                    throw ConfigError("disaggregation needs disagg.target and disagg.indicators");
                if (disagg.rho && !(std::abs(*disagg.rho) < 1.0)) throw ConfigError("disagg.rho must lie in (-1, 1)");
                if (disagg.method == DisaggMethod::ride && disagg.epochs == 0)
                    throw ConfigError("disagg.epochs must be positive");
                return;
            case TaskKind::synth:
                if (synth.form != "growth" && synth.form != "level") throw ConfigError("synth.form must be growth or level");
                return;
        }
        if (data.path.empty()) throw ConfigError("data.path is required");
        if (data.target.empty()) throw ConfigError("data.target is required");
        if (std::find(data.features.begin(), data.features.end(), data.target) != data.features.end())
            throw ConfigError("data.target must not be listed among data.features");
        if (window < 1) throw ConfigError("window must be at least 1");
        if (window > 1 && model != ModelKind::lstm && !transfer) throw ConfigError("window > 1 requires the lstm model");
        if (tuner.enabled && is_baseline(model)) throw ConfigError("tuner does not apply to baseline models");
        if (tuner.enabled) TunerConfig{tuner.max_resource, tuner.eta}.validate();
        train.validate();
        if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
        const auto check_rate = [](const std::optional<double>& r, const char* what) {
            if (r && !(*r >= 0.0 && *r < 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1)");
        };
        check_rate(network.dropout, "network.dropout");
        check_rate(network.lstm_dropout, "network.lstm_dropout");
        if (network.dense_depth > 4) throw ConfigError("network.dense_depth must be 0..4");
        if (network.dense_depth > 0 && network.dense_units == 0) throw ConfigError("network.dense_units must be positive");
        if (model == ModelKind::lstm && network.lstm_units == 0) throw ConfigError("network.lstm_units must be positive");
        if (!(network.lambda >= 0.0)) throw ConfigError("network.lambda must be nonnegative");
        if (!(split.test_fraction > 0.0 && split.test_fraction < 1.0) ||
            !(split.val_fraction > 0.0 && split.val_fraction < 1.0))
            throw ConfigError("split fractions must lie in (0, 1)");
        if (transfer && transfer->source_model.empty()) throw ConfigError("transfer.source_model is required");
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> keys, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end())
            throw ConfigError(std::string("unknown key '") + k + "' in " + where);
    }
}

inline std::string resolve_path(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return p;
    const std::filesystem::path path(p);
    return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace detail

/// Parse a config document. Relative paths resolve against `base_dir`.
inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    using detail::reject_unknown;
    ExperimentConfig c;
    try {
        reject_unknown(j,
                       {"task", "data", "transform", "model", "split", "window", "network", "train", "baseline_train", "tuner", "transfer",
                        "disagg", "synth", "threshold", "output_dir", "seed"},
                       "config");
        c.task = parse_task(j.at("task").get<std::string>());
        c.seed = j.value("seed", std::uint64_t{0});
        c.split.seed = c.seed;
        c.train.seed = Rng::derive(c.seed, 2);
        if (j.contains("data")) {
            const auto& d = j["data"];
            reject_unknown(d, {"path", "date_column", "frequency", "target", "features"}, "data");
            c.data.path = detail::resolve_path(base_dir, d.value("path", std::string()));
            c.data.date_column = d.value("date_column", c.data.date_column);
            c.data.frequency = parse_frequency(d.value("frequency", std::string("quarterly")));
            c.data.target = d.value("target", std::string());
            c.data.features = d.value("features", std::vector<std::string>{});
        }
        if (j.contains("transform")) {
            c.transform = parse_transform(j["transform"].get<std::string>());
            c.transform_set = true;
        }
        if (j.contains("model")) c.model = parse_model(j["model"].get<std::string>());
        if (j.contains("split")) {
            const auto& s = j["split"];
            reject_unknown(s, {"test_fraction", "val_fraction", "shuffle", "seed"}, "split");
            c.split.test_fraction = s.value("test_fraction", c.split.test_fraction);
            c.split.val_fraction = s.value("val_fraction", c.split.val_fraction);
            c.split.shuffle = s.value("shuffle", c.split.shuffle);
            if (s.contains("seed")) {
                c.split.seed = s["seed"].get<std::uint64_t>();
                c.split_seed_set = true;
            }
        }
        if (j.contains("window")) {
            c.window = j["window"].get<std::size_t>();
            c.window_set = true;
        }
        if (j.contains("network")) {
            const auto& n = j["network"];
            reject_unknown(n,
                           {"dense_depth", "dense_units", "lstm_units", "activation", "dropout", "lstm_dropout",
                            "regularization", "lambda", "lstm_candidate"},
                           "network");
            c.network.dense_depth = n.value("dense_depth", c.network.dense_depth);
            c.network.dense_units = n.value("dense_units", c.network.dense_units);
            c.network.lstm_units = n.value("lstm_units", c.network.lstm_units);
            if (n.contains("activation")) c.network.activation = parse_activation(n["activation"].get<std::string>());
            if (n.contains("dropout")) c.network.dropout = n["dropout"].get<double>();
            if (n.contains("lstm_dropout")) c.network.lstm_dropout = n["lstm_dropout"].get<double>();
            if (n.contains("regularization"))
                c.network.regularization = parse_regularization(n["regularization"].get<std::string>());
            c.network.lambda = n.value("lambda", c.network.lambda);
            if (n.contains("lstm_candidate"))
                c.network.lstm_candidate = parse_lstm_candidate(n["lstm_candidate"].get<std::string>());
        }
        const auto read_train = [](const nlohmann::json& t, TrainConfig& tc, const char* where) {
            reject_unknown(t, {"epochs", "learning_rate", "batch_size", "optimizer", "seed"}, where);
            tc.epochs = t.value("epochs", tc.epochs);
            tc.learning_rate = t.value("learning_rate", tc.learning_rate);
            tc.batch_size = t.value("batch_size", tc.batch_size);
            if (t.contains("optimizer")) tc.optimizer = parse_optimizer(t["optimizer"].get<std::string>());
            if (t.contains("seed")) tc.seed = t["seed"].get<std::uint64_t>();
        };
        if (j.contains("train")) read_train(j["train"], c.train, "train");
        if (j.contains("baseline_train")) {
            c.baseline_train = c.train;
            read_train(j["baseline_train"], *c.baseline_train, "baseline_train");
        }
        if (j.contains("tuner")) {
            const auto& t = j["tuner"];
            reject_unknown(t, {"enabled", "max_resource", "eta"}, "tuner");
            c.tuner.enabled = t.value("enabled", true);
            c.tuner.max_resource = t.value("max_resource", c.tuner.max_resource);
            c.tuner.eta = t.value("eta", c.tuner.eta);
        }
        if (j.contains("transfer")) {
            reject_unknown(j["transfer"], {"source_model", "mode", "lock_mask", "feature_map"}, "transfer");
            auto plan = TransferPlanFile::from_json(j["transfer"]);
            plan.source_model = detail::resolve_path(base_dir, plan.source_model);
            c.transfer = std::move(plan);
        }
        if (j.contains("disagg")) {
            const auto& d = j["disagg"];
            reject_unknown(d,
                           {"target", "indicators", "target_column", "date_column", "method", "mode", "rho",
                            "intercept", "ride_transform", "epochs", "output"},
                           "disagg");
            c.disagg.target_path = detail::resolve_path(base_dir, d.value("target", std::string()));
            c.disagg.indicators_path = detail::resolve_path(base_dir, d.value("indicators", std::string()));
            c.disagg.target_column = d.value("target_column", std::string());
            c.disagg.date_column = d.value("date_column", c.disagg.date_column);
            if (d.contains("method")) c.disagg.method = parse_disagg_method(d["method"].get<std::string>());
            if (d.contains("mode")) c.disagg.mode = parse_aggregation(d["mode"].get<std::string>());
            if (d.contains("rho") && !(d["rho"].is_string() && d["rho"] == "estimate"))
                c.disagg.rho = d["rho"].get<double>();
            c.disagg.intercept = d.value("intercept", c.disagg.intercept);
            if (d.contains("ride_transform"))
                c.disagg.ride_transform = parse_ride_transform(d["ride_transform"].get<std::string>());
            c.disagg.epochs = d.value("epochs", c.disagg.epochs);
            c.disagg.output = d.value("output", c.disagg.output);
        }
        if (j.contains("synth")) {
            const auto& s = j["synth"];
            reject_unknown(s, {"kind", "n", "form", "extra_months", "output", "target_output"}, "synth");
            if (s.contains("kind")) c.synth.kind = parse_synth_kind(s["kind"].get<std::string>());
            c.synth.n = s.value("n", c.synth.n);
            c.synth.form = s.value("form", c.synth.form);
            c.synth.extra_months = s.value("extra_months", c.synth.extra_months);
            c.synth.output = s.value("output", c.synth.output);
            c.synth.target_output = s.value("target_output", std::string());
        }
        c.threshold = j.value("threshold", c.threshold);
        c.output_dir = detail::resolve_path(base_dir, j.value("output_dir", c.output_dir));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    c.train.loss = c.task == TaskKind::output_gap_regression ? LossKind::mse : LossKind::bce;
    c.train.objective = c.task == TaskKind::output_gap_regression ? Objective::min_val_mse : Objective::max_val_auc;
    c.train.shuffle_batches = c.model != ModelKind::lstm;
    if (c.baseline_train) {
        c.baseline_train->loss = c.train.loss;
        c.baseline_train->objective = c.train.objective;
        if (!c.transfer) throw ConfigError("baseline_train applies to transfer runs only");
        c.baseline_train->validate();
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Data

struct Dataset {
    std::vector<std::string> features;
    std::string target;
    Eigen::MatrixXd x;  // row = period
    Eigen::VectorXd y;  // NaN when the target column is absent
    std::vector<Period> index;
};

inline SeriesFrame apply_transform(const SeriesFrame& f, FeatureTransform t) {
    switch (t) {
        case FeatureTransform::level: return f;
        case FeatureTransform::first_log_diff: return log_first_difference(f);
        case FeatureTransform::yoy: return yoy_change(f);
    }
    return f;
}

/// Load, select, trim missing rows, transform the features and align the
/// target to the transformed periods. The target itself is not transformed.
inline Dataset load_dataset(const DataConfig& cfg, FeatureTransform transform, bool require_target = true) {
    const SeriesFrame raw = load_csv(cfg.path, cfg.date_column, cfg.frequency);
    const bool has_target = !cfg.target.empty() &&
                            std::find(raw.columns.begin(), raw.columns.end(), cfg.target) != raw.columns.end();
    if (require_target && !has_target) throw DataError(cfg.path + ": no target column '" + cfg.target + "'");
    std::vector<std::string> features = cfg.features;
    if (features.empty())
        for (const auto& c : raw.columns)
            if (c != cfg.target) features.push_back(c);
    if (features.empty()) throw DataError(cfg.path + ": no feature columns");
    std::vector<std::string> cols = features;
    if (has_target) cols.push_back(cfg.target);
    const SeriesFrame trimmed = trim_missing(raw.select(cols));
    const SeriesFrame fx = apply_transform(trimmed.select(features), transform);
    Dataset d;
    d.features = features;
    d.target = cfg.target;
    d.x = fx.values;
    d.index = fx.index;
    const std::size_t offset = trimmed.rows() - fx.rows();
    if (has_target) {
        d.y = trimmed.column(cfg.target).tail(static_cast<Eigen::Index>(fx.rows()));
    } else {
        d.y = Eigen::VectorXd::Constant(d.x.rows(), std::numeric_limits<double>::quiet_NaN());
    }
    (void)offset;
    return d;
}

// ---------------------------------------------------------------------------
// Model bundle: network plus everything needed to score new data

struct ModelBundle {
    Network network;
    TaskKind task = TaskKind::cycle_classification;
    std::vector<std::string> features;
    std::string target;
    FeatureTransform transform = FeatureTransform::level;
    std::size_t window = 1;
    std::optional<ScalerParams> scaler;
};

inline nlohmann::json to_json(const ModelBundle& b) {
    nlohmann::json j{{"format", "macroxfer-model"},
                     {"version", 1},
                     {"task", to_string(b.task)},
                     {"features", b.features},
                     {"target", b.target},
                     {"transform", to_string(b.transform)},
                     {"window", b.window},
                     {"network", to_json(b.network)}};
    if (b.scaler)
        j["scaler"] = {{"mean", detail::vector_to_json(b.scaler->mean)}, {"std", detail::vector_to_json(b.scaler->std)}};
    return j;
}

/// Reads a model bundle, or a bare network document (no scaler or feature names).
inline ModelBundle load_model_bundle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model '" + path + "'");
    try {
        const auto j = nlohmann::json::parse(in);
        ModelBundle b;
        if (j.value("format", std::string()) == "macroxfer-network") {
            b.network = network_from_json(j);
            return b;
        }
        if (j.value("format", std::string()) != "macroxfer-model") throw DataError(path + ": not a macroxfer model");
        b.network = network_from_json(j.at("network"));
        b.task = parse_task(j.at("task").get<std::string>());
        b.features = j.at("features").get<std::vector<std::string>>();
        b.target = j.value("target", std::string());
        b.transform = parse_transform(j.at("transform").get<std::string>());
        b.window = j.value("window", std::size_t{1});
        if (j.contains("scaler"))
            b.scaler = ScalerParams{detail::vector_from_json(j["scaler"].at("mean")),
                                    detail::vector_from_json(j["scaler"].at("std"))};
        if (!b.features.empty() && b.features.size() != b.network.input_width())
            throw DataError(path + ": feature list does not match the network input width");
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": malformed model document: " + e.what());
    } catch (const ConfigError& e) {
        throw DataError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Output files

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

/// Predictions for a sample set, rows ordered by date.
inline std::string predictions_csv(const Samples& s, const Eigen::VectorXd& p, const std::vector<Period>& index,
                                   Task task) {
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.origin[a] < s.origin[b]; });
    std::ostringstream out;
    out << "date," << (task == Task::classification ? "score" : "estimate") << ",label\n";
    for (auto i : order) {
        const auto k = static_cast<Eigen::Index>(i);
        out << index[s.origin[i]].str() << ',' << fmt6(p(k)) << ',';
        const double y = s.targets(k);
        if (!std::isnan(y)) out << (task == Task::classification ? std::to_string(static_cast<int>(y)) : fmt6(y));
        out << '\n';
    }
    return out.str();
}

/// Plot-ready fitted series over every windowed row, tagged with its split.
inline std::string series_csv(const Network& net, const SplitBundle& b, const std::vector<Period>& index, Task task) {
    struct Row {
        std::size_t origin;
        const char* split;
        double value, label;
    };
    std::vector<Row> rows;
    const std::pair<const Samples*, const char*> parts[] = {{&b.train, "train"}, {&b.val, "val"}, {&b.test, "test"}};
    for (const auto& [s, name] : parts) {
        if (s->size() == 0) continue;
        const Eigen::VectorXd p = predict(net, s->steps);
        for (std::size_t i = 0; i < s->size(); ++i)
            rows.push_back({s->origin[i], name, p(static_cast<Eigen::Index>(i)), s->targets(static_cast<Eigen::Index>(i))});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& c) { return a.origin < c.origin; });
    std::ostringstream out;
    out << "date,split," << (task == Task::classification ? "score" : "estimate") << ",label\n";
    for (const auto& r : rows)
        out << index[r.origin].str() << ',' << r.split << ',' << fmt6(r.value) << ','
            << (task == Task::classification ? std::to_string(static_cast<int>(r.label)) : fmt6(r.label)) << '\n';
    return out.str();
}

inline std::string history_csv(const TrainHistory& h) {
    std::ostringstream out;
    write_history_csv(out, h);
    return out.str();
}

// ---------------------------------------------------------------------------
// Networks from the config

inline NetworkSpec make_spec(const ExperimentConfig& cfg, std::size_t width, double output_bias,
                             const HyperConfig* tuned = nullptr) {
    const bool classification = cfg.task == TaskKind::cycle_classification;
    NetworkSpec s;
    s.input_width = width;
    s.output_activation = classification ? Activation::sigmoid : Activation::identity;
    s.output_bias_init = output_bias;
    if (is_baseline(cfg.model)) {
        s.dense_depth = 0;
        return s;
    }
    const auto& n = cfg.network;
    s.dense_depth = tuned ? tuned->dense_depth : n.dense_depth;
    s.dense_units = tuned ? tuned->dense_units : n.dense_units;
    s.hidden_activation = tuned ? tuned->activation : n.activation;
    s.dropout_rate = n.dropout.value_or(0.5);
    s.regularization = n.regularization.value_or(classification ? Regularization::none : Regularization::l1);
    s.lambda = tuned ? tuned->lambda : n.lambda;
    if (cfg.model == ModelKind::lstm) {
        s.lstm_units = tuned ? tuned->lstm_units : n.lstm_units;
        s.lstm_dropout = n.lstm_dropout.value_or(0.3);
        s.lstm_candidate = n.lstm_candidate;
    }
    if (s.dense_depth == 0) s.dropout_rate = 0.0;
    return s;
}

inline double initial_output_bias(const ExperimentConfig& cfg, const Samples& train) {
    if (cfg.task != TaskKind::cycle_classification) return train.targets.size() ? train.targets.mean() : 0.0;
    try {
        return label_stats(train.targets).initial_bias;
    } catch (const DataError&) {
        return 0.0;
    }
}

// ---------------------------------------------------------------------------
// Runs

struct RunOutcome {
    MetricReport test;
    std::optional<MetricReport> baseline;
    bool negative_transfer = false;
    std::optional<TuneResult> tuning;
    std::vector<std::string> files;
};

namespace detail {

inline std::string quoted(std::string_view key, std::string_view value) {
    return "\"" + std::string(key) + "\": \"" + std::string(value) + "\"";
}

inline std::string report_members(const MetricReport& r) {
    std::string s = to_json(r);
    // strip braces and indentation to nest a report as one member
    std::string body;
    std::istringstream in(s);
    std::string line;
    while (std::getline(in, line)) {
        if (line == "{" || line == "}") continue;
        body += line.substr(line.find_first_not_of(' '));
        if (!body.empty() && body.back() == ',') body += ' ';
    }
    return "{" + body + "}";
}

inline HyperSpace experiment_space(const ExperimentConfig& cfg) {
    HyperSpace space;
    if (cfg.model != ModelKind::lstm) space.lstm_units = {cfg.network.lstm_units};
    return space;
}

}  // namespace detail

/// Hyperband over the validation split of `data`.
inline TuneResult tune_experiment(const ExperimentConfig& cfg, const PreparedData& data) {
    const double bias = initial_output_bias(cfg, data.bundle.train);
    const std::size_t width = static_cast<std::size_t>(data.bundle.train.width());
    const NetworkFactory factory = [&cfg, width, bias](const HyperConfig& h, std::uint64_t seed) {
        return Network::create(make_spec(cfg, width, bias, &h), seed);
    };
    TunerConfig tc{cfg.tuner.max_resource, cfg.tuner.eta, cfg.train.objective, Rng::derive(cfg.seed, 3), 0};
    return tune(detail::experiment_space(cfg), tc, data.bundle, factory, cfg.train);
}

/// Supervised experiment without a transfer block.
inline RunOutcome run_supervised(const ExperimentConfig& cfg, bool tune_only = false) {
    const Dataset d = load_dataset(cfg.data, cfg.transform);
    const PreparedData data = prepare(d.x, d.y, cfg.split, cfg.window);
    const Task task = cfg.supervised_task();
    const std::filesystem::path dir(cfg.output_dir);
    RunOutcome out;

    std::optional<HyperConfig> best;
    if (cfg.tuner.enabled || tune_only) {
        if (is_baseline(cfg.model)) throw ConfigError("tuner does not apply to baseline models");
        out.tuning = tune_experiment(cfg, data);
        best = out.tuning->best;
        std::ostringstream trials;
        write_trials_csv(trials, out.tuning->trials);
        write_file(dir / "trials.csv", trials.str());
        out.files.push_back("trials.csv");
        if (tune_only) {
            const auto& b = *best;
            nlohmann::json j{{"dense_depth", b.dense_depth},   {"dense_units", b.dense_units},
                             {"lstm_units", b.lstm_units},     {"lambda", b.lambda},
                             {"learning_rate", b.learning_rate}, {"activation", to_string(b.activation)},
                             {"objective", fmt6(out.tuning->best_trial.objective)},
                             {"epochs_consumed", out.tuning->epochs_consumed}};
            write_file(dir / "best_config.json", j.dump(2) + "\n");
            out.files.push_back("best_config.json");
            return out;
        }
    }

    const double bias = initial_output_bias(cfg, data.bundle.train);
    TrainConfig tc = cfg.train;
    if (best) tc.learning_rate = best->learning_rate;
    const NetworkSpec spec = make_spec(cfg, static_cast<std::size_t>(d.x.cols()), bias, best ? &*best : nullptr);
    auto [net, history] = train(Network::create(spec, Rng::derive(cfg.seed, 1)), data.bundle, tc);

    const Eigen::VectorXd p = predict(net, data.bundle.test.steps);
    out.test = task == Task::classification ? classification_report(p, data.bundle.test.targets, cfg.threshold)
                                            : regression_report(p, data.bundle.test.targets);
    std::vector<std::string> extra{detail::quoted("task", to_string(cfg.task)),
                                   detail::quoted("model", to_string(cfg.model)),
                                   "\"train_size\": " + std::to_string(data.bundle.train.size()),
                                   "\"val_size\": " + std::to_string(data.bundle.val.size())};
    const Eigen::VectorXd p_in = predict(net, data.bundle.train.steps);
    if (task == Task::classification) {
        try {
            extra.push_back("\"in_sample_auc\": " + fmt6(auc(p_in, data.bundle.train.targets)));
        } catch (const DataError&) {
        }
    } else {
        extra.push_back("\"in_sample_mae\": " + fmt6(mae(p_in, data.bundle.train.targets)));
    }
    write_file(dir / "metrics.json", to_json(out.test, extra));
    write_file(dir / "history.csv", history_csv(history));
    write_file(dir / "predictions.csv", predictions_csv(data.bundle.test, p, d.index, task));
    write_file(dir / "series.csv", series_csv(net, data.bundle, d.index, task));
    ModelBundle bundle{net, cfg.task, d.features, d.target, cfg.transform, cfg.window, data.scaler};
    write_file(dir / "model.json", to_json(bundle).dump() + "\n");
    out.files.insert(out.files.end(), {"metrics.json", "history.csv", "predictions.csv", "series.csv", "model.json"});
    return out;
}

/// Locked or unlocked transfer of a saved model onto the configured target data,
/// compared against a baseline trained on the same target split.
inline RunOutcome run_transfer(const ExperimentConfig& cfg) {
    if (!cfg.transfer) throw ConfigError("transfer run needs a transfer block");
    const ModelBundle source = load_model_bundle(cfg.transfer->source_model);
    if (cfg.transform_set && cfg.transform != source.transform && !source.features.empty())
        throw ConfigError("transform '" + std::string(to_string(cfg.transform)) + "' differs from the source model's '" +
                          std::string(to_string(source.transform)) + "'");
    const FeatureTransform transform = source.features.empty() ? cfg.transform : source.transform;
    const std::size_t window = source.features.empty() ? cfg.window : source.window;
    const Task task = cfg.supervised_task();
    if ((task == Task::classification) != (source.network.output_layer().activation == Activation::sigmoid))
        throw ConfigError("source model output does not match task " + std::string(to_string(cfg.task)));

    const Dataset d = load_dataset(cfg.data, transform);
    TransferPlanFile planfile = *cfg.transfer;
    if (planfile.feature_map.empty() && !source.features.empty()) {
        const bool all_present = std::all_of(source.features.begin(), source.features.end(), [&](const auto& f) {
            return std::find(d.features.begin(), d.features.end(), f) != d.features.end();
        });
        if (all_present)
            for (const auto& f : source.features) planfile.feature_map.emplace_back(f);
    }
    const TransferPlan plan = planfile.resolve(source.network, d.features);
    const PreparedData data = prepare_target(plan, d.x, d.y, cfg.split, window);
    const std::filesystem::path dir(cfg.output_dir);
    RunOutcome out;

    Network result = plan.source;
    TrainHistory history;
    if (plan.mode == TransferMode::locked) {
        const std::string before = serialize(plan.source);
        (void)apply_locked(plan, data.bundle.test);
        if (serialize(plan.source) != before) throw TrainingError("locked transfer modified the source parameters");
    } else {
        std::tie(result, history) = fine_tune_unlocked(plan, data.bundle, cfg.train);
    }
    const Eigen::VectorXd p = predict(result, data.bundle.test.steps);
    out.test = task == Task::classification ? classification_report(p, data.bundle.test.targets, cfg.threshold)
                                            : regression_report(p, data.bundle.test.targets);

    // baseline on the same mapped target split
    ExperimentConfig base_cfg = cfg;
    base_cfg.model = task == Task::classification ? ModelKind::logit_baseline : ModelKind::linear_baseline;
    const double bias = initial_output_bias(base_cfg, data.bundle.train);
    const NetworkSpec bspec = make_spec(base_cfg, plan.source.input_width(), bias);
    Samples base_train = data.bundle.train, base_val = data.bundle.val, base_test = data.bundle.test;
    if (window > 1) {
        // baselines are cross-sectional: use the last step of each window
        for (Samples* s : {&base_train, &base_val, &base_test}) s->steps = {s->steps.back()};
    }
    TrainConfig btc = cfg.baseline_train.value_or(cfg.train);
    btc.shuffle_batches = true;
    auto [bnet, bhist] = train(Network::create(bspec, Rng::derive(cfg.seed, 4)), {base_train, base_val, {}, 0, false}, btc);
    const Eigen::VectorXd bp = predict(bnet, base_test.steps);
    out.baseline = task == Task::classification ? classification_report(bp, base_test.targets, cfg.threshold)
                                                : regression_report(bp, base_test.targets);
    out.negative_transfer =
        detect_negative_transfer(out.test, *out.baseline,
                                 task == Task::classification ? ComparisonMetric::auc : ComparisonMetric::mae)
            .negative_transfer;

    std::vector<std::string> extra{detail::quoted("task", to_string(cfg.task)),
                                   detail::quoted("mode", to_string(plan.mode)),
                                   std::string("\"negative_transfer\": ") + (out.negative_transfer ? "true" : "false"),
                                   "\"baseline\": " + detail::report_members(*out.baseline)};
    write_file(dir / "metrics.json", to_json(out.test, extra));
    write_file(dir / "history.csv", history_csv(history));
    write_file(dir / "predictions.csv", predictions_csv(data.bundle.test, p, d.index, task));
    write_file(dir / "series.csv", series_csv(result, data.bundle, d.index, task));
    std::vector<std::string> mapped;
    for (auto k : plan.feature_map) mapped.push_back(d.features[k]);
    ModelBundle bundle{result, cfg.task, mapped, d.target, transform, window, data.scaler};
    write_file(dir / "model.json", to_json(bundle).dump() + "\n");
    out.files.insert(out.files.end(), {"metrics.json", "history.csv", "predictions.csv", "series.csv", "model.json"});
    return out;
}

/// Score a saved model on every row of a dataset. Metrics are written when
/// the target column is present.
inline RunOutcome run_eval(const std::string& model_path, DataConfig data_cfg, const std::string& output_dir,
                           double threshold = 0.5) {
    const ModelBundle m = load_model_bundle(model_path);
    if (m.features.empty() || !m.scaler) throw DataError(model_path + ": evaluation needs a model bundle with a scaler");
    if (data_cfg.target.empty()) data_cfg.target = m.target;
    data_cfg.features = m.features;
    const Dataset d = load_dataset(data_cfg, m.transform, false);
    const Samples s = make_windows(standardize_apply(d.x, *m.scaler), d.y, m.window);
    const Eigen::VectorXd p = predict(m.network, s.steps);
    const Task task = m.task == TaskKind::cycle_classification ? Task::classification : Task::regression;
    const std::filesystem::path dir(output_dir);
    RunOutcome out;
    write_file(dir / "predictions.csv", predictions_csv(s, p, d.index, task));
    out.files.push_back("predictions.csv");
    if (!s.targets.hasNaN()) {
        out.test = task == Task::classification ? classification_report(p, s.targets, threshold)
                                                : regression_report(p, s.targets);
        write_file(dir / "metrics.json", to_json(out.test));
        out.files.push_back("metrics.json");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Disaggregation from files

struct DisaggInputs {
    Eigen::VectorXd y_q;
    Eigen::MatrixXd x_m;  // 3n + k rows starting at the first month of the first quarter
    std::vector<Period> months;
};

inline DisaggInputs load_disagg_inputs(const DisaggBlock& b) {
    SeriesFrame target = load_csv(b.target_path, b.date_column, Frequency::quarterly);
    std::string col = b.target_column;
    if (col.empty()) {
        if (target.cols() != 1)
            throw ConfigError(b.target_path + ": several columns; choose one with the target column option");
        col = target.columns.front();
    }
    target = trim_missing(target.select({col}));
    SeriesFrame ind = load_csv(b.indicators_path, b.date_column, Frequency::monthly);
    if (ind.has_missing()) throw DataError(b.indicators_path + ": missing indicator values");
    const Period first = target.index.front();
    const Period month0 = Period::monthly(first.year(), 3 * (first.sub() - 1) + 1);
    const auto start = month0 - ind.index.front();
    if (start < 0)
        throw DataError("indicators start at " + ind.index.front().str() + ", after the first target month " +
                        month0.str());
    const std::size_t skip = static_cast<std::size_t>(start);
    if (ind.rows() < skip + 3 * target.rows())
        throw DataError("indicators cover " + std::to_string(ind.rows() - std::min(ind.rows(), skip)) +
                        " months from " + month0.str() + ", need " + std::to_string(3 * target.rows()));
    ind = ind.slice_rows(skip, ind.rows() - skip);
    return {target.values.col(0), ind.values, ind.index};
}

inline std::string monthly_csv(const std::vector<Period>& months, const Eigen::VectorXd& estimate,
                               std::string_view method) {
    std::ostringstream out;
    out << "date,estimate,method\n";
    for (Eigen::Index i = 0; i < estimate.size(); ++i)
        out << months[static_cast<std::size_t>(i)].str() << ',' << fmt6(estimate(i)) << ',' << method << '\n';
    return out.str();
}

inline std::string run_disagg(const DisaggBlock& b, std::uint64_t seed) {
    const auto in = load_disagg_inputs(b);
    if (b.method == DisaggMethod::chowlin) {
        DisaggregationProblem prob{in.y_q, in.x_m, b.mode, b.rho, b.intercept};
        return monthly_csv(in.months, chow_lin(prob).y_m, "chowlin");
    }
    RideConfig rc;
    rc.transform = b.ride_transform;
    rc.train.epochs = b.epochs;
    rc.train.seed = Rng::derive(seed, 2);
    rc.init_seed = Rng::derive(seed, 1);
    Eigen::VectorXd y = in.y_q;
    Eigen::MatrixXd x = in.x_m;
    std::vector<Period> months = in.months;
    if (b.ride_transform == RideTransform::yoy) {
        // growth over the same period a year earlier; the first year drops out
        if (y.size() <= 4) throw DataError("yoy transform needs more than four quarters");
        for (double v : y)
            if (!(v > 0.0)) throw DataError("yoy transform needs a positive target");
        const Eigen::VectorXd growth = (y.tail(y.size() - 4).array() / y.head(y.size() - 4).array() - 1.0).matrix();
        y = growth;
        const SeriesFrame f = yoy_change(make_frame(std::vector<std::string>(static_cast<std::size_t>(x.cols()), "x"),
                                                    months.front(), x),
                                         12);
        x = f.values;
        months = f.index;
    }
    const auto fit = ride_train(rc, x, y);
    return monthly_csv(months, ride_extrapolate(fit.model, x), "ride");
}

// ---------------------------------------------------------------------------
// Synthetic data files

struct SynthFiles {
    std::string main;
    std::string target;  // monthly kind only
};

inline SynthFiles synth_files(const SynthBlock& b, std::uint64_t seed) {
    std::ostringstream main, target;
    switch (b.kind) {
        case SynthKind::regime: {
            const auto r = generate_regime_series(seed, b.n);
            SeriesFrame f = b.form == "level" ? growth_to_levels(r.growth) : r.growth;
            Eigen::MatrixXd v(f.values.rows(), f.values.cols() + 1);
            v.leftCols(f.values.cols()) = f.values;
            const Eigen::Index off = f.values.rows() - r.labels.size();
            v.col(v.cols() - 1).setZero();
            v.col(v.cols() - 1).tail(r.labels.size()) = r.labels;
            auto cols = f.columns;
            cols.push_back("recession");
            (void)off;
            write_csv(main, make_frame(cols, f.index.front(), v));
            break;
        }
        case SynthKind::gap: {
            const auto g = generate_gap_series(seed, b.n);
            Eigen::MatrixXd v(g.features.values.rows(), 4);
            v.leftCols(3) = g.features.values;
            v.col(3) = g.gap;
            auto cols = g.features.columns;
            cols.push_back("output_gap");
            write_csv(main, make_frame(cols, g.features.index.front(), v));
            break;
        }
        case SynthKind::monthly: {
            const auto m = generate_monthly_truth(seed, b.n, b.extra_months);
            write_csv(main, m.indicators);
            write_csv(target, m.quarterly);
            break;
        }
    }
    return {main.str(), target.str()};
}

}  // namespace macroxfer
