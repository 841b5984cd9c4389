#pragma once

// Hyperband (bracketed successive halving) over a finite hyperparameter grid.
// Resource is measured in training epochs and is cumulative: a configuration
// promoted to the next rung resumes training instead of restarting.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numeric>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "macroxfer/dataset.hpp"
#include "macroxfer/error.hpp"
#include "macroxfer/network.hpp"
#include "macroxfer/optim.hpp"
#include "macroxfer/random.hpp"

namespace macroxfer {

struct HyperConfig {
    std::size_t dense_depth = 1;
    std::size_t dense_units = 16;
    std::size_t lstm_units = 16;
    double lambda = 1e-4;
    double learning_rate = 1e-3;
    Activation activation = Activation::relu;

    bool operator==(const HyperConfig&) const = default;
};

/// Finite grid; each dimension is sampled uniformly and independently.
struct HyperSpace {
    std::vector<std::size_t> dense_depth{1, 2, 3, 4};
    std::vector<std::size_t> dense_units = step_range(16, 256, 16);
    std::vector<std::size_t> lstm_units = step_range(16, 256, 16);
    std::vector<double> lambda{1e-4, 1e-3, 1e-2};
    std::vector<double> learning_rate{1e-4, 1e-3, 1e-2};
    std::vector<Activation> activation{Activation::relu, Activation::tanh, Activation::sigmoid};

    static std::vector<std::size_t> step_range(std::size_t lo, std::size_t hi, std::size_t step) {
        std::vector<std::size_t> v;
        for (std::size_t x = lo; x <= hi; x += step) v.push_back(x);
        return v;
    }

    /// Space containing exactly one point.
    static HyperSpace single(const HyperConfig& c) {
        return {{c.dense_depth}, {c.dense_units}, {c.lstm_units}, {c.lambda}, {c.learning_rate}, {c.activation}};
    }

    bool contains(const HyperConfig& c) const {
        const auto in = [](const auto& v, const auto& x) { return std::find(v.begin(), v.end(), x) != v.end(); };
        return in(dense_depth, c.dense_depth) && in(dense_units, c.dense_units) && in(lstm_units, c.lstm_units) &&
               in(lambda, c.lambda) && in(learning_rate, c.learning_rate) && in(activation, c.activation);
    }

    void validate() const {
        if (dense_depth.empty() || dense_units.empty() || lstm_units.empty() || lambda.empty() ||
            learning_rate.empty() || activation.empty())
            throw ConfigError("hyperparameter space has an empty dimension");
    }
};

inline HyperConfig sample_config(const HyperSpace& space, Rng& rng) {
    const auto pick = [&rng](const auto& v) { return v[rng.below(v.size())]; };
    HyperConfig c;
    c.dense_depth = pick(space.dense_depth);
    c.dense_units = pick(space.dense_units);
    c.lstm_units = pick(space.lstm_units);
    c.lambda = pick(space.lambda);
    c.learning_rate = pick(space.learning_rate);
    c.activation = pick(space.activation);
    return c;
}

struct Rung {
    std::size_t configs;   // configurations evaluated at this rung
    std::size_t resource;  // cumulative epochs per configuration at this rung
};

struct Bracket {
    std::size_t s;
    std::vector<Rung> rungs;
};

namespace detail {
inline std::size_t ipow(std::size_t base, std::size_t e) {
    std::size_t r = 1;
    while (e--) r *= base;
    return r;
}
}  // namespace detail

/// s_max = floor(log_eta R); bracket s starts n = ceil((s_max+1) eta^s / (s+1))
/// configurations at r = R eta^-s epochs; rung i keeps floor(n eta^-i)
/// configurations at R eta^(i-s) epochs. Fractional epoch budgets are floored
/// (minimum 1).
inline std::vector<Bracket> hyperband_schedule(std::size_t max_resource, std::size_t eta) {
    if (max_resource < 1) throw ConfigError("hyperband: max resource must be at least 1");
    if (eta < 2) throw ConfigError("hyperband: reduction factor must be at least 2");
    std::size_t s_max = 0;
    while (detail::ipow(eta, s_max + 1) <= max_resource) ++s_max;
    std::vector<Bracket> out;
    for (std::size_t s = s_max + 1; s-- > 0;) {
        const std::size_t num = (s_max + 1) * detail::ipow(eta, s);
        const std::size_t n = (num + s) / (s + 1);  // ceil division
        Bracket b{s, {}};
        for (std::size_t i = 0; i <= s; ++i) {
            const std::size_t n_i = n / detail::ipow(eta, i);
            const std::size_t r_i = std::max<std::size_t>(1, max_resource / detail::ipow(eta, s - i));
            if (n_i == 0) break;
            b.rungs.push_back({n_i, r_i});
        }
        out.push_back(std::move(b));
    }
    return out;
}

/// Epochs the schedule consumes when survivors resume training.
inline std::size_t schedule_epochs(const std::vector<Bracket>& schedule) {
    std::size_t total = 0;
    for (const auto& b : schedule) {
        std::size_t prev = 0;
        for (const auto& r : b.rungs) {
            total += r.configs * (r.resource - prev);
            prev = r.resource;
        }
    }
    return total;
}

struct TunerConfig {
    std::size_t max_resource = 10;  // epochs
    std::size_t eta = 3;
    Objective objective = Objective::max_val_auc;
    std::uint64_t seed = 0;
    std::size_t threads = 0;  // 0: MACROXFER_THREADS, else 1

    void validate() const {
        if (max_resource < 1) throw ConfigError("max_resource must be at least 1");
        if (eta < 2) throw ConfigError("reduction factor must be at least 2");
    }
};

struct Trial {
    std::size_t config_id = 0;
    HyperConfig config;
    std::size_t bracket = 0;  // s
    std::size_t rung = 0;
    std::size_t epochs = 0;   // cumulative epochs trained
    double objective = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    std::string diagnostic;
};

struct TuneResult {
    HyperConfig best;
    Trial best_trial;
    std::vector<Trial> trials;
    std::size_t epochs_consumed = 0;
};

/// Builds a freshly initialized network for a configuration.
using NetworkFactory = std::function<Network(const HyperConfig&, std::uint64_t seed)>;

inline std::size_t env_threads() {
    if (const char* v = std::getenv("MACROXFER_THREADS")) {
        const long n = std::strtol(v, nullptr, 10);
        if (n > 0) return static_cast<std::size_t>(n);
    }
    return 1;
}

/// True when trial a ranks strictly ahead of trial b. Failed trials rank
/// last; ties go to the lower index.
inline bool ranks_ahead(const Trial& a, std::size_t ia, const Trial& b, std::size_t ib, Objective o) {
    if (a.failed != b.failed) return !a.failed;
    if (!a.failed && a.objective != b.objective)
        return maximizes(o) ? a.objective > b.objective : a.objective < b.objective;
    return ia < ib;
}

inline void write_trials_csv(std::ostream& out, const std::vector<Trial>& trials) {
    out << "bracket,rung,config_id,dense_depth,dense_units,lstm_units,lambda,learning_rate,activation,epochs,"
           "objective\n";
    for (const auto& t : trials) {
        char lam[32], lr[32];
        std::snprintf(lam, sizeof lam, "%g", t.config.lambda);
        std::snprintf(lr, sizeof lr, "%g", t.config.learning_rate);
        out << t.bracket << ',' << t.rung << ',' << t.config_id << ',' << t.config.dense_depth << ','
            << t.config.dense_units << ',' << t.config.lstm_units << ',' << lam << ',' << lr << ','
            << to_string(t.config.activation) << ',' << t.epochs << ',' << (t.failed ? "failed" : fmt6(t.objective))
            << '\n';
    }
}

/// Run the Hyperband schedule on `bundle`. The objective is read from the
/// validation split after each rung's training; test data is never touched.
inline TuneResult tune(const HyperSpace& space, const TunerConfig& cfg, const SplitBundle& bundle,
                       const NetworkFactory& factory, const TrainConfig& base) {
    space.validate();
    cfg.validate();
    const auto schedule = hyperband_schedule(cfg.max_resource, cfg.eta);
    const std::size_t threads = cfg.threads ? cfg.threads : env_threads();
    Rng rng(cfg.seed);
    TuneResult result;
    std::size_t next_id = 0;

    struct Candidate {
        std::size_t id;
        HyperConfig config;
        std::optional<Trainer> trainer;
        bool failed = false;
        std::string diagnostic;
    };

    for (const auto& bracket : schedule) {
        std::vector<Candidate> pool;
        for (std::size_t i = 0; i < bracket.rungs.front().configs; ++i)
            pool.push_back({next_id++, sample_config(space, rng), std::nullopt, false, {}});

        std::size_t prev_resource = 0;
        for (std::size_t r = 0; r < bracket.rungs.size(); ++r) {
            const auto& rung = bracket.rungs[r];
            std::vector<Trial> rung_trials(pool.size());
            const auto run_one = [&](std::size_t k) {
                auto& c = pool[k];
                Trial& t = rung_trials[k];
                t.config_id = c.id;
                t.config = c.config;
                t.bracket = bracket.s;
                t.rung = r;
                t.epochs = rung.resource;
                try {
                    if (c.failed) throw TrainingError(c.diagnostic);
                    if (!c.trainer) {
                        TrainConfig tc = base;
                        tc.learning_rate = c.config.learning_rate;
                        tc.seed = Rng::derive(cfg.seed, 2 * c.id + 1);
                        c.trainer.emplace(factory(c.config, Rng::derive(cfg.seed, 2 * c.id)), tc);
                    }
                    c.trainer->run_epochs(bundle.train, bundle.val, rung.resource - prev_resource);
                    t.objective = c.trainer->history().val_objective.back();
                    if (!std::isfinite(t.objective)) throw TrainingError("objective undefined on validation split");
                } catch (const std::exception& e) {
                    c.failed = true;
                    c.diagnostic = e.what();
                    t.failed = true;
                    t.diagnostic = e.what();
                    t.objective = std::numeric_limits<double>::quiet_NaN();
                }
            };
            if (threads <= 1 || pool.size() <= 1) {
                for (std::size_t k = 0; k < pool.size(); ++k) run_one(k);
            } else {
                std::atomic<std::size_t> next{0};
                std::vector<std::jthread> workers;
                for (std::size_t w = 0; w < std::min(threads, pool.size()); ++w)
                    workers.emplace_back([&] {
                        for (std::size_t k; (k = next.fetch_add(1)) < pool.size();) run_one(k);
                    });
            }
            result.epochs_consumed += pool.size() * (rung.resource - prev_resource);
            prev_resource = rung.resource;

            std::vector<std::size_t> order(pool.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return ranks_ahead(rung_trials[a], pool[a].id, rung_trials[b], pool[b].id, cfg.objective);
            });
            result.trials.insert(result.trials.end(), rung_trials.begin(), rung_trials.end());
            if (r + 1 < bracket.rungs.size()) {
                std::vector<Candidate> keep;
                for (std::size_t k = 0; k < bracket.rungs[r + 1].configs && k < order.size(); ++k)
                    keep.push_back(std::move(pool[order[k]]));
                pool = std::move(keep);
            }
        }
    }

    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < result.trials.size(); ++i)
        if (!best || ranks_ahead(result.trials[i], i, result.trials[*best], *best, cfg.objective)) best = i;
    if (!best || result.trials[*best].failed) {
        std::string msg = "tune: all trials failed";
        if (!result.trials.empty()) msg += "; first failure: " + result.trials.front().diagnostic;
        throw TrainingError(msg);
    }
    result.best_trial = result.trials[*best];
    result.best = result.best_trial.config;
    return result;
}

}  // namespace macroxfer
