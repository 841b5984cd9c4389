#pragma once

// Synthetic data generators used by tests, the acceptance suite and the
// `synth` CLI command. Defaults are calibrated to the U.S. quarterly
// business-cycle dataset (1967Q1 onward, log first differences).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "macroxfer/dataset.hpp"
#include "macroxfer/error.hpp"
#include "macroxfer/random.hpp"

namespace macroxfer {

struct RegimeSeriesParams {
    /// Target unconditional mean and std of each growth series, and the share
    /// of recession quarters. Defaults: GDP, income, employment, industrial
    /// production, sales.
    std::vector<std::string> names{"gdp", "income", "employment", "industrial_production", "sales"};
    std::vector<double> mean{0.006844, 0.006885, 0.003678, 0.005290, 0.006486};
    std::vector<double> std{0.007829, 0.009104, 0.006319, 0.014928, 0.013956};
    double recession_share = 0.127962;
    /// P(recession -> expansion). Expected recession length is 1 / exit_probability.
    double exit_probability = 0.25;
    /// Expansion-minus-recession mean gap in units of the series' total std.
    double separation = 1.8;
    /// Correlation of the within-regime shocks across series.
    double shock_correlation = 0.5;
    Period start = Period::quarterly(1967, 1);
};

struct RegimeSeries {
    SeriesFrame growth;      // one column per series
    Eigen::VectorXd labels;  // 1 = recession
};

/// Two-state Gaussian Markov-switching growth series with a recession indicator.
///
/// Regime means are placed so the mixture reproduces the target mean/std;
/// the chain starts from its stationary distribution.
inline RegimeSeries generate_regime_series(std::uint64_t seed, std::size_t n, const RegimeSeriesParams& p = {}) {
    if (n < 50) throw ConfigError("generate_regime_series: n must be at least 50");
    const double share = p.recession_share;
    if (!(share > 0.0 && share < 1.0) || !(p.exit_probability > 0.0 && p.exit_probability <= 1.0))
        throw ConfigError("generate_regime_series: invalid transition probabilities");
    const double enter = p.exit_probability * share / (1.0 - share);
    if (!(enter > 0.0 && enter <= 1.0)) throw ConfigError("generate_regime_series: invalid transition probabilities");
    const std::size_t k = p.names.size();
    if (p.mean.size() != k || p.std.size() != k) throw ConfigError("generate_regime_series: parameter length mismatch");

    std::vector<double> mu_exp(k), mu_rec(k), sd(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double gap = p.separation * p.std[j];
        mu_exp[j] = p.mean[j] + share * gap;
        mu_rec[j] = p.mean[j] - (1.0 - share) * gap;
        const double within = p.std[j] * p.std[j] - share * (1.0 - share) * gap * gap;
        if (!(within > 0.0)) throw ConfigError("generate_regime_series: separation too large for the target std");
        sd[j] = std::sqrt(within);
    }
    const double common = std::sqrt(p.shock_correlation);
    const double idio = std::sqrt(1.0 - p.shock_correlation);

    Rng rng(seed);
    RegimeSeries out;
    Eigen::MatrixXd values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    out.labels.resize(static_cast<Eigen::Index>(n));
    bool recession = rng.bernoulli(share);
    for (std::size_t t = 0; t < n; ++t) {
        if (t > 0) recession = recession ? !rng.bernoulli(p.exit_probability) : rng.bernoulli(enter);
        out.labels(static_cast<Eigen::Index>(t)) = recession ? 1.0 : 0.0;
        const double factor = rng.normal();
        for (std::size_t j = 0; j < k; ++j) {
            const double shock = common * factor + idio * rng.normal();
            values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
                (recession ? mu_rec[j] : mu_exp[j]) + sd[j] * shock;
        }
    }
    out.growth = make_frame(p.names, p.start, std::move(values));
    return out;
}

/// Index levels (base 100) whose log first differences are `growth`; one row longer.
inline SeriesFrame growth_to_levels(const SeriesFrame& growth, double base = 100.0) {
    Eigen::MatrixXd lv(growth.values.rows() + 1, growth.values.cols());
    lv.row(0).setConstant(std::log(base));
    for (Eigen::Index i = 0; i < growth.values.rows(); ++i) lv.row(i + 1) = lv.row(i) + growth.values.row(i);
    return make_frame(growth.columns, growth.index.front() + (-1), lv.unaryExpr([](double v) { return std::exp(v); }));
}

struct GapSeries {
    SeriesFrame features;  // unemployment_gap, capacity_utilization, recession
    Eigen::VectorXd gap;   // output gap, percent
};

/// Output-gap stand-in: persistent labour-market and capacity indicators with a
/// nonlinear, interacting map to the gap.
inline GapSeries generate_gap_series(std::uint64_t seed, std::size_t n, double noise = 0.15) {
    if (n < 50) throw ConfigError("generate_gap_series: n must be at least 50");
    Rng rng(seed);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 3);
    GapSeries out;
    out.gap.resize(static_cast<Eigen::Index>(n));
    double u = 0.0, c = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double shock = rng.normal();
        u = 0.85 * u + 0.5 * (0.8 * shock + 0.6 * rng.normal());
        c = 0.80 * c + 0.6 * (-0.6 * shock + 0.8 * rng.normal());
        const double rec = (u > 0.9) ? 1.0 : 0.0;
        const auto i = static_cast<Eigen::Index>(t);
        x(i, 0) = u;
        x(i, 1) = 78.0 + 4.0 * c;  // capacity utilization, percent
        x(i, 2) = rec;
        out.gap(i) = -2.0 * std::tanh(1.5 * u) + 0.8 * c - 0.6 * c * c + 0.9 * u * c - 1.0 * rec +
                     noise * rng.normal();
    }
    out.features = make_frame({"unemployment_gap", "capacity_utilization", "recession"}, Period::quarterly(1967, 1),
                              std::move(x));
    return out;
}

struct MonthlyTruth {
    SeriesFrame indicators;    // monthly, 3n + extra rows
    Eigen::VectorXd truth;     // hidden monthly target, same rows as indicators
    SeriesFrame quarterly;     // one column "gdp": quarterly mean of the first 3n months
};

/// Monthly indicator indexes driven by a common activity cycle, and a hidden
/// monthly GDP index that is a smooth function of them. The quarterly target
/// is the three-month mean.
inline MonthlyTruth generate_monthly_truth(std::uint64_t seed, std::size_t quarters, std::size_t extra_months = 0,
                                           std::size_t indicators = 4) {
    if (quarters < 8) throw ConfigError("generate_monthly_truth: need at least 8 quarters");
    if (indicators < 1) throw ConfigError("generate_monthly_truth: need at least one indicator");
    Rng rng(seed);
    const std::size_t months = 3 * quarters + extra_months;
    const auto m = static_cast<Eigen::Index>(months);
    const auto k = static_cast<Eigen::Index>(indicators);
    Eigen::MatrixXd lv(m, k);
    Eigen::VectorXd weights(k), loading(k), drift(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        loading(j) = rng.uniform(0.6, 1.6);
        drift(j) = rng.uniform(0.0005, 0.0025);
        weights(j) = rng.uniform(0.5, 1.5);
    }
    weights /= weights.sum();
    Eigen::VectorXd log_level = Eigen::VectorXd::Constant(k, std::log(100.0));
    Eigen::VectorXd truth(m);
    double cycle = 0.0, truth_log = std::log(100.0);
    for (Eigen::Index t = 0; t < m; ++t) {
        cycle = 0.9 * cycle + 0.004 * rng.normal();
        double g = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            const double growth = drift(j) + loading(j) * cycle + 0.002 * rng.normal();
            log_level(j) += growth;
            lv(t, j) = std::exp(log_level(j));
            g += weights(j) * growth;
        }
        truth_log += g;
        truth(t) = std::exp(truth_log);
    }
    MonthlyTruth out;
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < k; ++j) names.push_back("ind" + std::to_string(j + 1));
    out.indicators = make_frame(names, Period::monthly(1996, 1), lv);
    out.truth = truth;
    Eigen::MatrixXd q(static_cast<Eigen::Index>(quarters), 1);
    for (Eigen::Index i = 0; i < q.rows(); ++i) q(i, 0) = truth.segment(3 * i, 3).mean();
    out.quarterly = make_frame({"gdp"}, Period::quarterly(1996, 1), q);
    return out;
}

}  // namespace macroxfer
