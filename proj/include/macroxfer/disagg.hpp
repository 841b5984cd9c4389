#pragma once

// Temporal disaggregation of a quarterly series by monthly indicators.
//
//  * Chow-Lin: GLS regression at the quarterly level with AR(1) monthly
//    errors, followed by the BLUE distribution of the quarterly residuals.
//  * RIDE: a network mapping monthly indicators to the target, trained
//    against the quarterly value replicated over its three months.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "macroxfer/dataset.hpp"
#include "macroxfer/error.hpp"
#include "macroxfer/network.hpp"
#include "macroxfer/optim.hpp"
#include "macroxfer/propagation.hpp"

namespace macroxfer {

/// flow: quarter = sum of its months. stock: quarter = its third month.
/// average: quarter = mean of its months (index-style series).
enum class AggregationMode { flow, stock, average };

inline std::string_view to_string(AggregationMode m) {
    switch (m) {
        case AggregationMode::flow: return "flow";
        case AggregationMode::stock: return "stock";
        case AggregationMode::average: return "average";
    }
    return "?";
}

inline AggregationMode parse_aggregation(std::string_view s) {
    if (s == "flow" || s == "sum") return AggregationMode::flow;
    if (s == "stock" || s == "last") return AggregationMode::stock;
    if (s == "average" || s == "mean") return AggregationMode::average;
    throw ConfigError("unknown aggregation mode '" + std::string(s) + "'");
}

/// n x 3n matrix mapping months to quarters.
inline Eigen::MatrixXd build_aggregation(std::size_t quarters, AggregationMode mode) {
    if (quarters < 1) throw ConfigError("build_aggregation: need at least one quarter");
    const auto n = static_cast<Eigen::Index>(quarters);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, 3 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        switch (mode) {
            case AggregationMode::flow: c.block(i, 3 * i, 1, 3).setOnes(); break;
            case AggregationMode::average: c.block(i, 3 * i, 1, 3).setConstant(1.0 / 3.0); break;
            case AggregationMode::stock: c(i, 3 * i + 2) = 1.0; break;
        }
    }
    return c;
}

/// Quarterly aggregate of a monthly vector of length 3n.
inline Eigen::VectorXd aggregate(const Eigen::VectorXd& monthly, AggregationMode mode) {
    if (monthly.size() % 3 != 0) throw DataError("aggregate: monthly length must be a multiple of 3");
    return build_aggregation(static_cast<std::size_t>(monthly.size() / 3), mode) * monthly;
}

/// Unit-variance AR(1) covariance: V[i, j] = rho^|i - j|.
inline Eigen::MatrixXd ar1_covariance(double rho, std::size_t size) {
    if (!(std::abs(rho) < 1.0)) throw ConfigError("ar1_covariance: |rho| must be below 1");
    const auto m = static_cast<Eigen::Index>(size);
    Eigen::VectorXd powers(m);
    double p = 1.0;
    for (Eigen::Index k = 0; k < m; ++k, p *= rho) powers(k) = p;
    Eigen::MatrixXd v(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) v(i, j) = powers(std::abs(i - j));
    return v;
}

struct DisaggregationProblem {
    Eigen::VectorXd y_q;  // n quarterly observations
    Eigen::MatrixXd x_m;  // (3n + k) x p monthly indicators; rows past 3n are extrapolated
    AggregationMode mode = AggregationMode::flow;
    std::optional<double> rho;  // empty: estimate by grid search
    bool intercept = false;     // append a constant regressor

    std::size_t quarters() const { return static_cast<std::size_t>(y_q.size()); }
};

struct ChowLinResult {
    Eigen::VectorXd beta;  // p (+1 with intercept, last)
    Eigen::VectorXd u_q;   // quarterly GLS residuals
    Eigen::VectorXd y_m;   // monthly estimate, 3n + k
    double rho_used = 0.0;
    double log_likelihood = 0.0;
};

namespace detail {

inline constexpr double kPivotTolerance = 1e-10;

/// Cholesky factor with a pivot check relative to the largest diagonal entry.
inline Eigen::LLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& a, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + ": rank deficient (not positive definite)");
    const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
    const Eigen::VectorXd piv = llt.matrixL().toDenseMatrix().diagonal();
    if ((piv.array().square() < kPivotTolerance * scale).any() || !piv.allFinite())
        throw NumericError(std::string(what) + ": rank deficient (pivot below tolerance)");
    return llt;
}

struct GlsFit {
    Eigen::VectorXd beta, u_q, vq_inv_u;
    double log_likelihood;
};

inline GlsFit gls_fit(const Eigen::MatrixXd& x_q, const Eigen::VectorXd& y_q, const Eigen::MatrixXd& v_q) {
    const auto llt = spd_factor(v_q, "chow_lin: quarterly covariance");
    const Eigen::MatrixXd xw = llt.matrixL().solve(x_q);
    const Eigen::VectorXd yw = llt.matrixL().solve(y_q);
    const Eigen::MatrixXd normal = xw.transpose() * xw;
    const auto nllt = spd_factor(normal, "chow_lin: regressor cross-product");
    GlsFit f;
    f.beta = nllt.solve(xw.transpose() * yw);
    f.u_q = y_q - x_q * f.beta;
    f.vq_inv_u = llt.solve(f.u_q);
    if (!f.beta.allFinite() || !f.vq_inv_u.allFinite()) throw NumericError("chow_lin: non-finite solve");
    const double n = static_cast<double>(y_q.size());
    const double sigma2 = std::max(f.u_q.dot(f.vq_inv_u) / n, std::numeric_limits<double>::min());
    const Eigen::VectorXd l_diag = llt.matrixL().toDenseMatrix().diagonal();
    const double log_det = 2.0 * l_diag.array().log().sum();
    f.log_likelihood = -0.5 * n * (std::log(2.0 * M_PI) + 1.0 + std::log(sigma2)) - 0.5 * log_det;
    return f;
}

}  // namespace detail

/// Grid of AR(1) coefficients searched when rho is estimated: -0.98..0.98 step 0.02.
inline std::vector<double> rho_grid() {
    std::vector<double> g;
    for (int k = -49; k <= 49; ++k) g.push_back(k / 50.0);
    return g;
}

inline ChowLinResult chow_lin(const DisaggregationProblem& prob) {
    const std::size_t n = prob.quarters();
    if (n < 1) throw DataError("chow_lin: empty quarterly target");
    const auto in_rows = static_cast<Eigen::Index>(3 * n);
    if (prob.x_m.rows() < in_rows)
        throw DataError("chow_lin: indicators have " + std::to_string(prob.x_m.rows()) + " months, need at least " +
                        std::to_string(in_rows));
    if (prob.x_m.cols() < 1) throw DataError("chow_lin: need at least one indicator");
    if (!prob.y_q.allFinite() || !prob.x_m.allFinite()) throw DataError("chow_lin: missing or non-finite input");
    if (prob.rho && !(std::abs(*prob.rho) < 1.0)) throw ConfigError("chow_lin: |rho| must be below 1");

    Eigen::MatrixXd x = prob.x_m;
    if (prob.intercept) {
        x.conservativeResize(Eigen::NoChange, x.cols() + 1);
        x.col(x.cols() - 1).setOnes();
    }
    const Eigen::MatrixXd c = build_aggregation(n, prob.mode);
    const Eigen::MatrixXd x_in = x.topRows(in_rows);
    const Eigen::MatrixXd x_q = c * x_in;
    if (x_q.rows() < x_q.cols()) throw NumericError("chow_lin: rank deficient (more regressors than quarters)");

    const auto fit_at = [&](double rho) {
        const Eigen::MatrixXd v = ar1_covariance(rho, 3 * n);
        const Eigen::MatrixXd v_ct = v * c.transpose();
        return std::pair{detail::gls_fit(x_q, prob.y_q, c * v_ct), v_ct};
    };

    double rho = 0.0;
    if (prob.rho) {
        rho = *prob.rho;
    } else {
        double best = -std::numeric_limits<double>::infinity();
        for (double r : rho_grid()) {
            const double ll = fit_at(r).first.log_likelihood;
            if (ll > best) {
                best = ll;
                rho = r;
            }
        }
    }
    const auto [fit, v_ct] = fit_at(rho);

    ChowLinResult res;
    res.beta = fit.beta;
    res.u_q = fit.u_q;
    res.rho_used = rho;
    res.log_likelihood = fit.log_likelihood;
    const Eigen::VectorXd u_m = v_ct * fit.vq_inv_u;
    res.y_m = x * fit.beta;
    res.y_m.head(in_rows) += u_m;
    // extrapolated months carry the last in-sample residual decayed by rho^j
    double decay = 1.0;
    for (Eigen::Index i = in_rows; i < x.rows(); ++i) {
        decay *= rho;
        res.y_m(i) += decay * u_m(in_rows - 1);
    }
    if (!res.y_m.allFinite()) throw NumericError("chow_lin: non-finite monthly estimate");
    return res;
}

// ---------------------------------------------------------------------------
// RIDE

enum class RideTransform { level, yoy };

inline std::string_view to_string(RideTransform t) { return t == RideTransform::level ? "level" : "yoy"; }

inline RideTransform parse_ride_transform(std::string_view s) {
    if (s == "level") return RideTransform::level;
    if (s == "yoy") return RideTransform::yoy;
    throw ConfigError("unknown RIDE transform '" + std::string(s) + "'");
}

struct RideConfig {
    NetworkSpec network;  // input_width is set from the indicators
    TrainConfig train{.epochs = 50, .learning_rate = 1e-3, .batch_size = 16, .seed = 0, .loss = LossKind::mse,
                      .objective = Objective::min_val_mse};
    RideTransform transform = RideTransform::level;
    AggregationMode eval_aggregation = AggregationMode::average;
    double val_fraction = 0.2;  // share of in-sample months held out for the validation curve
    std::uint64_t init_seed = 0;

    RideConfig() {
        network.dense_depth = 2;
        network.dense_units = 32;
        network.hidden_activation = Activation::tanh;
        network.output_activation = Activation::identity;
    }
};

struct RideModel {
    Network network;
    ScalerParams scaler;
    double target_mean = 0.0;
    double target_std = 1.0;
    RideTransform transform = RideTransform::level;
    TrainHistory history;
};

struct RideFit {
    RideModel model;
    Eigen::VectorXd monthly;  // de-standardized fitted series for the 3n in-sample months
};

/// Each quarter's value repeated over its three months.
inline Eigen::VectorXd replicate_quarters(const Eigen::VectorXd& y_q) {
    Eigen::VectorXd out(3 * y_q.size());
    for (Eigen::Index i = 0; i < y_q.size(); ++i) out.segment(3 * i, 3).setConstant(y_q(i));
    return out;
}

/// Inference on monthly rows expressed in the training transform; the stored
/// scaler is applied internally.
inline Eigen::VectorXd ride_extrapolate(const RideModel& model, const Eigen::MatrixXd& rows) {
    if (rows.rows() == 0) return Eigen::VectorXd(0);
    if (rows.cols() != model.scaler.width())
        throw DataError("ride_extrapolate: rows have " + std::to_string(rows.cols()) + " columns, model expects " +
                        std::to_string(model.scaler.width()));
    const Eigen::MatrixXd z = standardize_apply(rows, model.scaler);
    std::vector<Eigen::MatrixXd> steps{z.transpose()};
    return (predict(model.network, steps).array() * model.target_std + model.target_mean).matrix();
}

/// `indicators` holds at least 3n monthly rows (only the first 3n are used
/// for training); `y_q` the n quarterly target values, both already in the
/// configured transform.
inline RideFit ride_train(const RideConfig& cfg, const Eigen::MatrixXd& indicators, const Eigen::VectorXd& y_q) {
    const Eigen::Index months = 3 * y_q.size();
    if (y_q.size() < 2) throw DataError("ride_train: need at least two quarters");
    if (indicators.rows() < months)
        throw DataError("ride_train: indicators have " + std::to_string(indicators.rows()) + " months, need " +
                        std::to_string(months));
    if (!indicators.topRows(months).allFinite() || !y_q.allFinite())
        throw DataError("ride_train: missing or non-finite input");

    const Eigen::MatrixXd x = indicators.topRows(months);
    const Eigen::VectorXd target = replicate_quarters(y_q);
    RideModel model;
    model.transform = cfg.transform;

    SplitOptions opt{.test_fraction = cfg.val_fraction, .val_fraction = 0.5, .shuffle = true, .seed = cfg.train.seed};
    const auto idx = split_indices(static_cast<std::size_t>(months), opt);
    // the held-out block is used only as the validation curve; the "test" part
    // of the index split is folded back into validation
    std::vector<std::size_t> val = idx.val;
    val.insert(val.end(), idx.test.begin(), idx.test.end());
    std::vector<Eigen::Index> train_rows(idx.train.begin(), idx.train.end());

    model.scaler = standardize_fit(x(train_rows, Eigen::all));
    const Eigen::VectorXd t_train = target(train_rows);
    model.target_mean = t_train.mean();
    model.target_std = std::sqrt((t_train.array() - model.target_mean).square().mean());
    if (!(model.target_std > 0.0)) throw DataError("ride_train: constant target");

    const Samples all = make_windows(standardize_apply(x, model.scaler),
                                     standardize_apply(target, model.target_mean, model.target_std), 1);
    SplitBundle bundle{all.gather(idx.train), all.gather(val), {}, cfg.train.seed, true};

    NetworkSpec spec = cfg.network;
    spec.input_width = static_cast<std::size_t>(x.cols());
    spec.lstm_units = 0;
    spec.output_activation = Activation::identity;
    auto [net, history] = train(Network::create(spec, cfg.init_seed), bundle, cfg.train);
    for (double v : history.train_loss)
        if (!std::isfinite(v)) throw TrainingError("ride_train: training diverged");
    model.network = std::move(net);
    model.history = std::move(history);

    RideFit fit;
    fit.monthly = ride_extrapolate(model, x);
    fit.model = std::move(model);
    return fit;
}

}  // namespace macroxfer
