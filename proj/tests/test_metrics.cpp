#include <gtest/gtest.h>

#include <cmath>

#include "macroxfer/metrics.hpp"
#include "macroxfer/random.hpp"
#include "oracles.hpp"

using namespace macroxfer;

namespace {
Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}
}  // namespace

TEST(Auc, Examples) {
    EXPECT_DOUBLE_EQ(auc(vec({0.1, 0.4, 0.35, 0.8}), vec({0, 0, 1, 1})), 0.75);
    EXPECT_DOUBLE_EQ(auc(vec({0.5, 0.5, 0.5, 0.5}), vec({0, 1, 0, 1})), 0.5);
    EXPECT_DOUBLE_EQ(auc(vec({0.9, 0.8, 0.1, 0.2}), vec({1, 1, 0, 0})), 1.0);
    EXPECT_DOUBLE_EQ(auc(vec({0.1, 0.2, 0.9, 0.8}), vec({1, 1, 0, 0})), 0.0);
}

TEST(Auc, Errors) {
    EXPECT_THROW(auc(vec({0.1, 0.2}), vec({1, 1})), DataError);
    EXPECT_THROW(auc(vec({0.1, 0.2}), vec({1})), DataError);
    EXPECT_THROW(auc(vec({0.1, 0.2}), vec({1, 2})), DataError);
}

TEST(Auc, MatchesPairCountingAndTrapezoidProperty) {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<Eigen::Index>(2 + rng.below(80));
        Eigen::VectorXd s(n), y(n);
        const bool coarse = rng.bernoulli(0.5);  // coarse scores force ties
        for (Eigen::Index i = 0; i < n; ++i) {
            s(i) = coarse ? static_cast<double>(rng.below(5)) : rng.uniform();
            y(i) = rng.bernoulli(0.4) ? 1.0 : 0.0;
        }
        y(0) = 1.0;
        y(1) = 0.0;
        const double a = auc(s, y);
        EXPECT_NEAR(a, oracle::auc_pairs(s, y), 1e-12);
        EXPECT_NEAR(a, trapezoid_area(roc_curve(s, y)), 1e-12);
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
        // strictly increasing transform leaves AUC unchanged
        EXPECT_NEAR(auc(s.unaryExpr([](double v) { return 3.0 * std::exp(v); }), y), a, 1e-12);
        // swapping the labels reflects it
        EXPECT_NEAR(auc(s, (1.0 - y.array()).matrix()), 1.0 - a, 1e-12);
    }
}

TEST(Confusion, ThresholdIsInclusive) {
    const auto c = confusion(vec({0.5, 0.49, 0.9, 0.1}), vec({1, 1, 0, 0}));
    EXPECT_EQ(c.tp, 1u);
    EXPECT_EQ(c.fn, 1u);
    EXPECT_EQ(c.fp, 1u);
    EXPECT_EQ(c.tn, 1u);
    EXPECT_EQ(c.total(), 4u);
}

TEST(Confusion, CountsSumToN) {
    Rng rng(3);
    Eigen::VectorXd s(50), y(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
        s(i) = rng.uniform();
        y(i) = rng.bernoulli(0.5);
    }
    EXPECT_EQ(confusion(s, y, rng.uniform()).total(), 50u);
}

TEST(Regression, MaeMsePearson) {
    EXPECT_DOUBLE_EQ(mae(vec({1, 2, 3}), vec({1, 2, 5})), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(mse(vec({1, 2, 3}), vec({1, 2, 5})), 4.0 / 3.0);
    EXPECT_NEAR(pearson(vec({1, 2, 3}), vec({2, 4, 6})), 1.0, 1e-15);
    EXPECT_NEAR(pearson(vec({1, 2, 3}), vec({3, 2, 1})), -1.0, 1e-15);
    EXPECT_THROW(pearson(vec({1, 1, 1}), vec({1, 2, 3})), DataError);
    EXPECT_THROW(mae(vec({}), vec({})), DataError);
}

TEST(Report, JsonUsesSixDecimals) {
    const auto r = classification_report(vec({0.1, 0.4, 0.35, 0.8}), vec({0, 0, 1, 1}));
    const auto text = to_json(r);
    EXPECT_NE(text.find("\"auc\": 0.750000"), std::string::npos);
    EXPECT_NE(text.find("\"count\": 4"), std::string::npos);
    const auto g = regression_report(vec({1, 2, 3}), vec({1, 2, 4}));
    ASSERT_TRUE(g.pearson.has_value());
    EXPECT_NE(to_json(g).find("\"mae\": 0.333333"), std::string::npos);
}

TEST(Auc, NegationComplementsWithoutTies) {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd s(30), y(30);
        for (Eigen::Index i = 0; i < 30; ++i) {
            s(i) = rng.uniform();
            y(i) = i % 3 == 0;
        }
        EXPECT_NEAR(auc(s, y) + auc(-s, y), 1.0, 1e-12);
        EXPECT_NEAR(auc(s, y), auc(2.0 * s.array() - 7.0, y), 1e-12);
    }
}

TEST(Confusion, SpecExamples) {
    const auto c = confusion(vec({0.9, 0.2}), vec({0, 1}));
    EXPECT_EQ(c, (ConfusionMatrix{0, 1, 1, 0}));
    EXPECT_THROW(confusion(vec({}), vec({})), DataError);
}

TEST(Regression, MaeTranslationInvariant) {
    EXPECT_DOUBLE_EQ(mae(vec({1, 2}), vec({2, 4})), 1.5);
    Rng rng(1);
    Eigen::VectorXd p(20), t(20);
    for (Eigen::Index i = 0; i < 20; ++i) {
        p(i) = rng.normal();
        t(i) = rng.normal();
    }
    EXPECT_NEAR(mae(p.array() + 3.5, t.array() + 3.5), mae(p, t), 1e-12);
}
