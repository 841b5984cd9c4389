#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "macroxfer/dataset.hpp"
#include "macroxfer/synthetic.hpp"

using namespace macroxfer;

namespace {

SeriesFrame parse(const std::string& text, Frequency f = Frequency::quarterly) {
    std::istringstream in(text);
    return read_csv(in, "date", f);
}

}  // namespace

TEST(LoadCsv, ThreeRowsOneColumn) {
    const auto f = parse("date,gdp\n2000-Q1,1.5\n2000-Q2,2.5\n2000-Q3,3.5\n");
    EXPECT_EQ(f.cols(), 1u);
    EXPECT_EQ(f.rows(), 3u);
    EXPECT_EQ(f.columns[0], "gdp");
    EXPECT_EQ(f.index[2].str(), "2000-Q3");
    EXPECT_DOUBLE_EQ(f.values(1, 0), 2.5);
}

TEST(LoadCsv, AcceptsMonthlyAndIsoDates) {
    const auto m = parse("date,x\n2001-01,1\n2001-02,2\n", Frequency::monthly);
    EXPECT_EQ(m.index[1].str(), "2001-02");
    const auto q = parse("date,x\n2001-01-01,1\n2001-04-01,2\n");
    EXPECT_EQ(q.index[1].str(), "2001-Q2");
}

TEST(LoadCsv, SortsRowsByDate) {
    const auto f = parse("date,x\n2000-Q2,2\n2000-Q1,1\n");
    EXPECT_EQ(f.index[0].str(), "2000-Q1");
    EXPECT_DOUBLE_EQ(f.values(0, 0), 1.0);
}

TEST(LoadCsv, Errors) {
    EXPECT_THROW(parse(""), DataError);
    EXPECT_THROW(parse("date,x\n"), DataError);
    EXPECT_THROW(parse("date,x\nyesterday,1\n"), DataError);
    EXPECT_THROW(parse("date,x,y\n2000-Q1,1\n"), DataError);
    EXPECT_THROW(parse("date,x\n2000-Q1,1\n2000-Q1,2\n"), DataError);
    EXPECT_THROW(parse("date,x\n2000-Q1,1\n2000-Q3,2\n"), DataError);
    EXPECT_THROW(load_csv("/nonexistent/file.csv", "date", Frequency::quarterly), DataError);
}

TEST(TrimMissing, LateStartingColumnIsTrimmed) {
    // column b starts ten years after a
    std::ostringstream q;
    q << "date,a,b\n";
    int row = 0;
    for (int y = 1995; y <= 2007; ++y)
        for (int k = 1; k <= 4; ++k, ++row) q << y << "-Q" << k << ',' << row + 1 << ',' << (y >= 2005 ? "1" : "") << '\n';
    const auto trimmed = trim_missing(parse(q.str()));
    EXPECT_EQ(trimmed.index.front().str(), "2005-Q1");
    EXPECT_FALSE(trimmed.has_missing());
}

TEST(TrimMissing, IdentityAndForcedSuffix) {
    const auto f = parse("date,x,y\n2000-Q1,1,1\n2000-Q2,2,2\n");
    const auto same = trim_missing(f);
    EXPECT_EQ(same.rows(), 2u);
    EXPECT_EQ(same.values, f.values);

    const auto g = parse("date,x,y\n2000-Q1,,1\n2000-Q2,,1\n2000-Q3,,1\n2000-Q4,,1\n2001-Q1,5,1\n2001-Q2,6,1\n");
    const auto t = trim_missing(g);
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_DOUBLE_EQ(t.values(0, 0), 5.0);

    EXPECT_THROW(trim_missing(parse("date,x\n2000-Q1,1\n2000-Q2,\n")), DataError);
}

TEST(LogFirstDifference, Examples) {
    const auto c = log_first_difference(parse("date,x\n2000-Q1,7\n2000-Q2,7\n2000-Q3,7\n"));
    ASSERT_EQ(c.rows(), 2u);
    EXPECT_EQ(c.values(0, 0), 0.0);
    EXPECT_EQ(c.values(1, 0), 0.0);
    EXPECT_EQ(c.index.front().str(), "2000-Q2");

    const auto g = log_first_difference(parse("date,x\n2000-Q1,100\n2000-Q2,110\n"));
    EXPECT_NEAR(g.values(0, 0), 0.0953102, 1e-7);

    try {
        log_first_difference(parse("date,x\n2000-Q1,1\n2000-Q2,0\n"));
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
    }
}

TEST(LogFirstDifference, CumulativeSumReconstructsSeries) {
    Rng rng(3);
    Eigen::MatrixXd v(40, 3);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform(0.5, 500.0);
    const auto frame = make_frame({"a", "b", "c"}, Period::quarterly(1990, 1), v);
    const auto d = log_first_difference(frame);
    for (Eigen::Index j = 0; j < 3; ++j) {
        double log_level = std::log(v(0, j));
        for (Eigen::Index i = 1; i < v.rows(); ++i) {
            log_level += d.values(i - 1, j);
            EXPECT_NEAR(std::exp(log_level) / v(i, j), 1.0, 1e-9);
        }
    }
}

TEST(YoyChange, Examples) {
    Eigen::MatrixXd v = Eigen::MatrixXd::Constant(14, 1, 100.0);
    v(12, 0) = 110.0;
    const auto f = make_frame({"x"}, Period::monthly(2000, 1), v);
    const auto y = yoy_change(f);
    ASSERT_EQ(y.rows(), 2u);
    EXPECT_NEAR(y.values(0, 0), 0.10, 1e-12);
    EXPECT_EQ(y.values(1, 0), 0.0);
    EXPECT_EQ(y.index.front().str(), "2001-01");

    const auto short_frame = make_frame({"x"}, Period::monthly(2000, 1), Eigen::MatrixXd::Constant(10, 1, 1.0));
    EXPECT_THROW(yoy_change(short_frame, 12), DataError);
}

TEST(Standardize, FitExamples) {
    Eigen::MatrixXd a(2, 1);
    a << 1, 3;
    const auto p = standardize_fit(a);
    EXPECT_DOUBLE_EQ(p.mean(0), 2.0);
    EXPECT_DOUBLE_EQ(p.std(0), 1.0);

    Eigen::MatrixXd s(2, 1);
    s << -1, 1;
    const auto q = standardize_fit(s);
    EXPECT_DOUBLE_EQ(q.mean(0), 0.0);
    EXPECT_DOUBLE_EQ(q.std(0), 1.0);

    EXPECT_THROW(standardize_fit(Eigen::MatrixXd::Constant(3, 1, 5.0)), DataError);
}

TEST(Standardize, ApplyExamples) {
    ScalerParams p{Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 1.0)};
    Eigen::MatrixXd rows(2, 1);
    rows << 1, 3;
    const auto z = standardize_apply(rows, p);
    EXPECT_DOUBLE_EQ(z(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(z(1, 0), 1.0);

    ScalerParams two{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)};
    EXPECT_THROW(standardize_apply(Eigen::MatrixXd::Zero(4, 3), two), DataError);
}

TEST(Standardize, OwnFitIsStandardProperty) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto n = static_cast<Eigen::Index>(2 + rng.below(100));
        const auto w = static_cast<Eigen::Index>(1 + rng.below(6));
        Eigen::MatrixXd m(n, w);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(rng.uniform(-50, 50), 3.0);
        const auto z = standardize_apply(m, standardize_fit(m));
        for (Eigen::Index j = 0; j < w; ++j) {
            EXPECT_NEAR(z.col(j).mean(), 0.0, 1e-9);
            EXPECT_NEAR(std::sqrt(z.col(j).array().square().mean()), 1.0, 1e-9);
        }
    }
}

TEST(Split, SizesFollowFractions) {
    const auto s = split_indices(100, {.test_fraction = 0.4, .val_fraction = 0.3, .shuffle = true, .seed = 1});
    EXPECT_EQ(s.train.size(), 42u);
    EXPECT_EQ(s.val.size(), 18u);
    EXPECT_EQ(s.test.size(), 40u);
}

TEST(Split, UnshuffledIsChronological) {
    const auto s = split_indices(57, {.shuffle = false});
    EXPECT_LT(s.train.back(), s.val.front());
    EXPECT_LT(s.val.back(), s.test.front());
    for (std::size_t i = 1; i < s.train.size(); ++i) EXPECT_EQ(s.train[i], s.train[i - 1] + 1);
}

TEST(Split, DeterministicDisjointExhaustiveProperty) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 10 + rng.below(300);
        const SplitOptions opt{.test_fraction = rng.uniform(0.1, 0.5), .val_fraction = rng.uniform(0.1, 0.5),
                               .shuffle = rng.bernoulli(0.5), .seed = rng.next_u64()};
        const auto a = split_indices(n, opt);
        const auto b = split_indices(n, opt);
        EXPECT_EQ(a.train, b.train);
        EXPECT_EQ(a.test, b.test);
        std::set<std::size_t> all(a.train.begin(), a.train.end());
        all.insert(a.val.begin(), a.val.end());
        all.insert(a.test.begin(), a.test.end());
        EXPECT_EQ(all.size(), n);
        EXPECT_EQ(a.train.size() + a.val.size() + a.test.size(), n);
    }
}

TEST(Split, EmptyPartIsError) { EXPECT_THROW(split_indices(2, {}), DataError); }

TEST(Split, PrepareFitsScalerOnTrainingRowsOnly) {
    Eigen::MatrixXd x(10, 1);
    for (int i = 0; i < 10; ++i) x(i, 0) = i;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(10);
    const auto p = prepare(x, y, {.test_fraction = 0.3, .val_fraction = 0.3, .shuffle = false});
    // train = rows 0..4 (7 remain after test, val = ceil(2.1) = 3)
    EXPECT_EQ(p.indices.train.size(), 4u);
    EXPECT_DOUBLE_EQ(p.scaler.mean(0), 1.5);
    EXPECT_EQ(p.bundle.test.size(), 3u);
}

TEST(Windows, SequenceSamplesCarryLastRowTarget) {
    Eigen::MatrixXd x(5, 2);
    for (int i = 0; i < 5; ++i) x.row(i) << i, 10 * i;
    Eigen::VectorXd y(5);
    y << 0, 1, 2, 3, 4;
    const auto s = make_windows(x, y, 3);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s.window(), 3u);
    EXPECT_DOUBLE_EQ(s.steps[0](0, 1), 1.0);
    EXPECT_DOUBLE_EQ(s.steps[2](1, 1), 30.0);
    EXPECT_DOUBLE_EQ(s.targets(2), 4.0);
    EXPECT_EQ(s.origin[0], 2u);
}

TEST(LabelStats, Examples) {
    Eigen::VectorXd even(4);
    even << 0, 1, 0, 1;
    EXPECT_DOUBLE_EQ(label_stats(even).initial_bias, 0.0);

    Eigen::VectorXd us = Eigen::VectorXd::Zero(211);
    us.head(27).setOnes();
    const auto s = label_stats(us);
    EXPECT_EQ(s.pos, 27u);
    EXPECT_EQ(s.neg, 184u);
    EXPECT_NEAR(s.initial_bias, std::log(27.0 / 184.0), 1e-15);
    EXPECT_NEAR(s.initial_bias, -1.919099, 1e-6);
    EXPECT_NEAR(1.0 / (1.0 + std::exp(-s.initial_bias)), 0.1280, 1e-4);

    EXPECT_THROW(label_stats(Eigen::VectorXd::Zero(5)), DataError);
}

TEST(LabelStats, SigmoidOfBiasIsBaseRateProperty) {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd y(2 + static_cast<Eigen::Index>(rng.below(500)));
        for (auto& v : y) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
        y(0) = 1.0;
        y(1) = 0.0;
        const auto s = label_stats(y);
        const double base = static_cast<double>(s.pos) / static_cast<double>(s.pos + s.neg);
        EXPECT_NEAR(1.0 / (1.0 + std::exp(-s.initial_bias)), base, 1e-12);
    }
}

TEST(RegimeSeries, Deterministic) {
    const auto a = generate_regime_series(7, 300);
    const auto b = generate_regime_series(7, 300);
    EXPECT_EQ(a.growth.values, b.growth.values);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(generate_regime_series(8, 300).growth.values, a.growth.values);
}

TEST(RegimeSeries, CalibratedToUsStatistics) {
    const auto r = generate_regime_series(1, 10000);
    EXPECT_NEAR(r.labels.mean(), 0.127962, 0.02);
    EXPECT_NEAR(r.growth.column("gdp").mean(), 0.006844, 0.001);
}

TEST(RegimeSeries, InvalidParameters) {
    RegimeSeriesParams p;
    p.exit_probability = 0.0;
    EXPECT_THROW(generate_regime_series(1, 100, p), ConfigError);
    p = {};
    p.recession_share = 1.2;
    EXPECT_THROW(generate_regime_series(1, 100, p), ConfigError);
    EXPECT_THROW(generate_regime_series(1, 10), ConfigError);
}

TEST(WriteCsv, SixDecimals) {
    Eigen::MatrixXd v(1, 2);
    v << 1.0 / 3.0, std::numeric_limits<double>::quiet_NaN();
    std::ostringstream out;
    write_csv(out, make_frame({"a", "b"}, Period::quarterly(2000, 1), v));
    EXPECT_EQ(out.str(), "date,a,b\n2000-Q1,0.333333,\n");
}
