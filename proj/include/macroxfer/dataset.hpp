#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "macroxfer/error.hpp"
#include "macroxfer/random.hpp"

namespace macroxfer {

enum class Frequency { monthly, quarterly };

inline int periods_per_year(Frequency f) { return f == Frequency::monthly ? 12 : 4; }

inline std::string_view to_string(Frequency f) {
    return f == Frequency::monthly ? "monthly" : "quarterly";
}

inline Frequency parse_frequency(std::string_view s) {
    if (s == "monthly" || s == "M") return Frequency::monthly;
    if (s == "quarterly" || s == "Q") return Frequency::quarterly;
    throw ConfigError("unknown frequency '" + std::string(s) + "'");
}

/// A calendar period at monthly or quarterly resolution.
///
/// Stored as a count of periods since year 0 so consecutive periods differ
/// by exactly one regardless of frequency.
struct Period {
    Frequency frequency = Frequency::quarterly;
    std::int64_t ordinal = 0;

    static Period monthly(int year, int month) {
        return {Frequency::monthly, static_cast<std::int64_t>(year) * 12 + (month - 1)};
    }
    static Period quarterly(int year, int quarter) {
        return {Frequency::quarterly, static_cast<std::int64_t>(year) * 4 + (quarter - 1)};
    }

    int year() const { return static_cast<int>(ordinal / periods_per_year(frequency)); }
    /// Month (1..12) or quarter (1..4).
    int sub() const { return static_cast<int>(ordinal % periods_per_year(frequency)) + 1; }

    Period operator+(std::int64_t k) const { return {frequency, ordinal + k}; }
    std::int64_t operator-(const Period& o) const { return ordinal - o.ordinal; }
    auto operator<=>(const Period&) const = default;

    std::string str() const {
        char buf[16];
        if (frequency == Frequency::monthly)
            std::snprintf(buf, sizeof buf, "%04d-%02d", year(), sub());
        else
            std::snprintf(buf, sizeof buf, "%04d-Q%d", year(), sub());
        return buf;
    }
};

namespace detail {

inline bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_line(std::string_view line, char sep = ',') {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == sep) {
            cells.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return cells;
}

inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace detail

/// Parse YYYY-MM, YYYY-Qn, YYYY:Qn or YYYY-MM-DD into a period of the given frequency.
/// Monthly stamps are mapped to their quarter when the frequency is quarterly.
inline Period parse_period(std::string_view text, Frequency frequency) {
    text = detail::trim(text);
    const auto fail = [&] { return DataError("unparseable date '" + std::string(text) + "'"); };
    if (text.size() < 6 || (text[4] != '-' && text[4] != ':')) throw fail();
    int year = 0;
    if (!detail::parse_int(text.substr(0, 4), year)) throw fail();
    auto rest = text.substr(5);
    if (!rest.empty() && (rest.front() == 'Q' || rest.front() == 'q')) {
        int q = 0;
        if (!detail::parse_int(rest.substr(1), q) || q < 1 || q > 4) throw fail();
        if (frequency != Frequency::quarterly)
            throw DataError("quarterly stamp '" + std::string(text) + "' in a monthly series");
        return Period::quarterly(year, q);
    }
    int month = 0;
    auto month_text = rest.substr(0, rest.find('-'));
    if (!detail::parse_int(month_text, month) || month < 1 || month > 12) throw fail();
    if (month_text.size() != rest.size()) {
        int day = 0;
        if (!detail::parse_int(rest.substr(month_text.size() + 1), day) || day < 1 || day > 31) throw fail();
    }
    if (frequency == Frequency::monthly) return Period::monthly(year, month);
    return Period::quarterly(year, (month - 1) / 3 + 1);
}

/// Named, time-indexed columns of reals. Missing entries are NaN.
struct SeriesFrame {
    std::vector<std::string> columns;
    std::vector<Period> index;
    Frequency frequency = Frequency::quarterly;
    Eigen::MatrixXd values;  // rows = periods, cols = series

    std::size_t rows() const { return index.size(); }
    std::size_t cols() const { return columns.size(); }

    std::size_t column_index(std::string_view name) const {
        auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) throw DataError("no column named '" + std::string(name) + "'");
        return static_cast<std::size_t>(it - columns.begin());
    }

    Eigen::VectorXd column(std::string_view name) const {
        return values.col(static_cast<Eigen::Index>(column_index(name)));
    }

    /// Frame restricted to the named columns, in the given order.
    SeriesFrame select(const std::vector<std::string>& names) const {
        SeriesFrame out{names, index, frequency, Eigen::MatrixXd(rows(), names.size())};
        for (std::size_t j = 0; j < names.size(); ++j)
            out.values.col(static_cast<Eigen::Index>(j)) = column(names[j]);
        return out;
    }

    SeriesFrame drop(std::string_view name) const {
        std::vector<std::string> keep;
        for (const auto& c : columns)
            if (c != name) keep.push_back(c);
        return select(keep);
    }

    SeriesFrame slice_rows(std::size_t first, std::size_t count) const {
        SeriesFrame out{columns, {}, frequency, values.middleRows(static_cast<Eigen::Index>(first),
                                                                   static_cast<Eigen::Index>(count))};
        out.index.assign(index.begin() + static_cast<std::ptrdiff_t>(first),
                         index.begin() + static_cast<std::ptrdiff_t>(first + count));
        return out;
    }

    bool has_missing() const { return values.hasNaN(); }
};

/// Build a frame with a regular index starting at `start`.
inline SeriesFrame make_frame(std::vector<std::string> columns, Period start, Eigen::MatrixXd values) {
    SeriesFrame f{std::move(columns), {}, start.frequency, std::move(values)};
    f.index.reserve(static_cast<std::size_t>(f.values.rows()));
    for (Eigen::Index i = 0; i < f.values.rows(); ++i) f.index.push_back(start + i);
    return f;
}

inline SeriesFrame read_csv(std::istream& in, std::string_view date_column, Frequency frequency,
                            const std::string& source = "<stream>") {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty())
        throw DataError(source + ": empty file or missing header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_line(line);
    std::size_t date_col = header.size();
    std::vector<std::string> names;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == date_column)
            date_col = j;
        else
            names.emplace_back(header[j]);
    }
    if (date_col == header.size())
        throw DataError(source + ": date column '" + std::string(date_column) + "' not in header");

    std::vector<std::pair<Period, std::vector<double>>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_line(line);
        if (cells.size() != header.size())
            throw DataError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " fields, expected " + std::to_string(header.size()));
        std::vector<double> vals;
        vals.reserve(names.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j == date_col) continue;
            double v = std::numeric_limits<double>::quiet_NaN();
            if (!cells[j].empty() && cells[j] != "NA" && cells[j] != "NaN" && cells[j] != "." &&
                !detail::parse_double(cells[j], v))
                throw DataError(source + ": line " + std::to_string(line_no) + ": bad number '" +
                                std::string(cells[j]) + "'");
            vals.push_back(v);
        }
        rows.emplace_back(parse_period(cells[date_col], frequency), std::move(vals));
    }
    if (rows.empty()) throw DataError(source + ": no data rows");
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].first == rows[i - 1].first)
            throw DataError(source + ": duplicate date " + rows[i].first.str());
        if (rows[i].first - rows[i - 1].first != 1)
            throw DataError(source + ": gap in time index between " + rows[i - 1].first.str() + " and " +
                            rows[i].first.str());
    }
    SeriesFrame f{names, {}, frequency, Eigen::MatrixXd(rows.size(), names.size())};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        f.index.push_back(rows[i].first);
        for (std::size_t j = 0; j < names.size(); ++j)
            f.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].second[j];
    }
    return f;
}

inline SeriesFrame load_csv(const std::string& path, std::string_view date_column, Frequency frequency) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return read_csv(in, date_column, frequency, path);
}

/// Fixed six-decimal rendering used by every exported file.
inline std::string fmt6(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    if (std::string_view(buf) == "-0.000000") return "0.000000";
    return buf;
}

inline void write_csv(std::ostream& out, const SeriesFrame& f, std::string_view date_column = "date") {
    out << date_column;
    for (const auto& c : f.columns) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < f.rows(); ++i) {
        out << f.index[i].str();
        for (std::size_t j = 0; j < f.cols(); ++j)
            out << ',' << fmt6(f.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        out << '\n';
    }
}

/// Longest suffix of rows without any missing entry.
inline SeriesFrame trim_missing(const SeriesFrame& f) {
    std::size_t first = f.rows();
    while (first > 0 && !f.values.row(static_cast<Eigen::Index>(first - 1)).hasNaN()) --first;
    if (first == f.rows()) throw DataError("every row contains a missing value; no complete suffix");
    return f.slice_rows(first, f.rows() - first);
}

namespace detail {
inline void require_positive(const SeriesFrame& f, std::string_view op) {
    for (Eigen::Index i = 0; i < f.values.rows(); ++i)
        for (Eigen::Index j = 0; j < f.values.cols(); ++j)
            if (!(f.values(i, j) > 0.0))
                throw DataError(std::string(op) + ": nonpositive value in column '" +
                                f.columns[static_cast<std::size_t>(j)] + "' at row " + std::to_string(i) + " (" +
                                f.index[static_cast<std::size_t>(i)].str() + ")");
}
}  // namespace detail

/// Row t of the result is ln(x[t+1]) - ln(x[t]), stamped with period t+1.
inline SeriesFrame log_first_difference(const SeriesFrame& f) {
    detail::require_positive(f, "log_first_difference");
    if (f.rows() < 2) throw DataError("log_first_difference: need at least 2 rows");
    const auto n = static_cast<Eigen::Index>(f.rows());
    SeriesFrame out = f.slice_rows(1, f.rows() - 1);
    out.values = f.values.bottomRows(n - 1).binaryExpr(f.values.topRows(n - 1),
                                                      [](double b, double a) { return std::log(b / a); });
    return out;
}

/// Row t of the result is x[t+period] / x[t] - 1, stamped with period t+period.
inline SeriesFrame yoy_change(const SeriesFrame& f, std::size_t period) {
    if (period == 0) throw ConfigError("yoy_change: period must be positive");
    if (f.rows() <= period)
        throw DataError("yoy_change: frame has " + std::to_string(f.rows()) + " rows, needs more than " +
                        std::to_string(period));
    detail::require_positive(f, "yoy_change");
    const auto n = static_cast<Eigen::Index>(f.rows());
    const auto p = static_cast<Eigen::Index>(period);
    SeriesFrame out = f.slice_rows(period, f.rows() - period);
    out.values = (f.values.bottomRows(n - p).array() / f.values.topRows(n - p).array() - 1.0).matrix();
    return out;
}

inline SeriesFrame yoy_change(const SeriesFrame& f) {
    return yoy_change(f, static_cast<std::size_t>(periods_per_year(f.frequency)));
}

// ---------------------------------------------------------------------------
// Standardization

struct ScalerParams {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;  // population std, > 0

    Eigen::Index width() const { return mean.size(); }
};

/// Per-column mean and population standard deviation of the training rows.
inline ScalerParams standardize_fit(const Eigen::MatrixXd& train_rows) {
    if (train_rows.rows() < 2) throw DataError("standardize_fit: need at least 2 rows");
    ScalerParams p;
    p.mean = train_rows.colwise().mean().transpose();
    p.std.resize(train_rows.cols());
    for (Eigen::Index j = 0; j < train_rows.cols(); ++j) {
        const double var = (train_rows.col(j).array() - p.mean(j)).square().mean();
        p.std(j) = std::sqrt(var);
        if (!(p.std(j) > 0.0) || !std::isfinite(p.std(j)))
            throw DataError("standardize_fit: column " + std::to_string(j) + " is constant on the training rows");
    }
    return p;
}

inline Eigen::MatrixXd standardize_apply(const Eigen::MatrixXd& rows, const ScalerParams& p) {
    if (rows.cols() != p.width())
        throw DataError("standardize_apply: rows have " + std::to_string(rows.cols()) + " columns, scaler has " +
                        std::to_string(p.width()));
    return ((rows.rowwise() - p.mean.transpose()).array().rowwise() / p.std.transpose().array()).matrix();
}

inline Eigen::VectorXd standardize_apply(const Eigen::VectorXd& v, double mean, double sd) {
    return (v.array() - mean) / sd;
}

// ---------------------------------------------------------------------------
// Samples and splits

/// A set of (possibly sequential) samples. `steps[k]` holds time step k of
/// every sample as a column, so `steps[k]` is width x count. Cross-sectional
/// data has exactly one step.
struct Samples {
    std::vector<Eigen::MatrixXd> steps;
    Eigen::VectorXd targets;
    std::vector<std::size_t> origin;  // source row of each sample's target

    std::size_t size() const { return static_cast<std::size_t>(targets.size()); }
    std::size_t window() const { return steps.size(); }
    Eigen::Index width() const { return steps.empty() ? 0 : steps.front().rows(); }

    Samples gather(const std::vector<std::size_t>& idx) const {
        Samples out;
        std::vector<Eigen::Index> cols(idx.begin(), idx.end());
        out.steps.reserve(steps.size());
        for (const auto& s : steps) out.steps.push_back(s(Eigen::all, cols));
        out.targets = targets(cols);
        out.origin.reserve(idx.size());
        for (auto i : idx) out.origin.push_back(origin[i]);
        return out;
    }
};

/// Rows of `features` (row = period) as samples of length `window`; sample t
/// covers rows t..t+window-1 and carries the target of its last row.
inline Samples make_windows(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, std::size_t window = 1) {
    if (window == 0) throw ConfigError("window must be at least 1");
    if (features.rows() != targets.size())
        throw DataError("features have " + std::to_string(features.rows()) + " rows but targets have " +
                        std::to_string(targets.size()));
    const auto n = static_cast<std::size_t>(features.rows());
    if (n < window) throw DataError("fewer rows than the sequence window");
    const std::size_t count = n - window + 1;
    Samples s;
    s.steps.assign(window, Eigen::MatrixXd(features.cols(), static_cast<Eigen::Index>(count)));
    s.targets.resize(static_cast<Eigen::Index>(count));
    for (std::size_t t = 0; t < count; ++t) {
        for (std::size_t k = 0; k < window; ++k)
            s.steps[k].col(static_cast<Eigen::Index>(t)) = features.row(static_cast<Eigen::Index>(t + k)).transpose();
        s.targets(static_cast<Eigen::Index>(t)) = targets(static_cast<Eigen::Index>(t + window - 1));
        s.origin.push_back(t + window - 1);
    }
    return s;
}

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

struct SplitOptions {
    double test_fraction = 0.4;
    double val_fraction = 0.3;  // of the remainder after the test split
    bool shuffle = true;
    std::uint64_t seed = 0;
};

/// Partition 0..n-1. Part sizes follow the ceil convention of the common
/// train/test splitting helpers: test = ceil(n * test_fraction), then
/// val = ceil(rest * val_fraction). Unshuffled parts are contiguous blocks in
/// train -> val -> test order.
inline SplitIndices split_indices(std::size_t n, const SplitOptions& opt) {
    if (!(opt.test_fraction > 0.0 && opt.test_fraction < 1.0) || !(opt.val_fraction > 0.0 && opt.val_fraction < 1.0))
        throw ConfigError("split fractions must lie in (0, 1)");
    const auto ceil_part = [](std::size_t total, double frac) {
        // guard against 0.4 * 100 = 40.000000000000006
        return static_cast<std::size_t>(std::ceil(static_cast<double>(total) * frac - 1e-9));
    };
    const std::size_t n_test = ceil_part(n, opt.test_fraction);
    const std::size_t rest = n - std::min(n, n_test);
    const std::size_t n_val = ceil_part(rest, opt.val_fraction);
    if (n_test == 0 || rest == 0 || n_val == 0 || n_val >= rest)
        throw DataError("split of " + std::to_string(n) + " rows leaves an empty part");
    const std::size_t n_train = rest - n_val;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (opt.shuffle) {
        Rng rng(opt.seed);
        rng.shuffle(order.begin(), order.end());
    }
    SplitIndices s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(rest));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(rest), order.end());
    return s;
}

struct SplitBundle {
    Samples train, val, test;
    std::uint64_t seed = 0;
    bool shuffled = false;
};

/// Split already-prepared samples.
inline SplitBundle split(const Samples& all, const SplitOptions& opt) {
    const auto idx = split_indices(all.size(), opt);
    return {all.gather(idx.train), all.gather(idx.val), all.gather(idx.test), opt.seed, opt.shuffle};
}

/// Split a row-per-period feature matrix and labels into cross-sectional samples.
inline SplitBundle split(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels, const SplitOptions& opt) {
    return split(make_windows(features, labels, 1), opt);
}

/// Split, fit the scaler on the rows feeding the training samples, then
/// standardize and window. Validation and test rows always use the training fit.
struct PreparedData {
    SplitBundle bundle;
    ScalerParams scaler;
    SplitIndices indices;  // sample indices into the windowed set
};

inline PreparedData prepare(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, const SplitOptions& opt,
                            std::size_t window = 1) {
    if (features.rows() != targets.size()) throw DataError("feature/target row mismatch");
    if (static_cast<std::size_t>(features.rows()) < window) throw DataError("fewer rows than the sequence window");
    const std::size_t count = static_cast<std::size_t>(features.rows()) - window + 1;
    PreparedData out;
    out.indices = split_indices(count, opt);
    std::vector<char> used(static_cast<std::size_t>(features.rows()), 0);
    for (auto t : out.indices.train)
        for (std::size_t k = 0; k < window; ++k) used[t + k] = 1;
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < used.size(); ++i)
        if (used[i]) rows.push_back(static_cast<Eigen::Index>(i));
    out.scaler = standardize_fit(features(rows, Eigen::all));
    const Samples all = make_windows(standardize_apply(features, out.scaler), targets, window);
    out.bundle = {all.gather(out.indices.train), all.gather(out.indices.val), all.gather(out.indices.test), opt.seed,
                  opt.shuffle};
    return out;
}

// ---------------------------------------------------------------------------
// Labels

struct LabelStats {
    std::size_t pos = 0;
    std::size_t neg = 0;
    double initial_bias = 0.0;  // ln(pos / neg)
};

inline LabelStats label_stats(const Eigen::VectorXd& labels) {
    LabelStats s;
    for (double y : labels) {
        if (y == 1.0)
            ++s.pos;
        else if (y == 0.0)
            ++s.neg;
        else
            throw DataError("labels must be 0 or 1");
    }
    if (s.pos == 0 || s.neg == 0) throw DataError("label_stats: need both classes present");
    s.initial_bias = std::log(static_cast<double>(s.pos) / static_cast<double>(s.neg));
    return s;
}

}  // namespace macroxfer
