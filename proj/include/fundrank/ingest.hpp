#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "fundrank/error.hpp"
#include "fundrank/quarter.hpp"

namespace fundrank {

// Raw fundamental columns, in the order of the derived feature vector (features 0..19).
inline constexpr std::array<std::string_view, 20> kFundamentalColumns = {
    "pe",           "assets",        "current_assets", "liabilities", "current_liabilities",
    "book_value",   "revenue",       "earnings",       "cash_from_op", "cash_from_inv",
    "cash_from_fin", "cash",         "capital_exp",    "pb",          "cash_per_share",
    "current_ratio", "net_margin",   "roa",            "asset_turnover", "eps"};

inline constexpr std::string_view kRelativeReturnFeature = "relative_return";

using Cell = std::optional<double>;

struct RawRecord {
    Quarter quarter;
    Cell price;
    std::vector<Cell> values; // aligned with StockSeries::feature_names
};

struct StockSeries {
    std::string ticker;
    std::vector<std::string> feature_names;
    std::vector<RawRecord> records;

    std::size_t feature_index(std::string_view name) const {
        auto it = std::find(feature_names.begin(), feature_names.end(), name);
        if (it == feature_names.end()) throw DataError("UnknownFeature", std::string(name));
        return static_cast<std::size_t>(it - feature_names.begin());
    }
};

struct BenchmarkSeries {
    std::vector<Quarter> quarters;
    std::vector<double> levels;

    std::optional<double> level(Quarter q) const {
        auto it = std::lower_bound(quarters.begin(), quarters.end(), q);
        if (it == quarters.end() || *it != q) return std::nullopt;
        return levels[static_cast<std::size_t>(it - quarters.begin())];
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline bool is_missing_token(std::string_view cell) {
    if (cell.empty()) return true;
    std::string lower(cell);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    return lower == "n/a" || lower == "na" || lower == "nan";
}

inline Cell parse_cell(std::string_view cell) {
    if (is_missing_token(cell)) return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("FileNotFound", path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        lines.push_back(line);
    }
    return lines;
}

inline std::string stock_header() {
    std::string header = "quarter_end,price";
    for (auto name : kFundamentalColumns) {
        header += ',';
        header += name;
    }
    return header;
}

} // namespace detail

// Parses one per-ticker CSV. The ticker is the file stem.
inline StockSeries parse_stock_file(const std::filesystem::path& path) {
    auto lines = detail::read_lines(path);
    if (lines.empty()) throw DataError("EmptyFile", path.string());

    auto header = detail::split_csv_line(lines.front());
    const std::string expected_line = detail::stock_header();
    auto expected = detail::split_csv_line(expected_line);
    if (header != expected) throw DataError("MalformedHeader", path.string());
    if (lines.size() == 1) throw DataError("EmptyFile", fmt::format("{} has no data rows", path.string()));

    StockSeries series;
    series.ticker = path.stem().string();
    series.feature_names.assign(kFundamentalColumns.begin(), kFundamentalColumns.end());

    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto cells = detail::split_csv_line(lines[i]);
        if (cells.size() > expected.size())
            throw DataError("MalformedRow", fmt::format("{}:{} has {} cells", path.string(), i + 1, cells.size()));
        RawRecord rec;
        rec.quarter = parse_quarter(cells[0]);
        rec.price = cells.size() > 1 ? detail::parse_cell(cells[1]) : std::nullopt;
        if (rec.price && *rec.price <= 0) rec.price.reset();
        rec.values.resize(kFundamentalColumns.size());
        for (std::size_t c = 2; c < cells.size(); ++c) rec.values[c - 2] = detail::parse_cell(cells[c]);
        series.records.push_back(std::move(rec));
    }

    std::stable_sort(series.records.begin(), series.records.end(),
                     [](const RawRecord& a, const RawRecord& b) { return a.quarter < b.quarter; });
    for (std::size_t i = 1; i < series.records.size(); ++i)
        if (series.records[i].quarter == series.records[i - 1].quarter)
            throw DataError("DuplicateQuarter",
                            fmt::format("{} repeats {}", path.string(), series.records[i].quarter.to_string()));
    return series;
}

inline BenchmarkSeries parse_benchmark_file(const std::filesystem::path& path) {
    auto lines = detail::read_lines(path);
    if (lines.empty()) throw DataError("EmptyFile", path.string());
    auto header = detail::split_csv_line(lines.front());
    if (header != std::vector<std::string_view>{"quarter_end", "level"})
        throw DataError("MalformedHeader", path.string());
    if (lines.size() == 1) throw DataError("EmptyFile", fmt::format("{} has no data rows", path.string()));

    std::vector<std::pair<Quarter, double>> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto cells = detail::split_csv_line(lines[i]);
        if (cells.size() != 2) throw DataError("MalformedRow", fmt::format("{}:{}", path.string(), i + 1));
        auto level = detail::parse_cell(cells[1]);
        if (!level || *level <= 0)
            throw DataError("BadLevel", fmt::format("{}:{} level must be positive", path.string(), i + 1));
        rows.emplace_back(parse_quarter(cells[0]), *level);
    }
    std::stable_sort(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.first < b.first; });

    BenchmarkSeries bench;
    for (auto& [q, level] : rows) {
        if (!bench.quarters.empty() && bench.quarters.back() == q)
            throw DataError("DuplicateQuarter", fmt::format("{} repeats {}", path.string(), q.to_string()));
        bench.quarters.push_back(q);
        bench.levels.push_back(level);
    }
    return bench;
}

// Every *.csv in a directory, sorted by ticker.
inline std::vector<StockSeries> parse_stock_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("FileNotFound", dir.string());
    std::vector<std::filesystem::path> files;
    for (auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("EmptyFile", fmt::format("no ticker files in {}", dir.string()));
    std::vector<StockSeries> out;
    out.reserve(files.size());
    for (auto& f : files) out.push_back(parse_stock_file(f));
    return out;
}

namespace detail {
inline std::string format_cell(const Cell& c) { return c ? fmt::format("{:.17g}", *c) : std::string(); }
} // namespace detail

// Writes the per-ticker schema. Features absent from the series are written empty.
inline void write_stock_file(const std::filesystem::path& path, const StockSeries& series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("WriteFailed", path.string());
    out << detail::stock_header() << '\n';
    std::vector<std::optional<std::size_t>> column_of;
    for (auto name : kFundamentalColumns) {
        auto it = std::find(series.feature_names.begin(), series.feature_names.end(), name);
        column_of.push_back(it == series.feature_names.end()
                                ? std::nullopt
                                : std::optional<std::size_t>(it - series.feature_names.begin()));
    }
    for (auto& rec : series.records) {
        out << rec.quarter.end_date() << ',' << detail::format_cell(rec.price);
        for (auto& col : column_of) out << ',' << (col ? detail::format_cell(rec.values[*col]) : std::string());
        out << '\n';
    }
}

inline void write_benchmark_file(const std::filesystem::path& path, const BenchmarkSeries& bench) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("WriteFailed", path.string());
    out << "quarter_end,level\n";
    for (std::size_t i = 0; i < bench.quarters.size(); ++i)
        out << bench.quarters[i].end_date() << ',' << fmt::format("{:.17g}", bench.levels[i]) << '\n';
}

struct DropResult {
    std::vector<StockSeries> universe;
    std::vector<std::string> dropped;
};

struct DropOptions {
    double max_missing_fraction = 0.5;
    // A feature is dropped when any series has a MISSING run longer than this.
    std::size_t block_threshold = 8;
};

inline std::size_t longest_missing_run(const StockSeries& series, std::size_t feature) {
    std::size_t best = 0, run = 0;
    for (auto& rec : series.records) {
        run = rec.values[feature] ? 0 : run + 1;
        best = std::max(best, run);
    }
    return best;
}

// Removes features that are sparse overall or have large missing blocks in any series.
inline DropResult drop_sparse_features(std::span<const StockSeries> universe, const DropOptions& opts = {}) {
    if (universe.empty()) throw DataError("EmptyUniverse", "no series to inspect");
    const auto& names = universe.front().feature_names;
    for (auto& s : universe)
        if (s.feature_names != names) throw DataError("SchemaMismatch", s.ticker);

    std::vector<bool> keep(names.size(), true);
    for (std::size_t f = 0; f < names.size(); ++f) {
        std::size_t missing = 0, total = 0;
        for (auto& s : universe) {
            for (auto& rec : s.records) missing += rec.values[f] ? 0 : 1;
            total += s.records.size();
            if (longest_missing_run(s, f) > opts.block_threshold) keep[f] = false;
        }
        if (total == 0 || static_cast<double>(missing) / static_cast<double>(total) > opts.max_missing_fraction)
            keep[f] = false;
    }
    if (std::none_of(keep.begin(), keep.end(), [](bool k) { return k; }))
        throw DataError("AllFeaturesDropped", "every feature failed the sparsity checks");

    DropResult result;
    for (std::size_t f = 0; f < names.size(); ++f)
        if (!keep[f]) result.dropped.push_back(names[f]);
    for (auto& s : universe) {
        StockSeries out{s.ticker, {}, {}};
        for (std::size_t f = 0; f < names.size(); ++f)
            if (keep[f]) out.feature_names.push_back(names[f]);
        for (auto& rec : s.records) {
            RawRecord r{rec.quarter, rec.price, {}};
            for (std::size_t f = 0; f < names.size(); ++f)
                if (keep[f]) r.values.push_back(rec.values[f]);
            out.records.push_back(std::move(r));
        }
        result.universe.push_back(std::move(out));
    }
    return result;
}

namespace detail {

// Fills MISSING cells of one column in place. Interior gaps of length <= 2 are
// linearly interpolated (a single gap gets the neighbour mean); edges copy the
// nearest value.
template <class Get>
void impute_column(std::size_t n, Get&& cell, const std::string& what) {
    std::size_t i = 0;
    bool any = false;
    for (std::size_t k = 0; k < n; ++k) any = any || cell(k).has_value();
    if (!any) throw DataError("GapTooLong", fmt::format("{} is entirely missing", what));
    while (i < n) {
        if (cell(i)) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < n && !cell(end)) ++end;
        std::size_t len = end - i;
        if (i == 0) {
            double fill = *cell(end);
            for (std::size_t k = i; k < end; ++k) cell(k) = fill;
        } else if (end == n) {
            double fill = *cell(i - 1);
            for (std::size_t k = i; k < end; ++k) cell(k) = fill;
        } else {
            if (len > 2) throw DataError("GapTooLong", fmt::format("{} has an interior gap of {} quarters", what, len));
            double left = *cell(i - 1), right = *cell(end);
            for (std::size_t k = 0; k < len; ++k)
                cell(i + k) = left + (right - left) * static_cast<double>(k + 1) / static_cast<double>(len + 1);
        }
        i = end;
    }
}

} // namespace detail

// Repairs MISSING values of every feature and the price column.
inline StockSeries impute_missing(StockSeries series) {
    const std::size_t n = series.records.size();
    for (std::size_t i = 1; i < n; ++i)
        if (!(series.records[i - 1].quarter < series.records[i].quarter))
            throw DataError("UnsortedSeries", series.ticker);
    if (n == 0) return series;
    detail::impute_column(n, [&](std::size_t k) -> Cell& { return series.records[k].price; },
                          series.ticker + ".price");
    for (std::size_t f = 0; f < series.feature_names.size(); ++f)
        detail::impute_column(n, [&](std::size_t k) -> Cell& { return series.records[k].values[f]; },
                              series.ticker + "." + series.feature_names[f]);
    return series;
}

inline bool is_complete(const StockSeries& series) {
    return std::all_of(series.records.begin(), series.records.end(), [](const RawRecord& r) {
        return r.price && std::all_of(r.values.begin(), r.values.end(), [](const Cell& c) { return c.has_value(); });
    });
}

} // namespace fundrank
