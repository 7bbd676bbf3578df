#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fundrank/error.hpp"
#include "fundrank/ingest.hpp"
#include "fundrank/matrix.hpp"
#include "fundrank/quarter.hpp"

namespace fundrank {

enum class Partition : std::uint8_t { train, validation, test, unassigned };

inline std::string_view to_string(Partition p) {
    switch (p) {
    case Partition::train: return "train";
    case Partition::validation: return "validation";
    case Partition::test: return "test";
    case Partition::unassigned: return "unassigned";
    }
    return "unassigned";
}

inline Partition parse_partition(std::string_view s) {
    if (s == "train") return Partition::train;
    if (s == "validation") return Partition::validation;
    if (s == "test") return Partition::test;
    if (s == "unassigned") return Partition::unassigned;
    throw ConfigError("BadPartition", std::string(s));
}

// One supervised example: features observed at feature_quarter predict the
// relative return realised over target_quarter (the next quarter).
struct Sample {
    std::string ticker;
    Quarter feature_quarter;
    Quarter target_quarter;
    double target = 0.0;        // percentage points
    std::vector<double> raw;    // detrended, unstandardized
    std::vector<double> features;
    Partition partition = Partition::unassigned;

    bool operator==(const Sample&) const = default;
};

// Partitions are labelled by target quarter: train <= train_end < validation <= validation_end < test.
struct SplitBoundaries {
    Quarter train_end;
    Quarter validation_end;

    bool operator==(const SplitBoundaries&) const = default;
};

struct StandardizationParams {
    std::vector<double> mean;
    std::vector<double> stddev;

    bool operator==(const StandardizationParams&) const = default;
};

struct SampleSet {
    std::vector<std::string> feature_names;
    std::vector<Sample> samples; // sorted by (ticker, feature_quarter)
    std::optional<SplitBoundaries> boundaries;
    std::optional<StandardizationParams> params;
    bool merged = false;

    std::size_t feature_count() const noexcept { return feature_names.size(); }

    std::vector<std::string> tickers() const {
        std::vector<std::string> out;
        for (auto& s : samples)
            if (out.empty() || out.back() != s.ticker) out.push_back(s.ticker);
        return out;
    }

    std::vector<std::size_t> indices(Partition p) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (samples[i].partition == p) out.push_back(i);
        return out;
    }

    std::vector<std::size_t> indices(Partition p, std::string_view ticker) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (samples[i].partition == p && samples[i].ticker == ticker) out.push_back(i);
        return out;
    }

    std::vector<Quarter> target_quarters(Partition p) const {
        std::set<Quarter> qs;
        for (auto& s : samples)
            if (s.partition == p) qs.insert(s.target_quarter);
        return {qs.begin(), qs.end()};
    }

    // Model-ready design matrix and targets for a list of sample indices.
    Matrix design(std::span<const std::size_t> idx) const {
        Matrix x(idx.size(), feature_count());
        for (std::size_t r = 0; r < idx.size(); ++r)
            std::copy(samples[idx[r]].features.begin(), samples[idx[r]].features.end(), x.row(r).begin());
        return x;
    }

    std::vector<double> targets(std::span<const std::size_t> idx) const {
        std::vector<double> y;
        y.reserve(idx.size());
        for (auto i : idx) y.push_back(samples[i].target);
        return y;
    }

    bool operator==(const SampleSet&) const = default;
};

enum class ZeroBasePolicy { zero_with_warning, error };

struct DetrendedRow {
    Quarter quarter;
    std::vector<double> values;
};

struct PctChangeResult {
    std::vector<DetrendedRow> rows;
    std::vector<std::string> warnings;
};

// Percentage change of every fundamental between consecutive quarters.
// The first quarter has no row. A zero base maps to 0 (with a warning) or throws.
inline PctChangeResult pct_change(const StockSeries& series, ZeroBasePolicy policy = ZeroBasePolicy::zero_with_warning) {
    if (series.records.size() < 2) throw DataError("InsufficientHistory", series.ticker + " needs two quarters");
    if (!is_complete(series)) throw DataError("MissingValues", series.ticker + " must be imputed first");
    PctChangeResult out;
    for (std::size_t t = 1; t < series.records.size(); ++t) {
        const auto& prev = series.records[t - 1];
        const auto& cur = series.records[t];
        DetrendedRow row{cur.quarter, std::vector<double>(series.feature_names.size())};
        for (std::size_t f = 0; f < row.values.size(); ++f) {
            double base = *prev.values[f], now = *cur.values[f];
            if (base == 0.0) {
                if (policy == ZeroBasePolicy::error)
                    throw DataError("ZeroBase", fmt::format("{} {} at {}", series.ticker, series.feature_names[f],
                                                            prev.quarter.to_string()));
                out.warnings.push_back(fmt::format("ZeroBase: {} {} at {} set to 0", series.ticker,
                                                   series.feature_names[f], cur.quarter.to_string()));
                row.values[f] = 0.0;
            } else {
                row.values[f] = (now - base) / base * 100.0;
            }
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

// Stock return minus benchmark return over `quarter`, in percentage points.
// The quarter starts at the previous quarter's close.
inline double compute_relative_return(const StockSeries& series, const BenchmarkSeries& benchmark, Quarter quarter) {
    auto it = std::find_if(series.records.begin(), series.records.end(),
                           [&](const RawRecord& r) { return r.quarter == quarter; });
    if (it == series.records.end() || it == series.records.begin() || std::prev(it)->quarter != quarter.prev())
        throw DataError("QuarterOutOfRange", fmt::format("{} lacks prices around {}", series.ticker, quarter.to_string()));
    auto b_end = benchmark.level(quarter);
    auto b_start = benchmark.level(quarter.prev());
    if (!b_end || !b_start)
        throw DataError("QuarterOutOfRange", fmt::format("benchmark lacks levels around {}", quarter.to_string()));
    if (!it->price || !std::prev(it)->price)
        throw DataError("MissingValues", fmt::format("{} price missing near {}", series.ticker, quarter.to_string()));
    double stock = (*it->price / *std::prev(it)->price - 1.0) * 100.0;
    double index = (*b_end / *b_start - 1.0) * 100.0;
    return stock - index;
}

struct AssembleOptions {
    ZeroBasePolicy zero_base = ZeroBasePolicy::zero_with_warning;
};

struct AssembleResult {
    SampleSet set;
    std::vector<std::string> warnings;
};

// Builds (features at t, relative return over t+1) samples for every ticker.
// The last feature is the relative return over t itself.
inline AssembleResult assemble_samples(std::span<const StockSeries> universe, const BenchmarkSeries& benchmark,
                                       const AssembleOptions& opts = {}) {
    if (universe.empty()) throw DataError("EmptyUniverse", "no series to assemble");
    AssembleResult out;
    out.set.feature_names = universe.front().feature_names;
    out.set.feature_names.emplace_back(kRelativeReturnFeature);

    std::vector<const StockSeries*> ordered;
    for (auto& s : universe) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->ticker < b->ticker; });
    for (std::size_t i = 1; i < ordered.size(); ++i)
        if (ordered[i]->ticker == ordered[i - 1]->ticker) throw DataError("DuplicateTicker", ordered[i]->ticker);

    for (const StockSeries* s : ordered) {
        if (s->feature_names.size() + 1 != out.set.feature_names.size())
            throw DataError("SchemaMismatch", s->ticker);
        if (s->records.size() < 3)
            throw DataError("InsufficientHistory", fmt::format("{} has {} quarters, needs 3", s->ticker, s->records.size()));
        for (std::size_t i = 1; i < s->records.size(); ++i)
            if (s->records[i].quarter != s->records[i - 1].quarter.next())
                throw DataError("NonContiguousSeries", fmt::format("{} skips after {}", s->ticker,
                                                                   s->records[i - 1].quarter.to_string()));
        auto detrended = pct_change(*s, opts.zero_base);
        out.warnings.insert(out.warnings.end(), detrended.warnings.begin(), detrended.warnings.end());
        // rows[t-1] holds the change into records[t]; the last row has no next-quarter target.
        for (std::size_t r = 0; r + 1 < detrended.rows.size(); ++r) {
            Quarter fq = detrended.rows[r].quarter;
            Sample sample;
            sample.ticker = s->ticker;
            sample.feature_quarter = fq;
            sample.target_quarter = fq.next();
            sample.raw = detrended.rows[r].values;
            sample.raw.push_back(compute_relative_return(*s, benchmark, fq));
            sample.target = compute_relative_return(*s, benchmark, fq.next());
            sample.features = sample.raw;
            out.set.samples.push_back(std::move(sample));
        }
    }
    return out;
}

// 60/20/20 by distinct target-quarter count.
inline SplitBoundaries default_boundaries(const SampleSet& set, double train_fraction = 0.6,
                                          double validation_fraction = 0.2) {
    std::set<Quarter> qs;
    for (auto& s : set.samples) qs.insert(s.target_quarter);
    std::vector<Quarter> q(qs.begin(), qs.end());
    if (q.size() < 3) throw DataError("EmptyPartition", "need at least three distinct quarters to split");
    auto n = static_cast<double>(q.size());
    auto n_train = static_cast<std::size_t>(std::lround(train_fraction * n));
    auto n_train_val = static_cast<std::size_t>(std::lround((train_fraction + validation_fraction) * n));
    n_train = std::clamp<std::size_t>(n_train, 1, q.size() - 2);
    n_train_val = std::clamp<std::size_t>(n_train_val, n_train + 1, q.size() - 1);
    return {q[n_train - 1], q[n_train_val - 1]};
}

inline SampleSet split_chronological(SampleSet set, const SplitBoundaries& b) {
    if (!(b.train_end < b.validation_end))
        throw ConfigError("BadBoundaries", "train boundary must precede validation boundary");
    std::size_t counts[3] = {0, 0, 0};
    for (auto& s : set.samples) {
        if (s.target_quarter <= b.train_end)
            s.partition = Partition::train;
        else if (s.target_quarter <= b.validation_end)
            s.partition = Partition::validation;
        else
            s.partition = Partition::test;
        ++counts[static_cast<int>(s.partition)];
    }
    for (int p = 0; p < 3; ++p)
        if (counts[p] == 0)
            throw DataError("EmptyPartition", fmt::format("{} partition is empty for boundaries {}/{}",
                                                          to_string(static_cast<Partition>(p)),
                                                          b.train_end.to_string(), b.validation_end.to_string()));
    set.boundaries = b;
    set.params.reset();
    set.merged = false;
    for (auto& s : set.samples) s.features = s.raw;
    return set;
}

// Mean and population standard deviation of each raw feature over the train partition.
inline StandardizationParams fit_standardization(const SampleSet& set) {
    auto train = set.indices(Partition::train);
    if (train.empty()) throw DataError("EmptyPartition", "train partition is empty");
    const std::size_t p = set.feature_count();
    StandardizationParams params{std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
    const auto n = static_cast<double>(train.size());
    for (auto i : train)
        for (std::size_t f = 0; f < p; ++f) params.mean[f] += set.samples[i].raw[f];
    for (auto& m : params.mean) m /= n;
    for (auto i : train)
        for (std::size_t f = 0; f < p; ++f) {
            double d = set.samples[i].raw[f] - params.mean[f];
            params.stddev[f] += d * d;
        }
    for (std::size_t f = 0; f < p; ++f) {
        params.stddev[f] = std::sqrt(params.stddev[f] / n);
        if (!(params.stddev[f] > 1e-12 * std::max(1.0, std::abs(params.mean[f]))))
            throw NumericalError("ZeroVariance", fmt::format("feature '{}' is constant on train", set.feature_names[f]));
    }
    return params;
}

inline SampleSet apply_standardization(SampleSet set, const StandardizationParams& params) {
    if (params.mean.size() != set.feature_count()) throw DataError("DimensionMismatch", "standardization width");
    for (auto& s : set.samples)
        for (std::size_t f = 0; f < s.raw.size(); ++f) s.features[f] = (s.raw[f] - params.mean[f]) / params.stddev[f];
    set.params = params;
    return set;
}

// Standardizes all partitions with train-only statistics; targets are untouched.
inline SampleSet standardize(SampleSet set) {
    auto params = fit_standardization(set);
    return apply_standardization(std::move(set), params);
}

// Folds validation into train and refits standardization on the merged train.
inline SampleSet merge_train_validation(SampleSet set) {
    if (set.merged) return set;
    for (auto& s : set.samples)
        if (s.partition == Partition::validation) s.partition = Partition::train;
    if (set.boundaries) set.boundaries->train_end = set.boundaries->validation_end;
    set.merged = true;
    if (set.params) set = standardize(std::move(set));
    return set;
}

// ---- serialization ----

inline nlohmann::json to_json(const SampleSet& set) {
    using nlohmann::json;
    json j;
    j["format"] = "fundrank.samples";
    j["version"] = 1;
    j["feature_names"] = set.feature_names;
    j["merged"] = set.merged;
    if (set.boundaries)
        j["boundaries"] = {{"train_end", set.boundaries->train_end.to_string()},
                           {"validation_end", set.boundaries->validation_end.to_string()}};
    if (set.params) j["standardization"] = {{"mean", set.params->mean}, {"stddev", set.params->stddev}};
    json samples = json::array();
    for (auto& s : set.samples)
        samples.push_back({{"ticker", s.ticker},
                           {"feature_quarter", s.feature_quarter.to_string()},
                           {"target_quarter", s.target_quarter.to_string()},
                           {"partition", to_string(s.partition)},
                           {"target", s.target},
                           {"raw", s.raw},
                           {"features", s.features}});
    j["samples"] = std::move(samples);
    return j;
}

inline SampleSet sample_set_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "fundrank.samples" || j.value("version", 0) != 1)
        throw DataError("BadArtifact", "not a version-1 sample set");
    SampleSet set;
    set.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    set.merged = j.value("merged", false);
    if (j.contains("boundaries"))
        set.boundaries = SplitBoundaries{parse_quarter(j["boundaries"].at("train_end").get<std::string>()),
                                         parse_quarter(j["boundaries"].at("validation_end").get<std::string>())};
    if (j.contains("standardization"))
        set.params = StandardizationParams{j["standardization"].at("mean").get<std::vector<double>>(),
                                           j["standardization"].at("stddev").get<std::vector<double>>()};
    for (auto& js : j.at("samples")) {
        Sample s;
        s.ticker = js.at("ticker").get<std::string>();
        s.feature_quarter = parse_quarter(js.at("feature_quarter").get<std::string>());
        s.target_quarter = parse_quarter(js.at("target_quarter").get<std::string>());
        s.partition = parse_partition(js.at("partition").get<std::string>());
        s.target = js.at("target").get<double>();
        s.raw = js.at("raw").get<std::vector<double>>();
        s.features = js.at("features").get<std::vector<double>>();
        set.samples.push_back(std::move(s));
    }
    return set;
}

} // namespace fundrank
