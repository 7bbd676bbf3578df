#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fundrank/error.hpp"
#include "fundrank/preprocess.hpp"
#include "fundrank/rf.hpp"

namespace fundrank {

struct FeatureSubset {
    std::vector<std::size_t> indices; // importance-descending
    std::vector<std::string> names;
    std::vector<double> importances;
    std::vector<double> importance_std;

    std::size_t k() const noexcept { return indices.size(); }
};

// Importance of every feature from one forest over the pooled train partition.
struct FeatureRanking {
    FeatureSubset all; // every feature, ordered
    std::size_t samples_used = 0;

    FeatureSubset top(std::size_t k) const {
        if (k == 0 || k > all.k()) throw ConfigError("KTooLarge", fmt::format("k = {} outside [1, {}]", k, all.k()));
        FeatureSubset s;
        s.indices.assign(all.indices.begin(), all.indices.begin() + static_cast<long>(k));
        s.names.assign(all.names.begin(), all.names.begin() + static_cast<long>(k));
        s.importances.assign(all.importances.begin(), all.importances.begin() + static_cast<long>(k));
        s.importance_std.assign(all.importance_std.begin(), all.importance_std.begin() + static_cast<long>(k));
        return s;
    }
};

inline FeatureRanking rank_features(const SampleSet& set, const rf::RfConfig& config, std::uint64_t seed) {
    auto train = set.indices(Partition::train);
    if (train.empty()) throw DataError("EmptyPartition", "feature selection needs train samples");
    Matrix x = set.design(train);
    auto y = set.targets(train);
    auto forest = rf::fit(config, x, y, seed);
    auto imp = rf::importance(forest);

    std::vector<std::size_t> order(set.feature_count());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return imp.mean[a] > imp.mean[b]; });

    FeatureRanking out;
    out.samples_used = train.size();
    for (auto f : order) {
        out.all.indices.push_back(f);
        out.all.names.push_back(set.feature_names[f]);
        out.all.importances.push_back(imp.mean[f]);
        out.all.importance_std.push_back(imp.stddev[f]);
    }
    return out;
}

// Top-k features by pooled RF importance; ties keep the lower index first.
inline FeatureSubset select_features(const SampleSet& set, const rf::RfConfig& config, std::size_t k, std::uint64_t seed) {
    if (k == 0 || k > set.feature_count())
        throw ConfigError("KTooLarge", fmt::format("k = {} outside [1, {}]", k, set.feature_count()));
    return rank_features(set, config, seed).top(k);
}

// Restricts every partition to the subset's columns. Standardization
// parameters are projected, not refit.
inline SampleSet project(SampleSet set, const std::vector<std::size_t>& columns) {
    for (auto c : columns)
        if (c >= set.feature_count())
            throw ConfigError("IndexOutOfRange", fmt::format("feature index {} with {} features", c, set.feature_count()));
    auto pick = [&](const std::vector<double>& v) {
        std::vector<double> out;
        out.reserve(columns.size());
        for (auto c : columns) out.push_back(v[c]);
        return out;
    };
    std::vector<std::string> names;
    for (auto c : columns) names.push_back(set.feature_names[c]);
    set.feature_names = std::move(names);
    for (auto& s : set.samples) {
        s.raw = pick(s.raw);
        s.features = pick(s.features);
    }
    if (set.params) set.params = StandardizationParams{pick(set.params->mean), pick(set.params->stddev)};
    return set;
}

inline SampleSet project(SampleSet set, const FeatureSubset& subset) { return project(std::move(set), subset.indices); }

inline nlohmann::json to_json(const FeatureSubset& s) {
    return {{"indices", s.indices}, {"names", s.names}, {"importances", s.importances}, {"importance_std", s.importance_std}};
}

inline FeatureSubset feature_subset_from_json(const nlohmann::json& j) {
    FeatureSubset s;
    s.indices = j.at("indices").get<std::vector<std::size_t>>();
    s.names = j.at("names").get<std::vector<std::string>>();
    s.importances = j.at("importances").get<std::vector<double>>();
    s.importance_std = j.at("importance_std").get<std::vector<double>>();
    if (s.names.size() != s.indices.size()) throw DataError("BadArtifact", "feature subset arrays differ in length");
    return s;
}

} // namespace fundrank
