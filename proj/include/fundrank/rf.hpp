#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fundrank/error.hpp"
#include "fundrank/matrix.hpp"
#include "fundrank/model.hpp"
#include "fundrank/parallel.hpp"
#include "fundrank/rng.hpp"

namespace fundrank::rf {

struct RfConfig {
    std::size_t n_estimators = 100;
    std::size_t min_samples_split = 5;
    std::size_t max_features = 0; // 0 = ceil(p / 3)
    std::size_t max_depth = 0;    // 0 = unlimited
    bool bootstrap = true;
    unsigned threads = 1;         // tree-level parallelism

    std::size_t resolved_max_features(std::size_t p) const {
        return max_features == 0 ? std::max<std::size_t>(1, (p + 2) / 3) : max_features;
    }

    void validate(std::size_t p) const {
        if (n_estimators == 0) throw ConfigError("BadConfig", "n_estimators must be >= 1");
        if (min_samples_split < 2) throw ConfigError("BadConfig", "min_samples_split must be >= 2");
        auto mf = resolved_max_features(p);
        if (mf < 1 || mf > p) throw ConfigError("BadConfig", fmt::format("max_features {} outside [1, {}]", mf, p));
    }
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;             // mean target of the samples reaching this node
    double impurity_decrease = 0.0; // parent SSE minus children SSE
};

struct DecisionTree {
    std::vector<TreeNode> nodes; // nodes[0] is the root

    double predict(std::span<const double> x) const {
        std::size_t i = 0;
        while (nodes[i].feature >= 0)
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold
                                             ? nodes[i].left
                                             : nodes[i].right);
        return nodes[i].value;
    }

    std::size_t split_count() const {
        return static_cast<std::size_t>(
            std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature >= 0; }));
    }
};

struct Forest {
    RfConfig config;
    std::size_t n_features = 0;
    std::uint64_t seed = 0;
    std::vector<DecisionTree> trees;
};

namespace detail {

// Split scores closer than this fraction of the node's sum of squared targets count as ties.
inline constexpr double kTieMargin = 1e-10;

struct TreeBuilder {
    const Matrix& x;
    std::span<const double> y;
    std::size_t max_features;
    std::size_t min_samples_split;
    std::size_t max_depth;
    std::mt19937_64& rng;
    DecisionTree tree;
    std::vector<std::size_t> feature_pool;

    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double score = -std::numeric_limits<double>::infinity(); // sum_l^2/n_l + sum_r^2/n_r, to maximise
    };

    std::vector<std::size_t> candidate_features() {
        const std::size_t p = x.cols();
        if (max_features >= p) {
            std::vector<std::size_t> all(p);
            std::iota(all.begin(), all.end(), 0);
            return all;
        }
        feature_pool.resize(p);
        std::iota(feature_pool.begin(), feature_pool.end(), 0);
        for (std::size_t i = 0; i < max_features; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, p - 1);
            std::swap(feature_pool[i], feature_pool[pick(rng)]);
        }
        std::vector<std::size_t> chosen(feature_pool.begin(), feature_pool.begin() + static_cast<long>(max_features));
        std::sort(chosen.begin(), chosen.end());
        return chosen;
    }

    // Scans features in ascending index order and thresholds in ascending order.
    // A candidate must beat the incumbent by more than a rounding margin, so
    // analytically tied splits go to the lowest feature index and threshold.
    Split best_split(std::span<std::size_t> idx) {
        Split best;
        const std::size_t n = idx.size();
        double total = 0.0, sumsq = 0.0;
        for (auto i : idx) {
            total += y[i];
            sumsq += y[i] * y[i];
        }
        const double margin = kTieMargin * sumsq;
        std::vector<std::size_t> order;
        for (std::size_t f : candidate_features()) {
            order.assign(idx.begin(), idx.end());
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
            double left_sum = 0.0;
            for (std::size_t k = 1; k < n; ++k) {
                left_sum += y[order[k - 1]];
                double lo = x(order[k - 1], f), hi = x(order[k], f);
                if (!(lo < hi)) continue;
                double nl = static_cast<double>(k), nr = static_cast<double>(n - k);
                double right_sum = total - left_sum;
                double score = left_sum * left_sum / nl + right_sum * right_sum / nr;
                if (score > best.score + margin) {
                    double mid = lo + (hi - lo) / 2.0;
                    if (!(mid < hi)) mid = lo;
                    best = {static_cast<int>(f), mid, score};
                }
            }
        }
        return best;
    }

    int build(std::span<std::size_t> idx, std::size_t depth) {
        const std::size_t n = idx.size();
        double mean = 0.0;
        for (auto i : idx) mean += y[i];
        mean /= static_cast<double>(n);
        int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, mean, 0.0});

        if (n < min_samples_split || (max_depth > 0 && depth >= max_depth)) return node_id;
        double sse = 0.0;
        for (auto i : idx) sse += (y[i] - mean) * (y[i] - mean);
        if (!(sse > 0.0)) return node_id;

        Split split = best_split(idx);
        if (split.feature < 0) return node_id;
        double total = mean * static_cast<double>(n);
        double gain = split.score - total * total / static_cast<double>(n);
        if (!(gain > 1e-12 * sse)) return node_id;

        auto f = static_cast<std::size_t>(split.feature);
        auto mid = std::stable_partition(idx.begin(), idx.end(), [&](std::size_t i) { return x(i, f) <= split.threshold; });
        auto n_left = static_cast<std::size_t>(mid - idx.begin());
        tree.nodes[node_id].feature = split.feature;
        tree.nodes[node_id].threshold = split.threshold;
        tree.nodes[node_id].impurity_decrease = gain;
        int left = build(idx.subspan(0, n_left), depth + 1);
        int right = build(idx.subspan(n_left), depth + 1);
        tree.nodes[node_id].left = left;
        tree.nodes[node_id].right = right;
        return node_id;
    }
};

} // namespace detail

// One CART regression tree over `sample_idx` (repeats allowed, as in a bootstrap).
inline DecisionTree fit_tree(const Matrix& x, std::span<const double> y, std::vector<std::size_t> sample_idx,
                             std::size_t max_features, std::size_t min_samples_split, std::size_t max_depth,
                             std::mt19937_64& rng) {
    detail::TreeBuilder builder{x, y, max_features, min_samples_split, max_depth, rng, {}, {}};
    builder.build(sample_idx, 0);
    return std::move(builder.tree);
}

inline Forest fit(const RfConfig& config, const Matrix& x, std::span<const double> y, std::uint64_t seed) {
    if (x.rows() != y.size()) throw DataError("LengthMismatch", "X and y sizes differ");
    if (x.rows() < config.min_samples_split || x.rows() == 0)
        throw DataError("TooFewSamples", fmt::format("{} samples, min_samples_split is {}", x.rows(), config.min_samples_split));
    config.validate(x.cols());
    Forest forest{config, x.cols(), seed, std::vector<DecisionTree>(config.n_estimators)};
    const std::size_t mf = config.resolved_max_features(x.cols());
    parallel_for(
        config.n_estimators,
        [&](std::size_t t) {
            std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
            std::vector<std::size_t> idx(x.rows());
            if (config.bootstrap) {
                std::uniform_int_distribution<std::size_t> draw(0, x.rows() - 1);
                for (auto& i : idx) i = draw(rng);
            } else {
                std::iota(idx.begin(), idx.end(), 0);
            }
            forest.trees[t] = fit_tree(x, y, std::move(idx), mf, config.min_samples_split, config.max_depth, rng);
        },
        config.threads);
    return forest;
}

inline double predict(const Forest& forest, std::span<const double> x) {
    if (x.size() != forest.n_features)
        throw DataError("DimensionMismatch", fmt::format("expected {} features, got {}", forest.n_features, x.size()));
    double sum = 0.0;
    for (auto& t : forest.trees) sum += t.predict(x);
    return sum / static_cast<double>(forest.trees.size());
}

struct FeatureImportance {
    std::vector<double> mean;   // sums to 1
    std::vector<double> stddev; // across trees
    std::size_t trees_used = 0;
};

// Mean decrease in impurity: per-tree normalised, averaged over trees that split.
inline FeatureImportance importance(const Forest& forest) {
    const std::size_t p = forest.n_features;
    std::vector<std::vector<double>> per_tree;
    for (auto& tree : forest.trees) {
        std::vector<double> v(p, 0.0);
        double total = 0.0;
        for (auto& node : tree.nodes)
            if (node.feature >= 0) {
                v[static_cast<std::size_t>(node.feature)] += node.impurity_decrease;
                total += node.impurity_decrease;
            }
        if (total > 0.0) {
            for (auto& e : v) e /= total;
            per_tree.push_back(std::move(v));
        }
    }
    if (per_tree.empty()) throw NumericalError("NoSplits", "every tree is a single leaf");
    FeatureImportance out{std::vector<double>(p, 0.0), std::vector<double>(p, 0.0), per_tree.size()};
    const auto n = static_cast<double>(per_tree.size());
    for (auto& v : per_tree)
        for (std::size_t f = 0; f < p; ++f) out.mean[f] += v[f];
    for (auto& m : out.mean) m /= n;
    for (auto& v : per_tree)
        for (std::size_t f = 0; f < p; ++f) out.stddev[f] += (v[f] - out.mean[f]) * (v[f] - out.mean[f]);
    for (auto& s : out.stddev) s = std::sqrt(s / n);
    return out;
}

inline nlohmann::json to_json(const RfConfig& c) {
    return {{"n_estimators", c.n_estimators}, {"min_samples_split", c.min_samples_split},
            {"max_features", c.max_features}, {"max_depth", c.max_depth},
            {"bootstrap", c.bootstrap}};
}

inline RfConfig config_from_json(const nlohmann::json& j) {
    RfConfig c;
    c.n_estimators = j.at("n_estimators").get<std::size_t>();
    c.min_samples_split = j.at("min_samples_split").get<std::size_t>();
    c.max_features = j.at("max_features").get<std::size_t>();
    c.max_depth = j.at("max_depth").get<std::size_t>();
    c.bootstrap = j.at("bootstrap").get<bool>();
    return c;
}

// Flat node arrays per tree.
inline nlohmann::json to_json(const Forest& f) {
    nlohmann::json trees = nlohmann::json::array();
    for (auto& t : f.trees) {
        std::vector<int> feature, left, right;
        std::vector<double> threshold, value, decrease;
        for (auto& n : t.nodes) {
            feature.push_back(n.feature);
            left.push_back(n.left);
            right.push_back(n.right);
            threshold.push_back(n.threshold);
            value.push_back(n.value);
            decrease.push_back(n.impurity_decrease);
        }
        trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left},
                         {"right", right}, {"value", value}, {"impurity_decrease", decrease}});
    }
    return {{"config", to_json(f.config)}, {"n_features", f.n_features}, {"seed", f.seed}, {"trees", std::move(trees)}};
}

inline Forest forest_from_json(const nlohmann::json& j) {
    Forest f;
    f.config = config_from_json(j.at("config"));
    f.n_features = j.at("n_features").get<std::size_t>();
    f.seed = j.at("seed").get<std::uint64_t>();
    for (auto& jt : j.at("trees")) {
        auto feature = jt.at("feature").get<std::vector<int>>();
        auto threshold = jt.at("threshold").get<std::vector<double>>();
        auto left = jt.at("left").get<std::vector<int>>();
        auto right = jt.at("right").get<std::vector<int>>();
        auto value = jt.at("value").get<std::vector<double>>();
        auto decrease = jt.at("impurity_decrease").get<std::vector<double>>();
        const std::size_t n = feature.size();
        if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || value.size() != n ||
            decrease.size() != n)
            throw DataError("BadArtifact", "inconsistent tree arrays");
        DecisionTree t;
        for (std::size_t i = 0; i < n; ++i) {
            if (feature[i] >= static_cast<int>(f.n_features) ||
                (feature[i] >= 0 && (left[i] < 0 || right[i] < 0 || left[i] >= static_cast<int>(n) ||
                                     right[i] >= static_cast<int>(n))))
                throw DataError("BadArtifact", "tree node out of range");
            t.nodes.push_back({feature[i], threshold[i], left[i], right[i], value[i], decrease[i]});
        }
        f.trees.push_back(std::move(t));
    }
    return f;
}

class RandomForestRegressor final : public Regressor {
public:
    explicit RandomForestRegressor(RfConfig config = {}) : config_(config) {}
    explicit RandomForestRegressor(Forest forest) : config_(forest.config), forest_(std::move(forest)) {}

    static RandomForestRegressor from_json(const nlohmann::json& j) {
        return RandomForestRegressor(forest_from_json(j.at("model")));
    }

    ModelFamily family() const override { return ModelFamily::rf; }
    using Regressor::predict;

    TrainReport fit(const Matrix& x, std::span<const double> y, std::uint64_t seed, const FitContext&) override {
        forest_ = rf::fit(config_, x, y, seed);
        TrainReport report;
        report.train_rmse = rmse(Regressor::predict(x), y);
        return report;
    }

    double predict(std::span<const double> x) const override { return rf::predict(forest_, x); }

    nlohmann::json to_json() const override { return {{"model", rf::to_json(forest_)}}; }

    std::unique_ptr<Regressor> clone() const override { return std::make_unique<RandomForestRegressor>(*this); }

    const Forest& forest() const { return forest_; }

private:
    RfConfig config_;
    Forest forest_;
};

} // namespace fundrank::rf
