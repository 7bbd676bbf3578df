#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fundrank/error.hpp"
#include "fundrank/evaluate.hpp"
#include "fundrank/ingest.hpp"
#include "fundrank/local_learning.hpp"
#include "fundrank/preprocess.hpp"
#include "fundrank/rng.hpp"
#include "fundrank/synthetic.hpp"

namespace fundrank {

enum class Phase { validation, test };

struct PipelineConfig {
    std::optional<std::uint64_t> seed;
    std::filesystem::path data_dir;
    std::filesystem::path benchmark;
    std::filesystem::path out = "fundrank_out";
    std::string split = "auto"; // "auto" (60/20/20) or "<train_end>,<validation_end>"
    std::size_t k = 20;
    std::size_t fs_k = 6;
    std::size_t agg = 0; // 0 = run both 2 and 3
    Side side = Side::buy;
    Phase phase = Phase::test;
    std::vector<std::string> agg_members{"FNN+FS", "ANFIS+FS", "RF"};
    ModelConfigs models;
    std::size_t min_train = 20;
    std::size_t block_threshold = 8;
    ZeroBasePolicy zero_base = ZeroBasePolicy::zero_with_warning;
    bool global = false;
    unsigned threads = default_thread_count();
    synth::SynthConfig synth;

    std::uint64_t require_seed() const {
        if (!seed) throw ConfigError("MissingSeed", "a seed is required (--seed or 'seed' in the config file)");
        return *seed;
    }
};

namespace detail {

template <class T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError("BadValue", fmt::format("'{}' is not a valid value for {}", text, key));
    return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError("BadValue", fmt::format("'{}' is not a boolean for {}", text, key));
}

inline std::vector<std::string_view> split_list(std::string_view text) {
    std::vector<std::string_view> out;
    if (trim(text).empty()) return out;
    for (auto part : split_csv_line(text)) out.push_back(part);
    return out;
}

template <class T>
std::string join(const std::vector<T>& v, std::string_view sep = ",") {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(sep) : std::string()) + fmt::format("{}", v[i]);
    return out;
}

} // namespace detail

inline void apply_setting(PipelineConfig& c, std::string_view key, std::string_view value) {
    using detail::parse_number;
    auto size = [&] { return parse_number<std::size_t>(key, value); };
    auto real = [&] { return parse_number<double>(key, value); };
    if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "data_dir") c.data_dir = std::string(value);
    else if (key == "benchmark") c.benchmark = std::string(value);
    else if (key == "out") c.out = std::string(value);
    else if (key == "split") c.split = std::string(value);
    else if (key == "k") c.k = size();
    else if (key == "fs_k") c.fs_k = size();
    else if (key == "agg") c.agg = size();
    else if (key == "side") c.side = parse_side(value);
    else if (key == "phase") {
        if (value == "test") c.phase = Phase::test;
        else if (value == "validation") c.phase = Phase::validation;
        else throw ConfigError("BadValue", fmt::format("phase must be test or validation, got '{}'", value));
    } else if (key == "agg_members") {
        c.agg_members.clear();
        for (auto m : detail::split_list(value)) c.agg_members.emplace_back(m);
    } else if (key == "min_train") c.min_train = size();
    else if (key == "block_threshold") c.block_threshold = size();
    else if (key == "zero_base") {
        if (value == "zero") c.zero_base = ZeroBasePolicy::zero_with_warning;
        else if (value == "error") c.zero_base = ZeroBasePolicy::error;
        else throw ConfigError("BadValue", "zero_base must be zero or error");
    } else if (key == "global") c.global = detail::parse_bool(key, value);
    else if (key == "threads") c.threads = parse_number<unsigned>(key, value);
    else if (key == "fnn.hidden") {
        c.models.fnn.hidden.clear();
        for (auto h : detail::split_list(value)) c.models.fnn.hidden.push_back(parse_number<std::size_t>(key, h));
    } else if (key == "fnn.activation") c.models.fnn.activation = fnn::parse_activation(value);
    else if (key == "fnn.learning_rate") c.models.fnn.learning_rate = real();
    else if (key == "fnn.epochs") c.models.fnn.epochs = size();
    else if (key == "fnn.patience") c.models.fnn.patience = size();
    else if (key == "rf.n_estimators") c.models.rf.n_estimators = size();
    else if (key == "rf.min_samples_split") c.models.rf.min_samples_split = size();
    else if (key == "rf.max_features") c.models.rf.max_features = size();
    else if (key == "rf.max_depth") c.models.rf.max_depth = size();
    else if (key == "rf.bootstrap") c.models.rf.bootstrap = detail::parse_bool(key, value);
    else if (key == "anfis.mfs_per_input") c.models.anfis.mfs_per_input = size();
    else if (key == "anfis.rule_cap") c.models.anfis.rule_cap = size();
    else if (key == "anfis.learning_rate") c.models.anfis.learning_rate = real();
    else if (key == "anfis.epochs") c.models.anfis.epochs = size();
    else if (key == "synth.n_stocks") c.synth.n_stocks = size();
    else if (key == "synth.n_quarters") c.synth.n_quarters = size();
    else if (key == "synth.start") c.synth.start = parse_quarter(value);
    else if (key == "synth.noise_std") c.synth.noise_std = real();
    else if (key == "synth.benchmark_drift") c.synth.benchmark_drift = real();
    else if (key == "synth.benchmark_vol") c.synth.benchmark_vol = real();
    else if (key == "synth.missing_fraction") c.synth.missing_fraction = real();
    else if (key == "synth.signal") {
        // "13:3,20:2,5:2" -> feature:coefficient pairs
        c.synth.signal.clear();
        for (auto term : detail::split_list(value)) {
            auto colon = term.find(':');
            if (colon == std::string_view::npos) throw ConfigError("BadValue", fmt::format("bad signal term '{}'", term));
            c.synth.signal.push_back({parse_number<std::size_t>(key, detail::trim(term.substr(0, colon))),
                                      parse_number<double>(key, detail::trim(term.substr(colon + 1)))});
        }
    } else {
        throw ConfigError("UnknownKey", fmt::format("unknown config key '{}'", key));
    }
}

// Flat "key = value" lines; '#' starts a comment.
inline void load_config_file(PipelineConfig& c, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("FileNotFound", path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view(line);
        if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        view = detail::trim(view);
        if (view.empty()) continue;
        auto eq = view.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("BadConfigLine", fmt::format("{}:{} expects key = value", path.string(), lineno));
        apply_setting(c, detail::trim(view.substr(0, eq)), detail::trim(view.substr(eq + 1)));
    }
}

// Every setting that affects results, one "key=value" per line in key order.
// Paths and thread count are excluded.
inline std::string canonical_config(const PipelineConfig& c) {
    std::map<std::string, std::string> kv;
    kv["seed"] = c.seed ? std::to_string(*c.seed) : "unset";
    kv["split"] = c.split;
    kv["k"] = std::to_string(c.k);
    kv["fs_k"] = std::to_string(c.fs_k);
    kv["phase"] = c.phase == Phase::test ? "test" : "validation";
    kv["agg_members"] = detail::join(c.agg_members);
    kv["min_train"] = std::to_string(c.min_train);
    kv["block_threshold"] = std::to_string(c.block_threshold);
    kv["zero_base"] = c.zero_base == ZeroBasePolicy::error ? "error" : "zero";
    kv["global"] = c.global ? "true" : "false";
    kv["fnn.hidden"] = detail::join(c.models.fnn.hidden);
    kv["fnn.activation"] = std::string(fnn::to_string(c.models.fnn.activation));
    kv["fnn.learning_rate"] = fmt::format("{}", c.models.fnn.learning_rate);
    kv["fnn.epochs"] = std::to_string(c.models.fnn.epochs);
    kv["fnn.patience"] = std::to_string(c.models.fnn.patience);
    kv["rf.n_estimators"] = std::to_string(c.models.rf.n_estimators);
    kv["rf.min_samples_split"] = std::to_string(c.models.rf.min_samples_split);
    kv["rf.max_features"] = std::to_string(c.models.rf.max_features);
    kv["rf.max_depth"] = std::to_string(c.models.rf.max_depth);
    kv["rf.bootstrap"] = c.models.rf.bootstrap ? "true" : "false";
    kv["anfis.mfs_per_input"] = std::to_string(c.models.anfis.mfs_per_input);
    kv["anfis.rule_cap"] = std::to_string(c.models.anfis.rule_cap);
    kv["anfis.learning_rate"] = fmt::format("{}", c.models.anfis.learning_rate);
    kv["anfis.epochs"] = std::to_string(c.models.anfis.epochs);
    std::string out;
    for (auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

inline std::string config_hash(const PipelineConfig& c) { return fmt::format("{:016x}", stable_hash(canonical_config(c))); }

} // namespace fundrank
