#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fundrank/error.hpp"
#include "fundrank/ingest.hpp"
#include "fundrank/matrix.hpp"
#include "fundrank/quarter.hpp"
#include "fundrank/rng.hpp"

namespace fundrank::synth {

inline constexpr std::size_t kFeatureCount = kFundamentalColumns.size() + 1;
inline constexpr std::size_t kRelativeReturnIndex = kFundamentalColumns.size();

struct SignalTerm {
    std::size_t feature = 0; // 0..19 fundamentals, 20 = prior relative return
    double coefficient = 0.0; // pct points per standard deviation of the feature
};

// Planted relation: return over t+1 = sum(coefficient * standardized feature at t) + noise.
struct SynthConfig {
    std::size_t n_stocks = 70;
    std::size_t n_quarters = 88;
    std::uint64_t seed = 7;
    Quarter start{1996, 1};
    std::vector<SignalTerm> signal{{13, 3.0}, {kRelativeReturnIndex, 2.0}, {5, 2.0}};
    double noise_std = 2.0;
    double benchmark_drift = 1.5; // pct per quarter
    double benchmark_vol = 6.0;
    double missing_fraction = 0.0; // of fundamental cells, isolated gaps only

    void validate() const {
        if (n_quarters < 12) throw ConfigError("InvalidConfig", "n_quarters must be >= 12");
        if (n_stocks < 1) throw ConfigError("InvalidConfig", "n_stocks must be >= 1");
        if (!(noise_std >= 0)) throw ConfigError("InvalidConfig", "noise_std must be >= 0");
        if (!(benchmark_vol >= 0)) throw ConfigError("InvalidConfig", "benchmark_vol must be >= 0");
        if (!(missing_fraction >= 0 && missing_fraction < 0.3))
            throw ConfigError("InvalidConfig", "missing_fraction must be in [0, 0.3)");
        for (auto& t : signal)
            if (t.feature >= kFeatureCount) throw ConfigError("InvalidConfig", "signal feature index out of range");
    }

    // Stationary std of the relative return; also the scale that standardizes feature 20.
    double relative_return_scale() const {
        double v = noise_std * noise_std;
        for (auto& t : signal) v += t.coefficient * t.coefficient;
        return v > 0 ? std::sqrt(v) : 1.0;
    }
};

// Quarterly percent-change volatility of fundamental j.
inline double feature_volatility(std::size_t j) { return 4.0 + static_cast<double>(j % 4); }

inline std::string feature_name(std::size_t j) {
    return j < kFundamentalColumns.size() ? std::string(kFundamentalColumns[j]) : std::string(kRelativeReturnFeature);
}

struct GeneratedUniverse {
    std::vector<StockSeries> series;
    BenchmarkSeries benchmark;
    nlohmann::json manifest;
    // Ground truth per ticker: row t-1 = percent changes into quarter t (20 columns),
    // and the relative return over quarter t (index t-1).
    std::map<std::string, Matrix> planted_changes;
    std::map<std::string, std::vector<double>> planted_relative;
};

inline std::string ticker_name(std::size_t i) { return fmt::format("S{:03d}", i); }

inline GeneratedUniverse generate(const SynthConfig& config) {
    config.validate();
    const std::size_t T = config.n_quarters, F = kFundamentalColumns.size();
    const double scale = config.relative_return_scale();
    GeneratedUniverse out;

    std::mt19937_64 bench_rng(derive_seed(config.seed, std::string_view("benchmark")));
    std::normal_distribution<double> bench_shock(config.benchmark_drift, config.benchmark_vol);
    std::vector<double> bench_ret(T, 0.0);
    Quarter q = config.start;
    double level = 10000.0;
    for (std::size_t t = 0; t < T; ++t, q = q.next()) {
        if (t > 0) {
            bench_ret[t] = std::max(-50.0, bench_shock(bench_rng));
            level *= 1.0 + bench_ret[t] / 100.0;
        }
        out.benchmark.quarters.push_back(q);
        out.benchmark.levels.push_back(level);
    }

    std::vector<double> coef(kFeatureCount, 0.0);
    for (auto& t : config.signal) coef[t.feature] += t.coefficient;

    for (std::size_t i = 0; i < config.n_stocks; ++i) {
        const std::string ticker = ticker_name(i);
        std::mt19937_64 rng(derive_seed(config.seed, std::string_view(ticker)));
        std::normal_distribution<double> unit(0.0, 1.0);
        std::uniform_real_distribution<double> base(0.5, 1.5);

        Matrix changes(T - 1, F);
        std::vector<double> rel(T - 1, 0.0); // rel[t-1] = relative return over quarter t
        for (std::size_t t = 1; t < T; ++t)
            for (std::size_t j = 0; j < F; ++j)
                changes(t - 1, j) = std::clamp(feature_volatility(j) * unit(rng), -60.0, 60.0);
        rel[0] = scale * unit(rng);
        for (std::size_t t = 1; t + 1 < T; ++t) {
            double r = config.noise_std * unit(rng);
            for (std::size_t j = 0; j < F; ++j) r += coef[j] * changes(t - 1, j) / feature_volatility(j);
            r += coef[kRelativeReturnIndex] * rel[t - 1] / scale;
            rel[t] = r;
        }

        StockSeries s{ticker, {kFundamentalColumns.begin(), kFundamentalColumns.end()}, {}};
        std::vector<double> levels(F);
        for (std::size_t j = 0; j < F; ++j) levels[j] = 100.0 * static_cast<double>(j + 1) * base(rng);
        double price = 50.0 * base(rng);
        q = config.start;
        for (std::size_t t = 0; t < T; ++t, q = q.next()) {
            if (t > 0) {
                for (std::size_t j = 0; j < F; ++j) levels[j] *= 1.0 + changes(t - 1, j) / 100.0;
                double factor = 1.0 + (bench_ret[t] + rel[t - 1]) / 100.0;
                price *= std::max(0.05, factor);
            }
            RawRecord rec{q, price, {}};
            for (auto v : levels) rec.values.emplace_back(v);
            s.records.push_back(std::move(rec));
        }
        out.planted_changes.emplace(ticker, std::move(changes));
        out.planted_relative.emplace(ticker, std::move(rel));
        out.series.push_back(std::move(s));
    }

    std::size_t injected = 0;
    if (config.missing_fraction > 0) {
        const std::size_t total = config.n_stocks * T * F;
        const auto want = static_cast<std::size_t>(std::llround(config.missing_fraction * static_cast<double>(total)));
        std::vector<std::size_t> cells(total);
        for (std::size_t c = 0; c < total; ++c) cells[c] = c;
        std::mt19937_64 rng(derive_seed(config.seed, std::string_view("missing")));
        std::shuffle(cells.begin(), cells.end(), rng);
        for (std::size_t c : cells) {
            if (injected == want) break;
            std::size_t stock = c / (T * F), t = (c / F) % T, j = c % F;
            auto& recs = out.series[stock].records;
            bool lonely = (t == 0 || recs[t - 1].values[j]) && (t + 1 == T || recs[t + 1].values[j]);
            if (!lonely) continue;
            recs[t].values[j].reset();
            ++injected;
        }
        if (injected != want)
            throw ConfigError("InvalidConfig", fmt::format("could only place {} of {} isolated gaps", injected, want));
    }

    nlohmann::json signal = nlohmann::json::array();
    std::vector<std::pair<double, std::size_t>> by_strength;
    for (auto& t : config.signal) {
        signal.push_back({{"feature", t.feature}, {"name", feature_name(t.feature)}, {"coefficient", t.coefficient}});
        if (t.coefficient != 0) by_strength.emplace_back(-std::abs(t.coefficient), t.feature);
    }
    std::sort(by_strength.begin(), by_strength.end());
    std::vector<std::size_t> expected;
    for (auto& [s, f] : by_strength) expected.push_back(f);
    std::vector<double> vols;
    for (std::size_t j = 0; j < F; ++j) vols.push_back(feature_volatility(j));

    out.manifest = {{"format", "fundrank.synth_manifest"},
                    {"version", 1},
                    {"seed", config.seed},
                    {"n_stocks", config.n_stocks},
                    {"n_quarters", config.n_quarters},
                    {"start", config.start.to_string()},
                    {"signal", std::move(signal)},
                    {"noise_std", config.noise_std},
                    {"relative_return_scale", scale},
                    {"benchmark_drift", config.benchmark_drift},
                    {"benchmark_vol", config.benchmark_vol},
                    {"feature_volatility", vols},
                    {"missing_fraction", config.missing_fraction},
                    {"missing_cells", injected},
                    {"expected_top_features", expected}};
    return out;
}

// Writes <dir>/data/<ticker>.csv, <dir>/benchmark.csv and <dir>/manifest.json.
inline void write(const GeneratedUniverse& g, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "data");
    for (auto& s : g.series) write_stock_file(dir / "data" / (s.ticker + ".csv"), s);
    write_benchmark_file(dir / "benchmark.csv", g.benchmark);
    std::ofstream(dir / "manifest.json", std::ios::binary) << g.manifest.dump(2) << '\n';
}

} // namespace fundrank::synth
