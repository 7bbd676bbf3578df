#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fundrank/anfis.hpp"
#include "fundrank/error.hpp"
#include "fundrank/fnn.hpp"
#include "fundrank/model.hpp"
#include "fundrank/parallel.hpp"
#include "fundrank/prediction_table.hpp"
#include "fundrank/preprocess.hpp"
#include "fundrank/rf.hpp"
#include "fundrank/rng.hpp"

namespace fundrank {

struct ModelConfigs {
    fnn::FnnConfig fnn;
    rf::RfConfig rf;
    anfis::AnfisConfig anfis;
};

inline nlohmann::json config_json(ModelFamily family, const ModelConfigs& c) {
    switch (family) {
    case ModelFamily::fnn: return fnn::to_json(c.fnn);
    case ModelFamily::rf: return rf::to_json(c.rf);
    case ModelFamily::anfis: return anfis::to_json(c.anfis);
    }
    return {};
}

// `anfis_priority` orders candidate ANFIS inputs (most important first).
inline std::unique_ptr<Regressor> make_regressor(ModelFamily family, const ModelConfigs& configs,
                                                 const std::vector<std::size_t>& anfis_priority = {}) {
    switch (family) {
    case ModelFamily::fnn: return std::make_unique<fnn::FnnRegressor>(configs.fnn);
    case ModelFamily::rf: return std::make_unique<rf::RandomForestRegressor>(configs.rf);
    case ModelFamily::anfis: return std::make_unique<anfis::AnfisRegressor>(configs.anfis, anfis_priority);
    }
    throw ConfigError("UnknownModel", "unhandled model family");
}

inline std::unique_ptr<Regressor> regressor_from_json(ModelFamily family, const nlohmann::json& j) {
    switch (family) {
    case ModelFamily::fnn: return std::make_unique<fnn::FnnRegressor>(fnn::FnnRegressor::from_json(j));
    case ModelFamily::rf: return std::make_unique<rf::RandomForestRegressor>(rf::RandomForestRegressor::from_json(j));
    case ModelFamily::anfis: return std::make_unique<anfis::AnfisRegressor>(anfis::AnfisRegressor::from_json(j));
    }
    throw ConfigError("UnknownModel", "unhandled model family");
}

struct LocalTrainOptions {
    std::size_t min_train_samples = 20;
    unsigned threads = default_thread_count();
    bool global = false; // one model shared by every ticker
    std::vector<std::size_t> anfis_priority;
    bool use_validation = true; // offer the ticker's validation rows to the fit (early stopping)
};

struct TrainedModel {
    std::uint64_t seed = 0;
    std::shared_ptr<const Regressor> model;
    TrainReport report;
};

struct LocalModels {
    ModelFamily family = ModelFamily::fnn;
    std::uint64_t global_seed = 0;
    bool global = false;
    nlohmann::json config;
    std::map<std::string, TrainedModel> by_ticker;
};

inline std::uint64_t ticker_seed(std::uint64_t seed, std::string_view ticker) { return derive_seed(seed, ticker); }

// One model per ticker on that ticker's train partition. Each job only reads the
// set, so jobs run concurrently and results are keyed by ticker.
inline LocalModels train_local_models(ModelFamily family, const SampleSet& set, const ModelConfigs& configs,
                                      std::uint64_t seed, const LocalTrainOptions& opts = {}) {
    LocalModels out{family, seed, opts.global, config_json(family, configs), {}};
    const auto tickers = set.tickers();

    // rows in (target quarter, ticker) order, so a model never depends on how the set is stored
    auto canonical = [&](std::vector<std::size_t> idx) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            auto& sa = set.samples[a];
            auto& sb = set.samples[b];
            return std::tie(sa.target_quarter, sa.ticker) < std::tie(sb.target_quarter, sb.ticker);
        });
        return idx;
    };

    auto fit_one = [&](std::vector<std::size_t> train_idx, std::vector<std::size_t> val_idx, std::uint64_t job_seed,
                       std::string_view who) {
        train_idx = canonical(std::move(train_idx));
        val_idx = canonical(std::move(val_idx));
        if (train_idx.size() < opts.min_train_samples)
            throw DataError("TooFewSamples", fmt::format("{} has {} train samples, needs {}", who, train_idx.size(),
                                                         opts.min_train_samples));
        Matrix x = set.design(train_idx);
        auto y = set.targets(train_idx);
        Matrix vx;
        std::vector<double> vy;
        FitContext ctx;
        if (opts.use_validation && !val_idx.empty()) {
            vx = set.design(val_idx);
            vy = set.targets(val_idx);
            ctx.validation_x = &vx;
            ctx.validation_y = vy;
        }
        auto model = make_regressor(family, configs, opts.anfis_priority);
        TrainedModel trained;
        trained.seed = job_seed;
        trained.report = model->fit(x, y, job_seed, ctx);
        trained.model = std::move(model);
        return trained;
    };

    if (opts.global) {
        auto seed_g = derive_seed(seed, std::string_view("__global__"));
        auto trained = fit_one(set.indices(Partition::train), set.indices(Partition::validation), seed_g, "global model");
        for (auto& t : tickers) out.by_ticker.emplace(t, trained);
        return out;
    }

    std::vector<TrainedModel> results(tickers.size());
    parallel_for(
        tickers.size(),
        [&](std::size_t i) {
            results[i] = fit_one(set.indices(Partition::train, tickers[i]), set.indices(Partition::validation, tickers[i]),
                                 ticker_seed(seed, tickers[i]), tickers[i]);
        },
        opts.threads);
    for (std::size_t i = 0; i < tickers.size(); ++i) out.by_ticker.emplace(tickers[i], std::move(results[i]));
    return out;
}

inline PredictionTable predict_all(const LocalModels& models, const SampleSet& set, Partition partition) {
    PredictionTable table;
    for (auto i : set.indices(partition)) {
        const auto& s = set.samples[i];
        auto it = models.by_ticker.find(s.ticker);
        if (it == models.by_ticker.end()) throw DataError("MissingModel", s.ticker);
        auto [pos, inserted] = table[s.target_quarter].emplace(s.ticker, it->second.model->predict(s.features));
        if (!inserted) throw DataError("DuplicateSample", fmt::format("{} {}", s.ticker, s.target_quarter.to_string()));
    }
    return table;
}

inline ActualTable actual_returns(const SampleSet& set, Partition partition) {
    ActualTable table;
    for (auto i : set.indices(partition)) {
        const auto& s = set.samples[i];
        table[s.target_quarter][s.ticker] = s.target;
    }
    return table;
}

inline nlohmann::json to_json(const LocalModels& m) {
    nlohmann::json models = nlohmann::json::array();
    for (auto& [ticker, tm] : m.by_ticker)
        models.push_back({{"ticker", ticker}, {"seed", tm.seed}, {"report", to_json(tm.report)}, {"model", tm.model->to_json()}});
    return {{"format", "fundrank.models"}, {"version", 1},          {"family", to_string(m.family)},
            {"seed", m.global_seed},       {"global", m.global},   {"config", m.config},
            {"models", std::move(models)}};
}

inline LocalModels local_models_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "fundrank.models" || j.value("version", 0) != 1)
        throw DataError("BadArtifact", "not a version-1 model bundle");
    LocalModels m;
    m.family = parse_family(j.at("family").get<std::string>());
    m.global_seed = j.at("seed").get<std::uint64_t>();
    m.global = j.value("global", false);
    m.config = j.at("config");
    for (auto& jm : j.at("models")) {
        TrainedModel tm;
        tm.seed = jm.at("seed").get<std::uint64_t>();
        tm.report.train_rmse = jm.at("report").at("train_rmse").get<double>();
        tm.report.epochs_run = jm.at("report").at("epochs_run").get<std::size_t>();
        tm.report.notes = jm.at("report").at("notes").get<std::vector<std::string>>();
        tm.model = regressor_from_json(m.family, jm.at("model"));
        m.by_ticker.emplace(jm.at("ticker").get<std::string>(), std::move(tm));
    }
    return m;
}

} // namespace fundrank
