#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fundrank/aggregate.hpp"
#include "fundrank/config.hpp"
#include "fundrank/error.hpp"
#include "fundrank/evaluate.hpp"
#include "fundrank/feature_select.hpp"
#include "fundrank/ingest.hpp"
#include "fundrank/local_learning.hpp"
#include "fundrank/preprocess.hpp"
#include "fundrank/synthetic.hpp"

namespace fundrank::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- strategies ----

struct Strategy {
    ModelFamily family = ModelFamily::fnn;
    bool fs = false;

    std::string label() const {
        std::string base = family == ModelFamily::fnn ? "FNN" : family == ModelFamily::rf ? "RF" : "ANFIS";
        return fs ? base + "+FS" : base;
    }
    // File-name form: FNN, FNN_FS, ...
    std::string tag() const {
        auto l = label();
        if (auto p = l.find('+'); p != std::string::npos) l.replace(p, 1, "_");
        return l;
    }
    bool operator==(const Strategy&) const = default;
};

inline Strategy parse_strategy(std::string_view label) {
    bool fs = false;
    std::string base(label);
    for (std::string_view suffix : {"+FS", "_FS"})
        if (base.size() > suffix.size() && base.ends_with(suffix)) {
            fs = true;
            base.resize(base.size() - suffix.size());
        }
    for (auto& ch : base) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return {parse_family(base), fs};
}

inline const std::vector<Strategy>& all_strategies() {
    static const std::vector<Strategy> s{{ModelFamily::fnn, false}, {ModelFamily::anfis, false}, {ModelFamily::rf, false},
                                         {ModelFamily::fnn, true},  {ModelFamily::anfis, true},  {ModelFamily::rf, true}};
    return s;
}

// ---- logging and stage wrapping ----

inline std::ostream*& log_stream() {
    static std::ostream* s = &std::cerr;
    return s;
}

inline void log(std::string_view stage, std::string_view message) {
    if (auto* s = log_stream()) *s << "[" << stage << "] " << message << '\n';
}

// Runs fn, re-raising any failure with the stage name in the message.
template <class F>
auto with_stage(std::string_view stage, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        std::string_view what = e.what();
        if (what.starts_with(e.code() + ": ")) what.remove_prefix(e.code().size() + 2);
        throw Error(e.kind(), e.code(), fmt::format("stage {}: {}", stage, what));
    } catch (const json::exception& e) {
        throw DataError("BadArtifact", fmt::format("stage {}: {}", stage, e.what()));
    } catch (const fs::filesystem_error& e) {
        throw DataError("IOError", fmt::format("stage {}: {}", stage, e.what()));
    }
}

// ---- artifact paths and I/O ----

struct Paths {
    fs::path out;

    fs::path universe() const { return out / "universe.json"; }
    fs::path samples() const { return out / "samples.json"; }
    fs::path ranking() const { return out / "feature_ranking.json"; }
    fs::path models(const Strategy& s) const { return out / ("models_" + s.tag() + ".json"); }
    fs::path predictions(const Strategy& s) const { return out / ("predictions_" + s.tag() + ".csv"); }
    fs::path backtest(const Strategy& s, Side side) const {
        return out / fmt::format("backtest_{}_{}.csv", s.tag(), to_string(side));
    }
    fs::path consensus(std::size_t m, Side side) const { return out / fmt::format("consensus_agg{}_{}.csv", m, to_string(side)); }
    fs::path run_config() const { return out / "run_config.txt"; }
};

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("IOError", fmt::format("cannot write {}", path.string()));
    out << text;
}

inline json read_json(const fs::path& path, std::string_view what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("MissingArtifact", fmt::format("{} not found at {} (run the earlier stage first)", what, path.string()));
    return json::parse(in);
}

inline std::string provenance_header(const PipelineConfig& c, std::string_view title) {
    return fmt::format("# {}\n# seed={} config_hash={}\n", title, c.seed ? std::to_string(*c.seed) : "unset", config_hash(c));
}

inline std::string fmt_num(double v) { return fmt::format("{:.6f}", v); }

inline void write_run_config(const PipelineConfig& c) {
    write_text(Paths{c.out}.run_config(), fmt::format("# config_hash={}\n{}", config_hash(c), canonical_config(c)));
}

// ---- universe artifact ----

inline json universe_to_json(const std::vector<StockSeries>& universe, const BenchmarkSeries& bench,
                             const std::vector<std::string>& dropped) {
    json series = json::array();
    for (auto& s : universe) {
        json records = json::array();
        for (auto& r : s.records) {
            std::vector<json> values;
            for (auto& v : r.values) values.push_back(v ? json(*v) : json(nullptr));
            records.push_back({{"quarter", r.quarter.to_string()}, {"price", r.price ? json(*r.price) : json(nullptr)},
                               {"values", values}});
        }
        series.push_back({{"ticker", s.ticker}, {"feature_names", s.feature_names}, {"records", std::move(records)}});
    }
    std::vector<std::string> qs;
    for (auto q : bench.quarters) qs.push_back(q.to_string());
    return {{"format", "fundrank.universe"},
            {"version", 1},
            {"dropped_features", dropped},
            {"benchmark", {{"quarters", qs}, {"levels", bench.levels}}},
            {"series", std::move(series)}};
}

struct Universe {
    std::vector<StockSeries> series;
    BenchmarkSeries benchmark;
    std::vector<std::string> dropped;
};

inline Universe universe_from_json(const json& j) {
    if (j.value("format", "") != "fundrank.universe" || j.value("version", 0) != 1)
        throw DataError("BadArtifact", "not a version-1 universe");
    Universe u;
    u.dropped = j.at("dropped_features").get<std::vector<std::string>>();
    for (auto& q : j.at("benchmark").at("quarters")) u.benchmark.quarters.push_back(parse_quarter(q.get<std::string>()));
    u.benchmark.levels = j.at("benchmark").at("levels").get<std::vector<double>>();
    for (auto& js : j.at("series")) {
        StockSeries s;
        s.ticker = js.at("ticker").get<std::string>();
        s.feature_names = js.at("feature_names").get<std::vector<std::string>>();
        for (auto& jr : js.at("records")) {
            RawRecord r;
            r.quarter = parse_quarter(jr.at("quarter").get<std::string>());
            if (!jr.at("price").is_null()) r.price = jr.at("price").get<double>();
            for (auto& v : jr.at("values")) r.values.push_back(v.is_null() ? Cell{} : Cell{v.get<double>()});
            s.records.push_back(std::move(r));
        }
        u.series.push_back(std::move(s));
    }
    return u;
}

// ---- prediction artifact ----

struct PredictionFile {
    PredictionTable predicted;
    ActualTable actual;
};

inline std::string predictions_csv(const PipelineConfig& c, const Strategy& s, const PredictionFile& p) {
    std::string out = provenance_header(c, fmt::format("{} predictions", s.label()));
    out += "quarter,ticker,predicted,actual\n";
    for (auto& [q, row] : p.predicted)
        for (auto& [ticker, v] : row)
            out += fmt::format("{},{},{:.17g},{:.17g}\n", q.to_string(), ticker, v, p.actual.at(q).at(ticker));
    return out;
}

inline PredictionFile read_predictions(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("MissingArtifact", fmt::format("predictions not found at {}", path.string()));
    PredictionFile p;
    std::string line;
    bool header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (detail::trim(line) != "quarter,ticker,predicted,actual")
                throw DataError("MalformedRow", fmt::format("{}: unexpected header", path.string()));
            header = true;
            continue;
        }
        auto cells = detail::split_csv_line(line);
        if (cells.size() != 4) throw DataError("MalformedRow", fmt::format("{}:{}", path.string(), lineno));
        Quarter q = parse_quarter(cells[0]);
        std::string ticker(cells[1]);
        auto pred = detail::parse_cell(cells[2]), act = detail::parse_cell(cells[3]);
        if (!pred || !act) throw DataError("MalformedRow", fmt::format("{}:{} missing value", path.string(), lineno));
        p.predicted[q][ticker] = *pred;
        p.actual[q][ticker] = *act;
    }
    if (!header) throw DataError("MalformedRow", fmt::format("{}: empty predictions file", path.string()));
    return p;
}

// ---- report tables ----

struct TableRow {
    std::string strategy;
    PortfolioReport report;
};

inline std::string table_csv(const PipelineConfig& c, std::string_view title, const std::vector<TableRow>& rows,
                             const std::vector<std::string>& notes = {}) {
    std::string out = provenance_header(c, title);
    for (auto& n : notes) out += "# note: " + n + "\n";
    out += "Strategy,Mean,STD,PortfolioScore,Compound\n";
    for (auto& r : rows)
        out += fmt::format("{},{},{},{},{}\n", r.strategy, fmt_num(r.report.mean), fmt_num(r.report.stddev),
                           r.report.score ? fmt_num(*r.report.score) : std::string("NA"), fmt_num(r.report.compound));
    return out;
}

inline std::string series_csv(const PipelineConfig& c, std::string_view title, const std::vector<Quarter>& quarters,
                              const std::vector<TableRow>& rows) {
    std::string out = provenance_header(c, title);
    out += "quarter";
    for (auto& r : rows) out += "," + r.strategy;
    out += "\n";
    for (std::size_t i = 0; i < quarters.size(); ++i) {
        out += quarters[i].to_string();
        for (auto& r : rows) out += "," + fmt_num(r.report.series.at(i));
        out += "\n";
    }
    return out;
}

// ---- stages ----

struct IngestSummary {
    std::size_t tickers = 0;
    std::size_t quarters = 0;
    std::vector<std::string> dropped;
};

inline IngestSummary run_ingest(const PipelineConfig& c) {
    if (c.data_dir.empty()) throw ConfigError("MissingPath", "data_dir is required");
    if (c.benchmark.empty()) throw ConfigError("MissingPath", "benchmark is required");
    auto bench = parse_benchmark_file(c.benchmark);
    auto raw = parse_stock_directory(c.data_dir);
    auto dropped = drop_sparse_features(raw, DropOptions{0.5, c.block_threshold});
    for (auto& s : dropped.universe) s = impute_missing(std::move(s));
    IngestSummary summary{dropped.universe.size(), dropped.universe.empty() ? 0 : dropped.universe.front().records.size(),
                          dropped.dropped};
    fs::create_directories(c.out);
    write_text(Paths{c.out}.universe(), universe_to_json(dropped.universe, bench, dropped.dropped).dump() + "\n");
    log("ingest", fmt::format("{} tickers, {} dropped features", summary.tickers, summary.dropped.size()));
    return summary;
}

inline SplitBoundaries resolve_boundaries(const PipelineConfig& c, const SampleSet& set) {
    if (c.split == "auto") return default_boundaries(set);
    auto parts = detail::split_csv_line(c.split);
    if (parts.size() != 2) throw ConfigError("BadBoundaries", fmt::format("split '{}' must be auto or A,B", c.split));
    return {parse_quarter(parts[0]), parse_quarter(parts[1])};
}

inline SampleSet run_preprocess(const PipelineConfig& c) {
    Paths p{c.out};
    auto u = universe_from_json(read_json(p.universe(), "universe"));
    auto assembled = assemble_samples(u.series, u.benchmark, AssembleOptions{c.zero_base});
    for (auto& w : assembled.warnings) log("preprocess", "warning: " + w);
    auto b = resolve_boundaries(c, assembled.set);
    auto set = standardize(split_chronological(std::move(assembled.set), b));
    write_text(p.samples(), to_json(set).dump() + "\n");
    log("preprocess", fmt::format("{} samples, train <= {}, validation <= {}", set.samples.size(), b.train_end.to_string(),
                                  b.validation_end.to_string()));
    return set;
}

inline SampleSet load_samples(const PipelineConfig& c) { return sample_set_from_json(read_json(Paths{c.out}.samples(), "samples")); }

inline std::uint64_t selection_seed(std::uint64_t seed) { return derive_seed(seed, std::string_view("feature_select")); }

// Ranks on the original (pre-merge) train partition only.
inline FeatureRanking run_select_features(const PipelineConfig& c) {
    auto seed = c.require_seed();
    auto set = load_samples(c);
    if (set.merged) throw DataError("BadArtifact", "feature selection expects the unmerged sample set");
    rf::RfConfig rc = c.models.rf;
    rc.threads = c.threads;
    auto ranking = rank_features(set, rc, selection_seed(seed));
    auto selected = ranking.top(c.fs_k);
    json j = {{"format", "fundrank.feature_ranking"}, {"version", 1},
              {"seed", seed},                         {"config_hash", config_hash(c)},
              {"samples_used", ranking.samples_used}, {"ranking", to_json(ranking.all)},
              {"fs_k", c.fs_k},                       {"selected", to_json(selected)}};
    write_text(Paths{c.out}.ranking(), j.dump(2) + "\n");
    log("select-features", fmt::format("top {}: {}", c.fs_k, detail::join(selected.names)));
    return ranking;
}

inline FeatureRanking load_ranking(const PipelineConfig& c) {
    auto j = read_json(Paths{c.out}.ranking(), "feature ranking");
    if (j.value("format", "") != "fundrank.feature_ranking") throw DataError("BadArtifact", "not a feature ranking");
    FeatureRanking r;
    r.all = feature_subset_from_json(j.at("ranking"));
    r.samples_used = j.at("samples_used").get<std::size_t>();
    return r;
}

inline FeatureRanking load_or_rank(const PipelineConfig& c) {
    if (fs::exists(Paths{c.out}.ranking())) return load_ranking(c);
    return run_select_features(c);
}

inline Partition evaluation_partition(const PipelineConfig& c) {
    return c.phase == Phase::test ? Partition::test : Partition::validation;
}

// The set a strategy trains and predicts on: merged train+validation for the
// test phase, restricted to the selected features for +FS strategies.
inline SampleSet evaluation_set(const PipelineConfig& c, const Strategy& s) {
    auto set = load_samples(c);
    if (c.phase == Phase::test) set = merge_train_validation(std::move(set));
    if (s.fs) set = project(std::move(set), load_or_rank(c).top(c.fs_k));
    return set;
}

inline std::vector<std::size_t> anfis_priority(const PipelineConfig& c, const Strategy& s, const SampleSet& set) {
    if (s.family != ModelFamily::anfis) return {};
    std::vector<std::size_t> order(set.feature_count());
    if (s.fs) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i; // projected columns are importance-ordered
        return order;
    }
    return load_or_rank(c).all.indices;
}

inline LocalModels run_train(const PipelineConfig& c, const Strategy& s) {
    auto seed = c.require_seed();
    auto set = evaluation_set(c, s);
    LocalTrainOptions opts;
    opts.min_train_samples = c.min_train;
    opts.threads = c.threads;
    opts.global = c.global;
    opts.anfis_priority = anfis_priority(c, s, set);
    ModelConfigs configs = c.models;
    configs.rf.threads = 1; // parallelism is across tickers
    auto models = train_local_models(s.family, set, configs, seed, opts);
    write_text(Paths{c.out}.models(s), to_json(models).dump() + "\n");
    log("train", fmt::format("{}: {} models on {} features", s.label(), models.by_ticker.size(), set.feature_count()));
    return models;
}

inline LocalModels load_models(const PipelineConfig& c, const Strategy& s) {
    return local_models_from_json(read_json(Paths{c.out}.models(s), "model bundle"));
}

inline PredictionFile run_predict(const PipelineConfig& c, const Strategy& s) {
    auto set = evaluation_set(c, s);
    auto models = load_models(c, s);
    auto part = evaluation_partition(c);
    PredictionFile p{predict_all(models, set, part), actual_returns(set, part)};
    if (p.predicted.empty()) throw DataError("EmptyPartition", fmt::format("no {} samples to predict", to_string(part)));
    write_text(Paths{c.out}.predictions(s), predictions_csv(c, s, p));
    log("predict", fmt::format("{}: {} predictions over {} quarters", s.label(), entry_count(p.predicted), p.predicted.size()));
    return p;
}

struct BacktestOutput {
    BacktestResult strategy;
    PortfolioReport universe;
};

inline BacktestOutput backtest_predictions(const PipelineConfig& c, const PredictionFile& p, Side side) {
    return {backtest(p.predicted, p.actual, c.k, side), universe_report(p.actual)};
}

inline BacktestOutput run_backtest(const PipelineConfig& c, const Strategy& s, Side side) {
    auto p = read_predictions(Paths{c.out}.predictions(s));
    auto out = backtest_predictions(c, p, side);
    auto title = fmt::format("{} {}{} portfolio", s.label(), side == Side::buy ? "Top" : "Bottom", c.k);
    write_text(Paths{c.out}.backtest(s, side),
               table_csv(c, title, {{s.label(), out.strategy.report}, {"Universe", out.universe}}));
    log("backtest", fmt::format("{} {}: mean {:.4f}, universe {:.4f}", s.label(), to_string(side), out.strategy.report.mean,
                                out.universe.mean));
    return out;
}

inline ConsensusBacktest consensus_from(const PipelineConfig& c, const std::vector<PredictionFile>& members,
                                        std::size_t threshold, Side side) {
    std::vector<RankTable> tables;
    for (auto& m : members) tables.push_back(rank_all(m.predicted));
    auto portfolios = aggregate(tables, VoteConfig{c.agg_members, threshold, c.k, side});
    return backtest_consensus(portfolios, members.front().actual);
}

inline std::string consensus_csv(const PipelineConfig& c, std::size_t threshold, Side side, const ConsensusBacktest& b) {
    std::string out = provenance_header(
        c, fmt::format("Agg{} {} consensus of {} (k = {})", threshold, to_string(side), detail::join(c.agg_members, " "), c.k));
    out += "quarter,side,count,return,tickers\n";
    for (std::size_t i = 0; i < b.portfolios.size(); ++i) {
        auto& p = b.portfolios[i].portfolio;
        out += fmt::format("{},{},{},{},{}\n", p.quarter.to_string(), to_string(side), p.tickers.size(), fmt_num(b.report.series[i]),
                           detail::join(p.tickers, ";"));
    }
    return out;
}

inline std::vector<PredictionFile> load_members(const PipelineConfig& c) {
    std::vector<PredictionFile> members;
    for (auto& label : c.agg_members) members.push_back(read_predictions(Paths{c.out}.predictions(parse_strategy(label))));
    return members;
}

inline ConsensusBacktest run_aggregate(const PipelineConfig& c, std::size_t threshold, Side side) {
    auto members = load_members(c);
    auto b = consensus_from(c, members, threshold, side);
    write_text(Paths{c.out}.consensus(threshold, side), consensus_csv(c, threshold, side, b));
    log("aggregate", fmt::format("Agg{} {}: mean {:.4f}, {} empty quarters", threshold, to_string(side), b.report.mean,
                                 b.empty_quarters.size()));
    return b;
}

// Notes on how models deviated from their nominal configuration, e.g. ANFIS
// input trimming. Collected from the saved bundles.
inline std::vector<std::string> model_notes(const PipelineConfig& c, const Strategy& s) {
    auto j = read_json(Paths{c.out}.models(s), "model bundle");
    std::set<std::string> notes;
    for (auto& m : j.at("models"))
        for (auto& n : m.at("report").at("notes")) notes.insert(n.get<std::string>());
    std::vector<std::string> out;
    for (auto& n : notes) out.push_back(s.label() + ": " + n);
    return out;
}

inline json run_report(const PipelineConfig& c) {
    auto seed = c.require_seed();
    Paths paths{c.out};
    std::map<std::string, PredictionFile> preds;
    for (auto& s : all_strategies()) preds.emplace(s.label(), read_predictions(paths.predictions(s)));
    const auto& actual = preds.begin()->second.actual;
    const auto universe = universe_report(actual);
    std::vector<Quarter> quarters;
    for (auto& [q, row] : actual) quarters.push_back(q);

    std::vector<std::string> notes;
    for (auto& s : all_strategies())
        for (auto& n : model_notes(c, s)) notes.push_back(n);

    json tables = json::object();
    json consensus_json = json::object();
    for (Side side : {Side::buy, Side::sell}) {
        std::string side_name(to_string(side));
        std::string portfolio = fmt::format("{}{}", side == Side::buy ? "Top" : "Bottom", c.k);
        std::vector<TableRow> baseline, selected, combined, everything;
        for (auto& s : all_strategies()) {
            auto r = backtest_predictions(c, preds.at(s.label()), side).strategy.report;
            (s.fs ? selected : baseline).push_back({s.label(), r});
            everything.push_back({s.label(), r});
        }
        for (auto& label : c.agg_members) {
            auto want = parse_strategy(label).label();
            for (auto& r : everything)
                if (r.strategy == want) combined.push_back(r);
        }
        std::vector<PredictionFile> members;
        for (auto& label : c.agg_members) members.push_back(preds.at(parse_strategy(label).label()));
        for (std::size_t m : {std::size_t{2}, std::size_t{3}}) {
            if (m > members.size()) continue;
            auto b = consensus_from(c, members, m, side);
            write_text(paths.consensus(m, side), consensus_csv(c, m, side, b));
            std::vector<std::string> empty;
            for (auto q : b.empty_quarters) empty.push_back(q.to_string());
            consensus_json[fmt::format("Agg{}_{}", m, side_name)] = {{"empty_quarters", empty},
                                                                     {"report", to_json(b.report)}};
            combined.push_back({fmt::format("Agg{}", m), b.report});
            everything.push_back({fmt::format("Agg{}", m), b.report});
        }
        for (auto* rows : {&baseline, &selected, &combined, &everything}) rows->push_back({"Universe", universe});

        for (auto& s : all_strategies())
            write_text(paths.backtest(s, side),
                       table_csv(c, fmt::format("{} {} portfolio", s.label(), portfolio),
                                 {{s.label(), backtest_predictions(c, preds.at(s.label()), side).strategy.report},
                                  {"Universe", universe}}));
        write_text(c.out / fmt::format("table_baseline_{}.csv", side_name),
                   table_csv(c, fmt::format("{} portfolios, all features", portfolio), baseline, notes));
        write_text(c.out / fmt::format("table_fs_{}.csv", side_name),
                   table_csv(c, fmt::format("{} portfolios, top {} features", portfolio, c.fs_k), selected, notes));
        write_text(c.out / fmt::format("table_agg_{}.csv", side_name),
                   table_csv(c, fmt::format("{} portfolios, majority vote of {}", portfolio, detail::join(c.agg_members, " ")),
                             combined, notes));
        write_text(c.out / fmt::format("quarterly_{}.csv", side_name),
                   series_csv(c, fmt::format("{} quarterly relative returns", portfolio), quarters, everything));

        json side_json = json::object();
        for (auto& r : everything) side_json[r.strategy] = to_json(r.report);
        tables[side_name] = std::move(side_json);
    }

    json importance = json::object();
    if (fs::exists(paths.ranking())) {
        auto ranking = load_ranking(c);
        std::string csv = provenance_header(c, "pooled random forest feature importance");
        csv += "rank,feature,importance,std\n";
        for (std::size_t i = 0; i < ranking.all.k(); ++i)
            csv += fmt::format("{},{},{},{}\n", i + 1, ranking.all.names[i], fmt_num(ranking.all.importances[i]),
                               fmt_num(ranking.all.importance_std[i]));
        write_text(c.out / "table_feature_importance.csv", csv);
        importance = to_json(ranking.top(c.fs_k));
    }

    std::vector<std::string> qs;
    for (auto q : quarters) qs.push_back(q.to_string());
    json report = {{"format", "fundrank.report"},
                   {"version", 1},
                   {"seed", seed},
                   {"config_hash", config_hash(c)},
                   {"phase", c.phase == Phase::test ? "test" : "validation"},
                   {"k", c.k},
                   {"fs_k", c.fs_k},
                   {"quarters", qs},
                   {"selected_features", importance},
                   {"aggregation_members", c.agg_members},
                   {"consensus", consensus_json},
                   {"notes", notes},
                   {"tables", tables}};
    write_text(c.out / "report.json", report.dump(2) + "\n");
    log("report", fmt::format("{} quarters evaluated, tables written to {}", quarters.size(), c.out.string()));
    return report;
}

inline synth::GeneratedUniverse run_synth(const PipelineConfig& c) {
    auto sc = c.synth;
    sc.seed = c.require_seed();
    auto g = synth::generate(sc);
    synth::write(g, c.out);
    log("synth", fmt::format("{} stocks x {} quarters written to {}", sc.n_stocks, sc.n_quarters, c.out.string()));
    return g;
}

// Every stage in order: baseline models, feature-selected reruns, consensus, reports.
inline json run_pipeline(const PipelineConfig& c) {
    c.require_seed();
    fs::create_directories(c.out);
    write_run_config(c);
    log("pipeline", fmt::format("seed={} config_hash={}", *c.seed, config_hash(c)));
    with_stage("ingest", [&] { return run_ingest(c); });
    with_stage("preprocess", [&] { return run_preprocess(c); });
    with_stage("select-features", [&] { return run_select_features(c); });
    for (auto& s : all_strategies()) {
        with_stage("train", [&] { return run_train(c, s); });
        with_stage("predict", [&] { return run_predict(c, s); });
    }
    return with_stage("report", [&] { return run_report(c); });
}

} // namespace fundrank::pipeline
