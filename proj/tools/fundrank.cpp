#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fundrank/fundrank.hpp"

namespace fr = fundrank;
namespace fp = fundrank::pipeline;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> data_dir, benchmark, out, model, side, phase;
    std::optional<std::size_t> k, fs_k, agg;
    bool fs = false;
};

fr::PipelineConfig build_config(const Overrides& o) {
    fr::PipelineConfig c;
    if (!o.config.empty()) fr::load_config_file(c, o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.data_dir) c.data_dir = *o.data_dir;
    if (o.benchmark) c.benchmark = *o.benchmark;
    if (o.out) c.out = *o.out;
    if (o.k) c.k = *o.k;
    if (o.fs_k) c.fs_k = *o.fs_k;
    if (o.agg) c.agg = *o.agg;
    if (o.side) c.side = fr::parse_side(*o.side);
    if (o.phase) fr::apply_setting(c, "phase", *o.phase);
    return c;
}

fp::Strategy strategy_of(const Overrides& o) {
    if (!o.model) throw fr::ConfigError("MissingModel", "--model {fnn|rf|anfis} is required");
    return {fr::parse_family(*o.model), o.fs};
}

std::vector<fr::Side> sides_of(const Overrides& o) {
    if (o.side) return {fr::parse_side(*o.side)};
    return {fr::Side::buy, fr::Side::sell};
}

void log_start(std::string_view stage, const fr::PipelineConfig& c) {
    fp::log(stage, fmt::format("seed={} config_hash={} out={}", c.seed ? std::to_string(*c.seed) : "unset",
                               fr::config_hash(c), c.out.string()));
}

// Without a data directory the pipeline runs on a freshly generated synthetic universe.
void ensure_data(fr::PipelineConfig& c) {
    if (!c.data_dir.empty() || !c.benchmark.empty()) return;
    auto synth_cfg = c;
    synth_cfg.out = c.out / "synthetic";
    fp::with_stage("synth", [&] { return fp::run_synth(synth_cfg); });
    c.data_dir = synth_cfg.out / "data";
    c.benchmark = synth_cfg.out / "benchmark.csv";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fundrank: per-stock models on quarterly fundamentals, ranked into portfolios"};
    app.require_subcommand(1);
    app.fallthrough();
    Overrides o;
    app.add_option("--config", o.config, "flat key = value config file");
    app.add_option("--seed", o.seed, "global seed");
    app.add_option("--data-dir", o.data_dir, "directory of per-ticker CSV files");
    app.add_option("--benchmark", o.benchmark, "benchmark level CSV");
    app.add_option("--out", o.out, "artifact directory");
    app.add_option("--model", o.model, "fnn, rf or anfis")->check(CLI::IsMember({"fnn", "rf", "anfis"}));
    app.add_option("--k", o.k, "portfolio size");
    app.add_option("--fs-k", o.fs_k, "number of selected features");
    app.add_option("--agg", o.agg, "vote threshold, 2 or 3")->check(CLI::IsMember({2, 3}));
    app.add_option("--side", o.side, "buy or sell")->check(CLI::IsMember({"buy", "sell"}));
    app.add_option("--phase", o.phase, "test or validation")->check(CLI::IsMember({"test", "validation"}));
    app.add_flag("--fs", o.fs, "use the selected feature subset");

    auto* synth = app.add_subcommand("synth", "generate a synthetic universe into --out");
    auto* ingest = app.add_subcommand("ingest", "parse, drop sparse features, impute");
    auto* preprocess = app.add_subcommand("preprocess", "detrend, split and standardize");
    auto* select = app.add_subcommand("select-features", "rank features by pooled RF importance");
    auto* train = app.add_subcommand("train", "train one model per ticker");
    auto* predict = app.add_subcommand("predict", "predict the evaluation partition");
    auto* backtest = app.add_subcommand("backtest", "score top/bottom-k portfolios from saved predictions");
    auto* aggregate = app.add_subcommand("aggregate", "majority-vote consensus portfolios");
    auto* report = app.add_subcommand("report", "write all tables and report.json");
    auto* pipeline = app.add_subcommand("pipeline", "run every stage");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    std::string stage = "config";
    try {
        auto c = build_config(o);
        if (synth->parsed()) {
            stage = "synth";
            if (!o.out) c.out = "fundrank_synth";
            log_start(stage, c);
            fp::with_stage(stage, [&] { return fp::run_synth(c); });
        } else if (ingest->parsed()) {
            stage = "ingest";
            log_start(stage, c);
            fp::with_stage(stage, [&] { return fp::run_ingest(c); });
        } else if (preprocess->parsed()) {
            stage = "preprocess";
            log_start(stage, c);
            fp::with_stage(stage, [&] { return fp::run_preprocess(c); });
        } else if (select->parsed()) {
            stage = "select-features";
            log_start(stage, c);
            fp::with_stage(stage, [&] { return fp::run_select_features(c); });
        } else if (train->parsed()) {
            stage = "train";
            log_start(stage, c);
            auto s = strategy_of(o);
            fp::with_stage(stage, [&] { return fp::run_train(c, s); });
        } else if (predict->parsed()) {
            stage = "predict";
            log_start(stage, c);
            auto s = strategy_of(o);
            fp::with_stage(stage, [&] { return fp::run_predict(c, s); });
        } else if (backtest->parsed()) {
            stage = "backtest";
            log_start(stage, c);
            auto s = strategy_of(o);
            for (auto side : sides_of(o)) fp::with_stage(stage, [&] { return fp::run_backtest(c, s, side); });
        } else if (aggregate->parsed()) {
            stage = "aggregate";
            log_start(stage, c);
            std::vector<std::size_t> thresholds = c.agg ? std::vector<std::size_t>{c.agg} : std::vector<std::size_t>{2, 3};
            for (auto m : thresholds)
                for (auto side : sides_of(o)) fp::with_stage(stage, [&] { return fp::run_aggregate(c, m, side); });
        } else if (report->parsed()) {
            stage = "report";
            log_start(stage, c);
            fp::with_stage(stage, [&] { return fp::run_report(c); });
        } else if (pipeline->parsed()) {
            stage = "pipeline";
            c.require_seed();
            ensure_data(c);
            fp::run_pipeline(c);
        }
    } catch (const fr::Error& e) {
        std::string what = e.what();
        if (what.find("stage ") == std::string::npos) what = fmt::format("stage {}: {}", stage, what);
        std::cerr << "fundrank: error: " << what << '\n';
        return fr::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "fundrank: error: stage " << stage << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
