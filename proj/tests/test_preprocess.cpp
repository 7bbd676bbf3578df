#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace fundrank;

namespace {

// n quarters, prices and features following simple seeded random walks.
StockSeries random_series(const std::string& ticker, std::size_t n, std::uint64_t seed, Quarter start = {2000, 1}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> step(-0.1, 0.1);
    std::vector<double> prices{50.0};
    std::vector<std::vector<double>> values{std::vector<double>(20, 100.0)};
    for (std::size_t t = 1; t < n; ++t) {
        prices.push_back(prices.back() * (1 + step(rng)));
        auto v = values.back();
        for (auto& e : v) e *= 1 + step(rng);
        values.push_back(v);
    }
    return support::make_series(ticker, start, prices, values);
}

std::string code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "none";
}

SampleSet universe_set(std::size_t tickers, std::size_t quarters, std::uint64_t seed = 1) {
    std::vector<StockSeries> u;
    for (std::size_t i = 0; i < tickers; ++i) u.push_back(random_series(fmt::format("T{:02d}", i), quarters, seed + i));
    std::vector<double> levels;
    std::mt19937_64 rng(seed * 97);
    std::uniform_real_distribution<double> step(-0.05, 0.06);
    double l = 1000;
    for (std::size_t t = 0; t < quarters; ++t) {
        levels.push_back(l);
        l *= 1 + step(rng);
    }
    return assemble_samples(u, support::make_benchmark({2000, 1}, levels)).set;
}

} // namespace

TEST(PctChange, Arithmetic) {
    auto s = support::make_series("A", {2000, 1}, {10, 10, 10},
                                  {std::vector<double>(20, 100), std::vector<double>(20, 110), std::vector<double>(20, 110)});
    s.records[1].values[1] = 80;
    s.records[2].values[1] = 60;
    auto r = pct_change(s);
    ASSERT_EQ(r.rows.size(), 2u);
    EXPECT_EQ(r.rows[0].quarter, Quarter(2000, 2));
    EXPECT_NEAR(r.rows[0].values[0], 10.0, 1e-12);
    EXPECT_NEAR(r.rows[1].values[0], 0.0, 0);
    EXPECT_NEAR(r.rows[1].values[1], -25.0, 1e-12);
}

TEST(PctChange, ConstantSeriesAllZero) {
    auto s = support::make_series("A", {2000, 1}, {10, 10, 10, 10}, std::vector<std::vector<double>>(4, std::vector<double>(20, 7)));
    for (auto& row : pct_change(s).rows)
        for (double v : row.values) EXPECT_EQ(v, 0.0);
}

TEST(PctChange, ZeroBaseWarnsOrFails) {
    auto s = support::make_series("A", {2000, 1}, {10, 10}, {std::vector<double>(20, 1), std::vector<double>(20, 2)});
    s.records[0].values[9] = 0.0;
    auto r = pct_change(s);
    EXPECT_EQ(r.rows[0].values[9], 0.0);
    EXPECT_EQ(r.warnings.size(), 1u);
    EXPECT_EQ(code_of([&] { pct_change(s, ZeroBasePolicy::error); }), "ZeroBase");
}

TEST(PctChange, ShiftInvariantUnderPositiveScaling) {
    auto s = random_series("A", 12, 4);
    auto scaled = s;
    for (auto& r : scaled.records)
        for (auto& v : r.values) *v *= 7.5;
    auto a = pct_change(s), b = pct_change(scaled);
    for (std::size_t t = 0; t < a.rows.size(); ++t)
        for (std::size_t j = 0; j < 20; ++j) EXPECT_NEAR(a.rows[t].values[j], b.rows[t].values[j], 1e-9);
}

TEST(RelativeReturn, Examples) {
    auto bench = support::make_benchmark({2015, 1}, {1000, 1020, 1050, 1081.5});
    auto s = support::make_series("A", {2015, 1}, {100, 110, 110, 115.5},
                                  std::vector<std::vector<double>>(4, std::vector<double>(20, 1)));
    EXPECT_NEAR(compute_relative_return(s, bench, {2015, 2}), 8.0, 1e-12);
    // flat stock, index +3%
    auto flat = support::make_series("F", {2015, 2}, {110, 110}, std::vector<std::vector<double>>(2, std::vector<double>(20, 1)));
    auto b3 = support::make_benchmark({2015, 2}, {1000, 1030});
    EXPECT_NEAR(compute_relative_return(flat, b3, {2015, 3}), -3.0, 1e-12);
    // +5% each
    auto both = support::make_benchmark({2015, 3}, {1000, 1050});
    auto five = support::make_series("B", {2015, 3}, {100, 105}, std::vector<std::vector<double>>(2, std::vector<double>(20, 1)));
    EXPECT_NEAR(compute_relative_return(five, both, {2015, 4}), 0.0, 1e-12);
    EXPECT_EQ(code_of([&] { compute_relative_return(s, bench, {2015, 1}); }), "QuarterOutOfRange");
    EXPECT_EQ(code_of([&] { compute_relative_return(s, bench, {2016, 1}); }), "QuarterOutOfRange");
}

TEST(Assemble, EightyEightQuartersGiveEightySixSamples) {
    auto set = universe_set(1, 88);
    EXPECT_EQ(set.samples.size(), 86u);
    EXPECT_EQ(set.feature_count(), 21u);
    EXPECT_EQ(set.feature_names.back(), kRelativeReturnFeature);
}

TEST(Assemble, InsufficientHistory) {
    std::vector<StockSeries> u{random_series("A", 2, 1)};
    auto bench = support::make_benchmark({2000, 1}, {1, 2});
    EXPECT_EQ(code_of([&] { assemble_samples(u, bench); }), "InsufficientHistory");
}

TEST(Assemble, TargetIsNextQuarterRelativeReturn) {
    auto s = random_series("A", 10, 9, {2014, 1});
    auto bench = support::make_benchmark({2014, 1}, {100, 101, 99, 104, 108, 107, 111, 115, 110, 118});
    std::vector<StockSeries> u{s};
    auto set = assemble_samples(u, bench).set;
    bool found = false;
    for (auto& smp : set.samples) {
        EXPECT_EQ(smp.target_quarter, smp.feature_quarter.next());
        EXPECT_DOUBLE_EQ(smp.target, compute_relative_return(s, bench, smp.feature_quarter.next()));
        EXPECT_DOUBLE_EQ(smp.raw.back(), compute_relative_return(s, bench, smp.feature_quarter));
        if (smp.feature_quarter == Quarter(2015, 2)) {
            found = true;
            EXPECT_EQ(smp.target_quarter, Quarter(2015, 3));
        }
    }
    EXPECT_TRUE(found);
}

TEST(Assemble, RejectsDuplicateTickerAndGaps) {
    std::vector<StockSeries> dup{random_series("A", 5, 1), random_series("A", 5, 2)};
    auto bench = support::make_benchmark({2000, 1}, {1, 2, 3, 4, 5});
    EXPECT_EQ(code_of([&] { assemble_samples(dup, bench); }), "DuplicateTicker");
    auto gap = random_series("G", 5, 1);
    gap.records.erase(gap.records.begin() + 2);
    std::vector<StockSeries> u{gap};
    EXPECT_EQ(code_of([&] { assemble_samples(u, bench); }), "NonContiguousSeries");
}

TEST(Split, PaperBoundariesGiveEighteenTestQuarters) {
    // 1996Q1..2017Q4: 88 quarters, targets 1996Q3..2017Q4
    auto set = universe_set(2, 88);
    for (auto& s : set.samples) s.feature_quarter = Quarter::from_ordinal(s.feature_quarter.ordinal() - 16);
    for (auto& s : set.samples) s.target_quarter = s.feature_quarter.next();
    ASSERT_EQ(set.samples.front().feature_quarter, Quarter(1996, 2));
    auto split = split_chronological(set, {{2008, 1}, {2013, 2}});
    auto test_q = split.target_quarters(Partition::test);
    EXPECT_EQ(test_q.size(), 18u);
    EXPECT_EQ(test_q.front(), Quarter(2013, 3));
    EXPECT_EQ(test_q.back(), Quarter(2017, 4));
    auto val_q = split.target_quarters(Partition::validation);
    EXPECT_EQ(val_q.front(), Quarter(2008, 2));
    EXPECT_EQ(val_q.back(), Quarter(2013, 2));
    EXPECT_EQ(split.target_quarters(Partition::train).back(), Quarter(2008, 1));
}

TEST(Split, CountingOracleSixTwoTwo) {
    auto set = universe_set(3, 12); // 10 target quarters
    auto q = set.target_quarters(Partition::unassigned);
    ASSERT_EQ(q.size(), 10u);
    auto split = split_chronological(set, {q[5], q[7]});
    EXPECT_EQ(split.target_quarters(Partition::train).size(), 6u);
    EXPECT_EQ(split.target_quarters(Partition::validation).size(), 2u);
    EXPECT_EQ(split.target_quarters(Partition::test).size(), 2u);
    EXPECT_EQ(default_boundaries(set), (SplitBoundaries{q[5], q[7]}));
}

TEST(Split, EmptyPartitionAndBadOrder) {
    auto set = universe_set(1, 12);
    auto q = set.target_quarters(Partition::unassigned);
    EXPECT_EQ(code_of([&] { split_chronological(set, {q[5], q.back().next()}); }), "EmptyPartition");
    EXPECT_EQ(code_of([&] { split_chronological(set, {q[7], q[5]}); }), "BadBoundaries");
}

TEST(Split, TemporalOrderingHolds) {
    auto set = standardize(split_chronological(universe_set(4, 40), default_boundaries(universe_set(4, 40))));
    auto check = [](const SampleSet& s) {
        auto tr = s.target_quarters(Partition::train), va = s.target_quarters(Partition::validation),
             te = s.target_quarters(Partition::test);
        if (!tr.empty() && !va.empty()) { EXPECT_LT(tr.back(), va.front()); }
        if (!va.empty() && !te.empty()) { EXPECT_LT(va.back(), te.front()); }
        if (!tr.empty() && !te.empty()) { EXPECT_LT(tr.back(), te.front()); }
    };
    check(set);
    check(merge_train_validation(set));
}

TEST(Standardize, TrainMomentsAreZeroAndOne) {
    auto set = standardize(split_chronological(universe_set(5, 40), default_boundaries(universe_set(5, 40))));
    auto idx = set.indices(Partition::train);
    for (std::size_t f = 0; f < set.feature_count(); ++f) {
        double m = 0, v = 0;
        for (auto i : idx) m += set.samples[i].features[f];
        m /= static_cast<double>(idx.size());
        for (auto i : idx) v += (set.samples[i].features[f] - m) * (set.samples[i].features[f] - m);
        v /= static_cast<double>(idx.size());
        EXPECT_LT(std::fabs(m), 1e-10);
        EXPECT_LT(std::fabs(std::sqrt(v) - 1), 1e-10);
    }
}

TEST(Standardize, HandComputedValue) {
    SampleSet set;
    set.feature_names = {"f"};
    for (double v : {1.0, 2.0, 3.0})
        set.samples.push_back({"A", {2000, 1}, {2000, 2}, 0.0, {v}, {v}, Partition::train});
    set.samples.push_back({"A", {2001, 1}, {2001, 2}, 0.0, {2.0}, {2.0}, Partition::test});
    auto out = standardize(set);
    EXPECT_DOUBLE_EQ(out.params->mean[0], 2.0);
    EXPECT_DOUBLE_EQ(out.params->stddev[0], std::sqrt(2.0 / 3.0));
    EXPECT_EQ(out.samples[3].features[0], 0.0);
    EXPECT_DOUBLE_EQ(out.samples[0].features[0], -1.0 / std::sqrt(2.0 / 3.0));
    EXPECT_EQ(out.samples[0].target, 0.0);
}

TEST(Standardize, ZeroVariance) {
    SampleSet set;
    set.feature_names = {"f"};
    for (int i = 0; i < 3; ++i) set.samples.push_back({"A", {2000, 1}, {2000, 2}, 0.0, {4.0}, {4.0}, Partition::train});
    EXPECT_EQ(code_of([&] { standardize(set); }), "ZeroVariance");
}

TEST(Standardize, TargetsUntouched) {
    auto raw = split_chronological(universe_set(3, 30), default_boundaries(universe_set(3, 30)));
    auto set = standardize(raw);
    for (std::size_t i = 0; i < set.samples.size(); ++i) EXPECT_EQ(set.samples[i].target, raw.samples[i].target);
}

TEST(Standardize, ParamsIgnoreTestRows) {
    auto base = universe_set(4, 30);
    auto b = default_boundaries(base);
    auto ref = fit_standardization(split_chronological(base, b));
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        auto mutated = split_chronological(base, b);
        auto test = mutated.indices(Partition::test);
        auto& s = mutated.samples[test[rng() % test.size()]];
        s.raw[rng() % s.raw.size()] += 1e6;
        s.target = -s.target;
        EXPECT_EQ(fit_standardization(mutated), ref);
    }
}

TEST(Merge, SixtyTwentyTwentyBecomesEightyZeroTwenty) {
    auto base = universe_set(2, 52); // 50 target quarters
    auto set = standardize(split_chronological(base, default_boundaries(base)));
    auto tr = set.target_quarters(Partition::train).size(), va = set.target_quarters(Partition::validation).size(),
         te = set.target_quarters(Partition::test).size();
    EXPECT_EQ(tr, 30u);
    EXPECT_EQ(va, 10u);
    EXPECT_EQ(te, 10u);
    auto merged = merge_train_validation(set);
    EXPECT_EQ(merged.target_quarters(Partition::train).size(), 40u);
    EXPECT_TRUE(merged.indices(Partition::validation).empty());
    EXPECT_EQ(merged.target_quarters(Partition::test).size(), 10u);
    EXPECT_TRUE(merged.merged);
    EXPECT_NE(*merged.params, *set.params);
    // merged params equal a direct recomputation over the union
    auto idx = merged.indices(Partition::train);
    for (std::size_t f = 0; f < merged.feature_count(); ++f) {
        double m = 0;
        for (auto i : idx) m += merged.samples[i].raw[f];
        m /= static_cast<double>(idx.size());
        EXPECT_NEAR(merged.params->mean[f], m, 1e-9 * std::max(1.0, std::fabs(m)));
    }
    auto again = merge_train_validation(merged);
    EXPECT_EQ(again.samples, merged.samples);
    EXPECT_EQ(*again.params, *merged.params);
}

TEST(SampleSetJson, RoundTrip) {
    auto base = universe_set(3, 20);
    auto set = standardize(split_chronological(base, default_boundaries(base)));
    auto back = sample_set_from_json(nlohmann::json::parse(to_json(set).dump()));
    EXPECT_EQ(back.samples, set.samples);
    EXPECT_EQ(back.params, set.params);
    EXPECT_EQ(back.boundaries, set.boundaries);
    EXPECT_EQ(back.feature_names, set.feature_names);
}
