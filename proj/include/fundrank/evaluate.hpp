#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fundrank/error.hpp"
#include "fundrank/prediction_table.hpp"
#include "fundrank/quarter.hpp"

namespace fundrank {

enum class Side { buy, sell };

inline std::string_view to_string(Side s) { return s == Side::buy ? "buy" : "sell"; }

inline Side parse_side(std::string_view s) {
    if (s == "buy" || s == "BUY") return Side::buy;
    if (s == "sell" || s == "SELL") return Side::sell;
    throw ConfigError("BadSide", std::string(s));
}

using Ranking = std::vector<std::string>;
using RankTable = std::map<Quarter, Ranking>;

// Descending predicted return; ties by ascending ticker.
inline Ranking rank(const PredictionTable& predictions, Quarter quarter) {
    auto it = predictions.find(quarter);
    if (it == predictions.end()) throw DataError("UnknownQuarter", quarter.to_string());
    std::vector<std::pair<std::string, double>> rows(it->second.begin(), it->second.end());
    std::stable_sort(rows.begin(), rows.end(), [](auto& a, auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Ranking out;
    out.reserve(rows.size());
    for (auto& r : rows) out.push_back(r.first);
    return out;
}

inline RankTable rank_all(const PredictionTable& predictions) {
    RankTable table;
    for (auto& [q, row] : predictions) table.emplace(q, rank(predictions, q));
    return table;
}

struct Portfolio {
    Quarter quarter;
    Side side = Side::buy;
    std::vector<std::string> tickers; // equal weight

    bool operator==(const Portfolio&) const = default;
};

struct PortfolioPair {
    Portfolio buy;
    Portfolio sell;
};

inline PortfolioPair top_bottom(const Ranking& ranking, Quarter quarter, std::size_t k) {
    if (k == 0) throw ConfigError("KTooSmall", "k must be >= 1");
    if (k > ranking.size())
        throw ConfigError("KTooLarge", fmt::format("k = {} exceeds universe of {}", k, ranking.size()));
    PortfolioPair out{{quarter, Side::buy, {ranking.begin(), ranking.begin() + static_cast<long>(k)}},
                      {quarter, Side::sell, {ranking.end() - static_cast<long>(k), ranking.end()}}};
    return out;
}

// Equal-weight mean of the constituents' realised relative returns.
inline double quarter_return(const Portfolio& portfolio, const ActualTable& actuals) {
    if (portfolio.tickers.empty()) throw DataError("EmptyPortfolio", portfolio.quarter.to_string());
    auto row = actuals.find(portfolio.quarter);
    if (row == actuals.end()) throw DataError("MissingActual", portfolio.quarter.to_string());
    double sum = 0.0;
    for (auto& t : portfolio.tickers) {
        auto it = row->second.find(t);
        if (it == row->second.end())
            throw DataError("MissingActual", fmt::format("{} {}", t, portfolio.quarter.to_string()));
        sum += it->second;
    }
    return sum / static_cast<double>(portfolio.tickers.size());
}

struct PortfolioReport {
    double mean = 0.0;   // pct points per quarter
    double stddev = 0.0; // sample standard deviation, pct points
    std::optional<double> score;
    double compound = 0.0; // pct over the whole period
    std::vector<double> series;
};

// (prod(1 + r/100) - 1) * 100
inline double compound_return(std::span<const double> quarterly) {
    double growth = 1.0;
    for (double r : quarterly) growth *= 1.0 + r / 100.0;
    return (growth - 1.0) * 100.0;
}

inline double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_stddev(std::span<const double> v) {
    if (v.size() < 2) throw DataError("TooFewQuarters", "standard deviation needs at least two values");
    double m = mean_of(v), s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Sharpe-style ratio; with risk_free = 0 it is the Portfolio Score.
inline double sharpe(std::span<const double> returns, double risk_free) {
    double sd = sample_stddev(returns);
    if (!(sd > 0)) throw NumericalError("ZeroStd", "returns have zero standard deviation");
    return (mean_of(returns) - risk_free) / sd;
}

inline PortfolioReport report(std::span<const double> quarterly) {
    if (quarterly.size() < 2) throw DataError("TooFewQuarters", fmt::format("{} quarters, need 2", quarterly.size()));
    PortfolioReport r;
    r.series.assign(quarterly.begin(), quarterly.end());
    r.mean = mean_of(quarterly);
    r.stddev = sample_stddev(quarterly);
    r.compound = compound_return(quarterly);
    if (!(r.stddev > 0)) throw NumericalError("ZeroStd", "all quarterly returns are identical");
    r.score = r.mean / r.stddev;
    return r;
}

// Like report(), but a zero-variance series yields a report without a score.
inline PortfolioReport report_allow_flat(std::span<const double> quarterly) {
    try {
        return report(quarterly);
    } catch (const NumericalError& e) {
        if (e.code() != "ZeroStd") throw;
        PortfolioReport r;
        r.series.assign(quarterly.begin(), quarterly.end());
        r.mean = mean_of(quarterly);
        r.stddev = 0.0;
        r.compound = compound_return(quarterly);
        return r;
    }
}

// Per-quarter equal-weight return of the whole universe.
inline std::vector<double> universe_series(const ActualTable& actuals) {
    std::vector<double> out;
    for (auto& [q, row] : actuals) {
        if (row.empty()) throw DataError("MissingActual", fmt::format("no actuals for {}", q.to_string()));
        double s = 0.0;
        for (auto& [t, r] : row) s += r;
        out.push_back(s / static_cast<double>(row.size()));
    }
    return out;
}

inline PortfolioReport universe_report(const ActualTable& actuals) { return report(universe_series(actuals)); }

struct BacktestResult {
    std::vector<Portfolio> portfolios;
    std::vector<Quarter> quarters;
    PortfolioReport report;
};

// Rank every quarter, hold the top (buy) or bottom (sell) k, score the realised returns.
inline BacktestResult backtest(const PredictionTable& predictions, const ActualTable& actuals, std::size_t k, Side side) {
    BacktestResult out;
    std::vector<double> series;
    for (auto& [q, row] : predictions) {
        auto pair = top_bottom(rank(predictions, q), q, k);
        auto& p = side == Side::buy ? pair.buy : pair.sell;
        series.push_back(quarter_return(p, actuals));
        out.quarters.push_back(q);
        out.portfolios.push_back(std::move(p));
    }
    out.report = report(series);
    return out;
}

inline nlohmann::json to_json(const PortfolioReport& r) {
    nlohmann::json j = {{"mean", r.mean}, {"std", r.stddev}, {"compound", r.compound}, {"series", r.series}};
    j["portfolio_score"] = r.score ? nlohmann::json(*r.score) : nlohmann::json(nullptr);
    return j;
}

} // namespace fundrank
