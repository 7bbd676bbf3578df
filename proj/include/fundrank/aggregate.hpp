#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fundrank/error.hpp"
#include "fundrank/evaluate.hpp"

namespace fundrank {

struct VoteConfig {
    std::vector<std::string> members; // labels, for reporting
    std::size_t threshold = 2;        // votes required
    std::size_t k = 20;               // per-member cutoff
    Side side = Side::buy;
};

struct ConsensusPortfolio {
    Portfolio portfolio; // tickers ascending; may hold fewer than k, or none
    bool empty() const { return portfolio.tickers.empty(); }
};

// A ticker joins the quarter's portfolio when at least `threshold` members place
// it in their top k (bottom k for sell).
inline std::vector<ConsensusPortfolio> aggregate(const std::vector<RankTable>& members, const VoteConfig& config) {
    if (members.empty()) throw ConfigError("NoMembers", "aggregation needs at least one member");
    if (config.threshold < 1 || config.threshold > members.size())
        throw ConfigError("BadThreshold", fmt::format("threshold {} with {} members", config.threshold, members.size()));
    const auto& ref = members.front();
    for (auto& m : members) {
        if (m.size() != ref.size()) throw DataError("QuarterMismatch", "members cover different quarters");
        for (auto it = m.begin(), jt = ref.begin(); it != m.end(); ++it, ++jt) {
            if (it->first != jt->first) throw DataError("QuarterMismatch", it->first.to_string());
            std::set<std::string> a(it->second.begin(), it->second.end()), b(jt->second.begin(), jt->second.end());
            if (a != b) throw DataError("QuarterMismatch", fmt::format("ticker sets differ in {}", it->first.to_string()));
        }
    }

    std::vector<ConsensusPortfolio> out;
    for (auto& [q, ref_rank] : ref) {
        std::map<std::string, std::size_t> votes;
        for (auto& m : members) {
            const auto& ranking = m.at(q);
            if (config.k > ranking.size())
                throw ConfigError("KTooLarge", fmt::format("k = {} exceeds universe of {}", config.k, ranking.size()));
            auto pair = top_bottom(ranking, q, config.k);
            for (auto& t : (config.side == Side::buy ? pair.buy : pair.sell).tickers) ++votes[t];
        }
        ConsensusPortfolio c{{q, config.side, {}}};
        for (auto& [t, n] : votes)
            if (n >= config.threshold) c.portfolio.tickers.push_back(t);
        out.push_back(std::move(c));
    }
    return out;
}

struct ConsensusBacktest {
    std::vector<ConsensusPortfolio> portfolios;
    std::vector<Quarter> empty_quarters; // held flat, R_p = 0
    PortfolioReport report;
};

inline ConsensusBacktest backtest_consensus(const std::vector<ConsensusPortfolio>& portfolios, const ActualTable& actuals) {
    ConsensusBacktest out;
    out.portfolios = portfolios;
    std::vector<double> series;
    for (auto& c : portfolios) {
        if (c.empty()) {
            out.empty_quarters.push_back(c.portfolio.quarter);
            series.push_back(0.0);
        } else {
            series.push_back(quarter_return(c.portfolio, actuals));
        }
    }
    out.report = report_allow_flat(series);
    return out;
}

} // namespace fundrank
