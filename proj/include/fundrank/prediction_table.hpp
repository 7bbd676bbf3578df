#pragma once

#include <map>
#include <string>

#include "fundrank/quarter.hpp"

namespace fundrank {

// (quarter, ticker) -> relative return in percentage points. The quarter is the
// one over which the return is (or would be) realised.
using PredictionTable = std::map<Quarter, std::map<std::string, double>>;
using ActualTable = PredictionTable;

inline std::size_t entry_count(const PredictionTable& t) {
    std::size_t n = 0;
    for (auto& [q, row] : t) n += row.size();
    return n;
}

} // namespace fundrank
