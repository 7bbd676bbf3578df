#pragma once

#include <charconv>
#include <compare>
#include <string>
#include <string_view>

#include <fmt/format.h>

#include "fundrank/error.hpp"

namespace fundrank {

// Calendar quarter; index is 1..4.
struct Quarter {
    int year = 0;
    int index = 1;

    constexpr Quarter() = default;
    constexpr Quarter(int y, int q) : year(y), index(q) {
        if (q < 1 || q > 4) throw DataError("BadQuarter", "quarter index out of range");
    }

    constexpr auto operator<=>(const Quarter&) const = default;

    constexpr Quarter next() const { return index == 4 ? Quarter(year + 1, 1) : Quarter(year, index + 1); }
    constexpr Quarter prev() const { return index == 1 ? Quarter(year - 1, 4) : Quarter(year, index - 1); }

    // Quarters elapsed since year 0 Q1; differences give quarter distances.
    constexpr int ordinal() const { return year * 4 + (index - 1); }
    static constexpr Quarter from_ordinal(int ord) {
        int y = ord >= 0 ? ord / 4 : -((-ord + 3) / 4);
        return Quarter(y, ord - y * 4 + 1);
    }

    std::string to_string() const { return fmt::format("{}Q{}", year, index); }

    // Last calendar day of the quarter, ISO-8601.
    std::string end_date() const {
        static constexpr const char* suffix[] = {"03-31", "06-30", "09-30", "12-31"};
        return fmt::format("{:04d}-{}", year, suffix[index - 1]);
    }
};

namespace detail {
inline bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}
} // namespace detail

// Accepts "2015Q3" or an ISO date "2015-09-30" (month decides the quarter).
inline Quarter parse_quarter(std::string_view text) {
    int year = 0;
    if (auto q = text.find_first_of("Qq"); q != std::string_view::npos) {
        int idx = 0;
        if (detail::parse_int(text.substr(0, q), year) && detail::parse_int(text.substr(q + 1), idx) &&
            idx >= 1 && idx <= 4)
            return Quarter(year, idx);
    } else if (text.size() >= 7 && text[4] == '-') {
        int month = 0;
        auto month_end = text.find('-', 5);
        auto month_text = text.substr(5, month_end == std::string_view::npos ? text.size() - 5 : month_end - 5);
        if (detail::parse_int(text.substr(0, 4), year) && detail::parse_int(month_text, month) && month >= 1 &&
            month <= 12)
            return Quarter(year, (month - 1) / 3 + 1);
    }
    throw DataError("BadQuarter", fmt::format("cannot parse quarter '{}'", text));
}

} // namespace fundrank
