#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "error.hpp"

namespace granular {

/// Calendar date as a day count from 2000-01-01 (day 0).
using Day = std::int32_t;

inline constexpr double kDaysPerYear = 365.25;

namespace detail {
inline constexpr std::chrono::sys_days kEpoch{std::chrono::year{2000} / 1 / 1};
}

inline std::optional<Day> make_day(int y, unsigned m, unsigned d)
{
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) {
        return std::nullopt;
    }
    return static_cast<Day>((std::chrono::sys_days{ymd} - detail::kEpoch).count());
}

/// Parses a strict `YYYY-MM-DD` date.
inline std::optional<Day> parse_iso_date(std::string_view text)
{
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        return std::nullopt;
    }
    int parts[3] = {0, 0, 0};
    const std::size_t starts[3] = {0, 5, 8};
    const std::size_t lens[3] = {4, 2, 2};
    for (int p = 0; p < 3; ++p) {
        for (std::size_t i = 0; i < lens[p]; ++i) {
            const char c = text[starts[p] + i];
            if (c < '0' || c > '9') {
                return std::nullopt;
            }
            parts[p] = parts[p] * 10 + (c - '0');
        }
    }
    return make_day(parts[0], static_cast<unsigned>(parts[1]), static_cast<unsigned>(parts[2]));
}

inline Day parse_iso_date_or_throw(std::string_view text)
{
    if (auto d = parse_iso_date(text)) {
        return *d;
    }
    throw DataError("invalid date '" + std::string(text) + "' (expected YYYY-MM-DD)");
}

inline std::string format_iso_date(Day day)
{
    const std::chrono::year_month_day ymd{detail::kEpoch + std::chrono::days{day}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

inline int calendar_year(Day day)
{
    const std::chrono::year_month_day ymd{detail::kEpoch + std::chrono::days{day}};
    return static_cast<int>(ymd.year());
}

inline Day year_start(int year)
{
    return *make_day(year, 1, 1);
}

/// Continuous years since the epoch; used as the time covariate of delay models.
inline double years_since_epoch(double day)
{
    return day / kDaysPerYear;
}

inline double days_to_years(double days)
{
    return days / kDaysPerYear;
}

} // namespace granular
