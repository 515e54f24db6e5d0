#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace ivsurf {

using Date = std::chrono::year_month_day;

// Calendar-day conventions used throughout: maturities are measured in
// calendar days and annualized over 365.
inline constexpr double kDaysPerYear = 365.0;

// Parses "YYYY-MM-DD".  Throws ParseError on malformed or non-existent dates.
Date parse_date(std::string_view text);

// Formats as "YYYY-MM-DD".
std::string format_date(const Date& d);

// Calendar days from `from` to `to`; negative when `to` precedes `from`.
long days_between(const Date& from, const Date& to);

Date add_days(const Date& d, long days);

// Calendar quarter label, e.g. "2019Q3".
std::string quarter_key(const Date& d);

// Year fraction for an expiry seen from a trade date.
inline double year_fraction(const Date& trade, const Date& expiry) {
    return static_cast<double>(days_between(trade, expiry)) / kDaysPerYear;
}

} // namespace ivsurf
