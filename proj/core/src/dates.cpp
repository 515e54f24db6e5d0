#include "ivsurf/dates.hpp"

#include <charconv>
#include <cstdio>

#include "ivsurf/errors.hpp"

namespace ivsurf {

namespace {

int parse_int_field(std::string_view text, std::string_view what) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError("bad date " + std::string(what) + ": '" + std::string(text) + "'");
    }
    return value;
}

} // namespace

Date parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw ParseError("bad date '" + std::string(text) + "', expected YYYY-MM-DD");
    }
    const int y = parse_int_field(text.substr(0, 4), "year");
    const int m = parse_int_field(text.substr(5, 2), "month");
    const int d = parse_int_field(text.substr(8, 2), "day");
    const Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                    std::chrono::day{static_cast<unsigned>(d)}};
    if (!date.ok()) {
        throw ParseError("non-existent calendar date '" + std::string(text) + "'");
    }
    return date;
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

long days_between(const Date& from, const Date& to) {
    const auto a = std::chrono::sys_days{from};
    const auto b = std::chrono::sys_days{to};
    return (b - a).count();
}

Date add_days(const Date& d, long days) {
    return Date{std::chrono::sys_days{d} + std::chrono::days{days}};
}

std::string quarter_key(const Date& d) {
    const int quarter = (static_cast<unsigned>(d.month()) - 1) / 3 + 1;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04dQ%d", static_cast<int>(d.year()), quarter);
    return buf;
}

} // namespace ivsurf
