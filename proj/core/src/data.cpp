#include "ivsurf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "ivsurf/black_scholes.hpp"
#include "ivsurf/errors.hpp"
#include "ivsurf/rng.hpp"

namespace ivsurf::data {

double Quote::discount() const { return std::exp(-rate * tau()); }

std::string_view reject_rule_name(RejectRule rule) {
    switch (rule) {
    case RejectRule::tick_size:
        return "tick_size";
    case RejectRule::maturity:
        return "maturity";
    case RejectRule::in_the_money:
        return "in_the_money";
    }
    throw std::logic_error("unknown reject rule");
}

// --- loading ---------------------------------------------------------------

namespace {

constexpr std::string_view kHeader = "trade_date,expiry_date,type,strike,bid,ask,spot,rate";

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

double parse_double(std::string_view field, std::size_t line, const char* what) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw ParseError("line " + std::to_string(line) + ": bad " + what + " '" +
                         std::string(field) + "'");
    }
    return value;
}

} // namespace

LoadResult parse_quotes_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("empty quotes file");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != kHeader) {
        throw ParseError("bad header '" + line + "', expected '" + std::string(kHeader) + "'");
    }

    LoadResult out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != 8) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 8 fields, got " +
                             std::to_string(fields.size()));
        }
        Quote q;
        try {
            q.trade_date = parse_date(fields[0]);
            q.expiry_date = parse_date(fields[1]);
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (fields[2] == "call") {
            q.type = OptionType::call;
        } else if (fields[2] == "put") {
            q.type = OptionType::put;
        } else {
            throw ParseError("line " + std::to_string(line_no) + ": bad option type '" +
                             std::string(fields[2]) + "'");
        }
        q.strike = parse_double(fields[3], line_no, "strike");
        q.bid = parse_double(fields[4], line_no, "bid");
        q.ask = parse_double(fields[5], line_no, "ask");
        q.spot = parse_double(fields[6], line_no, "spot");
        q.rate = parse_double(fields[7], line_no, "rate");

        // Parseable but nonsensical rows are reported, not fatal.
        if (q.bid < 0.0) {
            out.rejected_rows.push_back({line_no, "negative bid"});
        } else if (q.ask < q.bid) {
            out.rejected_rows.push_back({line_no, "ask below bid"});
        } else if (!(q.strike > 0.0)) {
            out.rejected_rows.push_back({line_no, "nonpositive strike"});
        } else if (!(q.spot > 0.0)) {
            out.rejected_rows.push_back({line_no, "nonpositive spot"});
        } else if (days_between(q.trade_date, q.expiry_date) <= 0) {
            out.rejected_rows.push_back({line_no, "expiry not after trade date"});
        } else {
            out.quotes.push_back(q);
        }
    }
    return out;
}

LoadResult load_quotes(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open quotes file '" + path.string() + "'");
    }
    return parse_quotes_csv(in);
}

void write_quotes_csv(const std::filesystem::path& path, std::span<const Quote> quotes) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write quotes file '" + path.string() + "'");
    }
    out << kHeader << "\n";
    out.precision(17);
    for (const Quote& q : quotes) {
        out << format_date(q.trade_date) << ',' << format_date(q.expiry_date) << ','
            << (q.type == OptionType::call ? "call" : "put") << ',' << q.strike << ',' << q.bid
            << ',' << q.ask << ',' << q.spot << ',' << q.rate << "\n";
    }
    if (!out) {
        throw IoError("short write to '" + path.string() + "'");
    }
}

// --- filtering ---------------------------------------------------------------

std::map<ExpiryKey, ForwardEstimate> estimate_forwards(std::span<const Quote> quotes) {
    struct PairBook {
        // strike -> (call mid, put mid)
        std::map<double, std::pair<double, double>> sides;
        double spot = 0.0;
        double rate = 0.0;
        double tau = 0.0;
    };
    std::map<ExpiryKey, PairBook> books;
    for (const Quote& q : quotes) {
        PairBook& book = books[{q.trade_date, q.expiry_date}];
        auto& sides = book.sides[q.strike];
        if (q.type == OptionType::call) {
            sides.first = q.mid();
        } else {
            sides.second = q.mid();
        }
        book.spot = q.spot;
        book.rate = q.rate;
        book.tau = q.tau();
    }

    std::map<ExpiryKey, ForwardEstimate> out;
    for (const auto& [key, book] : books) {
        double best_gap = std::numeric_limits<double>::infinity();
        double best_strike = 0.0;
        double best_call = 0.0;
        double best_put = 0.0;
        for (const auto& [strike, sides] : book.sides) {
            if (sides.first > 0.0 && sides.second > 0.0) {
                const double gap = std::abs(sides.first - sides.second);
                if (gap < best_gap) { // ties resolve to the lower strike
                    best_gap = gap;
                    best_strike = strike;
                    best_call = sides.first;
                    best_put = sides.second;
                }
            }
        }
        ForwardEstimate est;
        if (best_strike > 0.0) {
            const double discount = std::exp(-book.rate * book.tau);
            est.forward = bs::forward_from_parity(best_call, best_put, best_strike, discount);
            est.from_parity = true;
        } else {
            est.forward = book.spot * std::exp(book.rate * book.tau);
            est.from_parity = false;
        }
        out.emplace(key, est);
    }
    return out;
}

FilterResult filter_quotes(std::span<const Quote> quotes) {
    const auto forwards = estimate_forwards(quotes);
    FilterResult out;
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        const Quote& q = quotes[i];
        if (q.mid() < kMinMid) {
            out.rejected.push_back({i, RejectRule::tick_size});
            continue;
        }
        if (days_between(q.trade_date, q.expiry_date) < kMinMaturityDays) {
            out.rejected.push_back({i, RejectRule::maturity});
            continue;
        }
        const double forward = forwards.at({q.trade_date, q.expiry_date}).forward;
        const bool itm = q.type == OptionType::call ? q.strike < forward : q.strike > forward;
        if (itm) {
            out.rejected.push_back({i, RejectRule::in_the_money});
            continue;
        }
        out.kept.push_back(q);
        out.kept_source.push_back(i);
    }
    return out;
}

// --- preparation -------------------------------------------------------------

losses::DataBatch PreparedQuotes::batch() const {
    losses::DataBatch out;
    out.points.reserve(points.size());
    for (const PreparedPoint& pt : points) {
        out.points.push_back({pt.m, pt.tau, pt.v});
    }
    return out;
}

PreparedQuotes prepare_points(std::span<const Quote> quotes) {
    PreparedQuotes out;
    out.forwards = estimate_forwards(quotes);
    out.points.reserve(quotes.size());
    out.contexts.reserve(quotes.size());

    for (std::size_t i = 0; i < quotes.size(); ++i) {
        const Quote& q = quotes[i];
        const double tau = q.tau();
        if (!(tau > 0.0)) {
            out.failures.push_back({i, "expiry not after trade date"});
            continue;
        }
        const double forward = out.forwards.at({q.trade_date, q.expiry_date}).forward;
        const double m = std::log(q.strike / forward);
        const double discount = q.discount();
        const double denom = discount * forward;
        // Map both sides into normalized call-price space via parity.
        double call_norm = q.mid() / denom;
        if (q.type == OptionType::put) {
            call_norm += 1.0 - std::exp(m);
        }
        try {
            const double v = bs::implied_vol(call_norm, m, tau);
            out.points.push_back({m, tau, v, q.mid(), forward, i});
            out.contexts.push_back({discount, q.type == OptionType::call});
        } catch (const ArbitrageViolation& e) {
            out.failures.push_back({i, e.what()});
        } catch (const ConvergenceError& e) {
            out.failures.push_back({i, e.what()});
        }
    }
    return out;
}

void write_prepared_csv(const std::filesystem::path& path, std::span<const Quote> quotes,
                        const PreparedQuotes& prepared) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write prepared points to '" + path.string() + "'");
    }
    out << "trade_date,expiry_date,type,strike,m,tau,iv,mid,forward\n";
    out.precision(17);
    for (const PreparedPoint& pt : prepared.points) {
        const Quote& q = quotes[pt.source];
        out << format_date(q.trade_date) << ',' << format_date(q.expiry_date) << ','
            << (q.type == OptionType::call ? "call" : "put") << ',' << q.strike << ',' << pt.m
            << ',' << pt.tau << ',' << pt.v << ',' << pt.mid << ',' << pt.forward << "\n";
    }
    if (!out) {
        throw IoError("short write to '" + path.string() + "'");
    }
}

// --- splitting ---------------------------------------------------------------

SplitResult split_day(std::span<const PreparedPoint> points, double fraction, std::uint64_t seed) {
    const std::size_t n = points.size();
    if (n < 2) {
        throw std::domain_error("split_day: need at least two points");
    }
    if (!(fraction > 0.0) || !(fraction < 1.0)) {
        throw std::domain_error("split_day: fraction must lie strictly inside (0, 1)");
    }
    std::size_t n_train = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1); // both sides stay nonempty

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    // Fisher-Yates with our own uniform so the shuffle is stable across
    // standard libraries.
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(i + 1));
        std::swap(order[i], order[std::min(j, i)]);
    }

    SplitResult out;
    out.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(out.train_indices.begin(), out.train_indices.end());
    std::sort(out.test_indices.begin(), out.test_indices.end());
    for (const std::size_t idx : out.train_indices) {
        out.train.points.push_back({points[idx].m, points[idx].tau, points[idx].v});
    }
    for (const std::size_t idx : out.test_indices) {
        out.test.points.push_back({points[idx].m, points[idx].tau, points[idx].v});
    }
    return out;
}

} // namespace ivsurf::data
