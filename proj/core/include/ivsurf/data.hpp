#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ivsurf/dates.hpp"
#include "ivsurf/losses.hpp"

// Option-quote ingestion: CSV loading, liquidity/moneyness filtering, forward
// estimation from put-call parity, conversion to (m, tau, implied vol)
// points, and the train/test day split.

namespace ivsurf::data {

enum class OptionType { call, put };

struct Quote {
    Date trade_date{};
    Date expiry_date{};
    OptionType type = OptionType::call;
    double strike = 0.0;
    double bid = 0.0;
    double ask = 0.0;
    double spot = 0.0; // underlying close on the trade date
    double rate = 0.0; // continuously compounded annual rate for this expiry

    double mid() const { return 0.5 * (bid + ask); }
    double tau() const { return year_fraction(trade_date, expiry_date); }
    double discount() const;
};

// Filter thresholds.
inline constexpr double kMinMid = 0.375;    // 3/8 currency units: below this the
                                            // tick grid dominates the quote
inline constexpr long kMinMaturityDays = 2; // same-day and next-day expiries carry
                                            // settlement noise, not vol information

// --- loading ---------------------------------------------------------------

struct RowError {
    std::size_t line = 0; // 1-based line number in the file
    std::string reason;
};

struct LoadResult {
    std::vector<Quote> quotes;
    std::vector<RowError> rejected_rows; // parseable but invalid rows
};

// CSV format, one quote per row:
//   trade_date,expiry_date,type,strike,bid,ask,spot,rate
// Dates are YYYY-MM-DD, type is "call" or "put".  Structurally malformed
// input (bad header, wrong field count, unparsable numbers or dates) throws
// ParseError with the line number; rows that parse but violate basic sanity
// (bid < 0, ask < bid, strike/spot <= 0, expiry not after trade date) are
// returned in `rejected_rows` instead.  Throws IoError when the file cannot
// be read.
LoadResult load_quotes(const std::filesystem::path& path);
LoadResult parse_quotes_csv(std::istream& in);

void write_quotes_csv(const std::filesystem::path& path, std::span<const Quote> quotes);

// --- filtering ---------------------------------------------------------------

enum class RejectRule { tick_size, maturity, in_the_money };
std::string_view reject_rule_name(RejectRule rule);

struct RejectedQuote {
    std::size_t source = 0; // index into the input span
    RejectRule rule = RejectRule::tick_size;
};

struct FilterResult {
    std::vector<Quote> kept;
    std::vector<std::size_t> kept_source; // index into the input span, parallel to kept
    std::vector<RejectedQuote> rejected;
};

// Forward estimate for one (trade date, expiry) group.  Parity-based when the
// group has at least one call/put pair at a common strike (the pair with the
// smallest |C - P| wins, ties to the lower strike); otherwise the carry
// fallback F = spot * exp(rate * tau).
struct ForwardEstimate {
    double forward = 0.0;
    bool from_parity = false;
};

using ExpiryKey = std::pair<Date, Date>; // (trade date, expiry date)

std::map<ExpiryKey, ForwardEstimate> estimate_forwards(std::span<const Quote> quotes);

// Drops, in order: quotes with mid < kMinMid (tick-size rule), quotes expiring
// in under kMinMaturityDays calendar days (maturity rule), and in-the-money
// quotes, i.e. calls with strike < forward and puts with strike > forward
// (at-the-forward quotes survive).  Each rejection is tagged with the first
// rule that caught it; kept and rejected partition the input.
FilterResult filter_quotes(std::span<const Quote> quotes);

// --- preparation -------------------------------------------------------------

struct PreparedPoint {
    double m = 0.0;       // log(strike / forward)
    double tau = 0.0;     // calendar days / 365
    double v = 0.0;       // Black-Scholes implied volatility of the mid price
    double mid = 0.0;     // quoted mid, currency units
    double forward = 0.0; // forward used for m
    std::size_t source = 0; // index into the input span
};

// Everything price_mape needs to reprice a point besides (m, tau, forward).
struct PriceContext {
    double discount = 1.0; // e^(-rate * tau)
    bool is_call = true;
};

struct InversionFailure {
    std::size_t source = 0;
    std::string reason;
};

struct PreparedQuotes {
    std::vector<PreparedPoint> points;
    std::vector<PriceContext> contexts; // parallel to points
    std::vector<InversionFailure> failures;
    std::map<ExpiryKey, ForwardEstimate> forwards;

    losses::DataBatch batch() const;
};

// Converts filtered quotes to implied-vol observations.  Put mids are mapped
// to normalized call prices through parity before inversion, so every point
// lives in one price space.  Quotes whose mid violates the no-arbitrage band
// or defeats the inverter are reported in `failures`, not thrown.
PreparedQuotes prepare_points(std::span<const Quote> quotes);

void write_prepared_csv(const std::filesystem::path& path, std::span<const Quote> quotes,
                        const PreparedQuotes& prepared);

// --- splitting ---------------------------------------------------------------

struct SplitResult {
    losses::DataBatch train;
    losses::DataBatch test;
    std::vector<std::size_t> train_indices; // into the points span
    std::vector<std::size_t> test_indices;
};

// Seeded shuffle split: round(fraction * n) points go to train, the rest to
// test; the two sides partition the input exactly.  Requires n >= 2 and
// fraction strictly inside (0, 1) such that both sides are nonempty.
SplitResult split_day(std::span<const PreparedPoint> points, double fraction, std::uint64_t seed);

} // namespace ivsurf::data
