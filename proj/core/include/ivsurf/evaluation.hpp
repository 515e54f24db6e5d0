#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ivsurf/constraints.hpp"
#include "ivsurf/data.hpp"
#include "ivsurf/dates.hpp"
#include "ivsurf/surface.hpp"

// Out-of-library views of a fitted surface: percentage-error metrics in vol
// and price space, calendar-quarter aggregation, grid exports for plotting,
// and the risk-neutral density implied by the surface's call prices.

namespace ivsurf::eval {

// Mean absolute percentage error in percent: (100/N) sum |t - p| / t.
// Requires equal, nonzero lengths and strictly positive truth values;
// violations throw std::domain_error.
double mape(std::span<const double> truth, std::span<const double> predicted);

// Reprices every point with the surface's volatility (puts through parity)
// and returns the MAPE against the quoted mids, in percent.  `points` and
// `contexts` must be parallel and nonempty.
double price_mape(const Surface& surface, std::span<const data::PreparedPoint> points,
                  std::span<const data::PriceContext> contexts);

// --- calendar aggregation ----------------------------------------------------

struct DatedValue {
    Date date{};
    double value = 0.0;
};

struct QuarterMean {
    std::string quarter; // e.g. "2019Q3"
    double mean = 0.0;
    std::size_t n = 0; // observations in the quarter
};

// Groups by calendar quarter of the date and averages, returned in
// chronological order.  Throws std::domain_error on an empty series.
std::vector<QuarterMean> quarterly(std::span<const DatedValue> series);

// --- grid exports --------------------------------------------------------------

// n evenly spaced values from lo to hi inclusive; requires n >= 2 and
// lo < hi.
std::vector<double> linspace(double lo, double hi, std::size_t n);

struct GridRow {
    double m = 0.0;
    double tau = 0.0;
    double v = 0.0;
};

// Evaluates the surface on a uniform n_m x n_tau grid, returned row-major
// with m as the outer loop.  Requires n_m, n_tau >= 2 and nonempty ranges.
std::vector<GridRow> surface_grid(const Surface& surface, double m_lo, double m_hi,
                                  double tau_lo, double tau_hi, std::size_t n_m,
                                  std::size_t n_tau);

// Tab-separated rendering (header m/tau/v, 12 significant digits).
std::string grid_to_tsv(std::span<const GridRow> rows);

// --- risk-neutral density ------------------------------------------------------

// Minimum grid resolution accepted by rn_density; coarser grids make the
// finite-difference convexity estimate unreliable.
inline constexpr std::size_t kDensityMinPoints = 201;

struct DensitySample {
    double x = 0.0;       // log return relative to the forward
    double density = 0.0; // risk-neutral density at x
};

struct DensityResult {
    std::vector<DensitySample> samples; // interior grid points, x ascending
    double integral = 0.0;              // trapezoid integral over the samples
    double min_density = 0.0;           // most negative value seen (>= 0 when clean)

    // Tab-separated rendering (header x/density, 12 significant digits).
    std::string to_tsv() const;
};

// Extracts the risk-neutral density of the log return x = log(S_T / F) from
// the surface's normalized call prices c(m) = C/F at fixed tau:
//
//   q(x) = e^{-x} (c''(x) - c'(x))
//
// with both derivatives taken by central differences on the provided m-grid,
// which must be uniform, have at least kDensityMinPoints points and span
// [-1.5, 1].  The result covers the grid's interior points.  A clean surface
// integrates to ~1 and stays nonnegative; negative mass localizes exactly
// where the butterfly condition fails.  Throws std::domain_error on a grid
// that is too coarse, non-uniform, unsorted or too narrow, or when tau <= 0.
DensityResult rn_density(const Surface& surface, double tau, std::span<const double> m_grid);

// --- split-level report ----------------------------------------------------------

struct SplitMetrics {
    double iv_mape_train = 0.0;
    double iv_mape_test = 0.0;
    double price_mape_train = 0.0;
    double price_mape_test = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
};

struct DayMetrics {
    Date trade_date{};
    SplitMetrics metrics;
};

struct EvalReport {
    // Unweighted means of the per-day MAPEs; n_train/n_test are totals.
    SplitMetrics overall;
    std::vector<DayMetrics> days; // chronological
    std::vector<QuarterMean> iv_train_quarters;
    std::vector<QuarterMean> iv_test_quarters;
    std::vector<QuarterMean> price_train_quarters;
    std::vector<QuarterMean> price_test_quarters;
    constraints::ViolationReport violation;

    std::string to_json() const;
};

// Scores one surface against a quote history: per trade day, the quotes are
// filtered, prepared and split exactly as in training (same fraction and
// seed), then IV and price MAPEs are computed on both sides of the split.
// Days with fewer than two usable points are skipped.  The surface is also
// audited on fresh uniform core and wings grids of `audit_points` points
// each.  Throws InsufficientData when no day is usable, std::domain_error
// when audit_points == 0.
EvalReport evaluate(const Surface& surface, std::span<const data::Quote> quotes,
                    double split_fraction, std::uint64_t seed, std::size_t audit_points = 2000);

} // namespace ivsurf::eval
