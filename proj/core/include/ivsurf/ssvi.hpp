#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ivsurf/data.hpp"
#include "ivsurf/dates.hpp"
#include "ivsurf/losses.hpp"
#include "ivsurf/surface.hpp"

// Surface-SVI parametric baseline.  Total implied variance is
//
//   w(m, tau) = theta/2 * (1 + rho f(theta) m
//                            + sqrt((f(theta) m + rho)^2 + 1 - rho^2))
//
// with power-law factor f(theta) = eta * theta^(-lambda) and theta(tau) the
// at-the-money total variance curve, interpolated piecewise-linearly between
// knots and extrapolated flat outside them.  The classic sufficient condition
// eta * (1 + |rho|) <= 2 (for lambda = 1/2) keeps every slice free of
// butterfly arbitrage, and an increasing theta curve rules out calendar
// arbitrage, which is what makes this form a trustworthy data generator and
// calibration baseline.

namespace ivsurf::ssvi {

struct Params {
    std::vector<double> knot_tau;   // strictly increasing, positive
    std::vector<double> knot_theta; // strictly increasing, positive
    double rho = 0.0;               // skew, |rho| < 1
    double eta = 1.0;               // smile level, > 0, eta (1 + |rho|) <= 2
    double lambda = 0.5;            // power-law exponent, in [0, 1]

    // Throws std::domain_error when any invariant above fails.
    void validate() const;
};

// ATM total variance at tau: linear between knots, flat outside.
double theta_at(const Params& p, double tau);

// Total implied variance w(m, tau).
double total_variance(const Params& p, double m, double tau);

// Implied volatility sqrt(w(m, tau) / tau).  Requires tau > 0.
double iv(const Params& p, double m, double tau);

// Surface adapter with analytic derivatives (the tau derivative uses the
// slope of the enclosing knot segment, zero outside the knot range).
class SsviSurface final : public Surface {
public:
    explicit SsviSurface(Params p);

    double value(double m, double tau) const override;
    SurfaceJet jet(double m, double tau) const override;

    const Params& params() const { return params_; }

private:
    Params params_;
};

// Calibrates (rho, eta) and the theta curve to one day of (m, tau, v) points
// with lambda fixed at 1/2.  Nelder-Mead searches (rho, eta) under the
// no-butterfly cap while each candidate's theta knots are refit per maturity
// by a 1-D line search (so theta never lags the smile parameters); the final
// theta curve is projected to be increasing.  Deterministic for a given seed.
// Throws InsufficientData below 20 points.
Params fit(const losses::DataBatch& points, std::uint64_t seed);

// Market conventions for the synthetic-day generator.
struct MarketSpec {
    Date trade_date = Date{std::chrono::year{2020}, std::chrono::month{6}, std::chrono::day{15}};
    double spot = 2000.0;
    double rate = 0.02;
    double spread_frac = 0.01; // full bid/ask width relative to mid
};

struct SynthDay {
    losses::DataBatch truth;       // the (m, tau, v) points behind the quotes
    std::vector<data::Quote> quotes;
};

// Generates a synthetic quote day from an SSVI surface: n_quotes quotes split
// as evenly as possible across the maturities, where each maturity gets a
// call/put pair pinned at the forward (so parity can recover it exactly) and
// out-of-the-money quotes at moneyness drawn from a truncated normal on
// [-3, 1].  Vols are perturbed multiplicatively by lognormal noise of
// standard deviation noise_sd (noise_sd = 0 reproduces the surface exactly),
// and bid/ask straddle the resulting mid by spread_frac.  `truth` carries the
// noisy vols the quotes actually encode.  Requires n_quotes >= 4 per
// maturity and at least one maturity of at least kMinMaturityDays days.
SynthDay synth_market(const Params& p, int n_quotes, std::span<const int> maturity_days,
                      double noise_sd, std::uint64_t seed, const MarketSpec& market = {});

// Generator defaults used by the simulate tool: a gently upward-sloping ATM
// term structure with index-like skew.
Params default_market_params();

} // namespace ivsurf::ssvi
