#pragma once

// Forward-normalized Black-Scholes pricing and inversion.
//
// All prices here are undiscounted call prices divided by the forward, and
// strikes enter through log-forward moneyness m = log(K / F).  In these
// coordinates the call price depends only on (m, tau, vol) and the
// no-arbitrage band is (max(0, 1 - e^m), 1).

namespace ivsurf::bs {

struct NormalEval {
    double pdf;
    double cdf;
};

// Standard normal density and distribution function at x.
// The cdf is computed from erfc, which stays accurate in the far left tail
// where 1 - erf(x) would cancel.  Throws std::domain_error on non-finite x.
NormalEval std_normal(double x);

double norm_pdf(double x);
double norm_cdf(double x);

struct DPair {
    double d_plus;
    double d_minus;
};

// d_{+,-} = -m / (v sqrt(tau)) +- v sqrt(tau) / 2.
// Requires tau > 0 and vol > 0; d_plus - d_minus == vol * sqrt(tau).
DPair d_pair(double m, double tau, double vol);

// Forward-normalized call price N(d+) - e^m N(d-).
// Requires tau > 0 and vol > 0, m finite.
double call_forward(double m, double tau, double vol);

// Sensitivity of call_forward to vol: n(d+) sqrt(tau).
double vega_forward(double m, double tau, double vol);

struct Band {
    double lower; // max(0, 1 - e^m)
    double upper; // 1
};

// Static no-arbitrage band for the normalized call price at moneyness m.
Band price_band(double m);

// Volatility search window used by the inverter.
inline constexpr double kVolLo = 1e-6;
inline constexpr double kVolHi = 10.0;

// Inverts call_forward for vol at fixed (m, tau).
//
// Bisection on [kVolLo, kVolHi] followed by a Newton polish; converges to
// |price(vol) - price| <= 1e-10 (price is monotone increasing in vol, so the
// root is unique).  Throws ArbitrageViolation when `price_norm` lies outside
// the open band (price_band(m).lower, 1), and ConvergenceError if the
// iteration budget runs out, which only happens when the target price is
// unattainable inside the search window.
double implied_vol(double price_norm, double m, double tau);

// Forward estimate from a call/put pair at a common strike:
// F = K + (C - P) / discount.  Requires strike > 0 and discount > 0.
double forward_from_parity(double call_mid, double put_mid, double strike, double discount);

} // namespace ivsurf::bs
