#include "ivsurf/black_scholes.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ivsurf/errors.hpp"

namespace ivsurf::bs {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461; // 1 / sqrt(2 pi)
constexpr double kInvSqrt2 = 0.7071067811865475244008444;   // 1 / sqrt(2)

void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) {
        throw std::domain_error(std::string("non-finite ") + what);
    }
}

void require_positive(double x, const char* what) {
    require_finite(x, what);
    if (!(x > 0.0)) {
        throw std::domain_error(std::string(what) + " must be positive");
    }
}

} // namespace

NormalEval std_normal(double x) {
    require_finite(x, "normal argument");
    return {kInvSqrt2Pi * std::exp(-0.5 * x * x), 0.5 * std::erfc(-x * kInvSqrt2)};
}

double norm_pdf(double x) {
    require_finite(x, "normal argument");
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double norm_cdf(double x) {
    require_finite(x, "normal argument");
    return 0.5 * std::erfc(-x * kInvSqrt2);
}

DPair d_pair(double m, double tau, double vol) {
    require_finite(m, "moneyness");
    require_positive(tau, "tau");
    require_positive(vol, "vol");
    const double total = vol * std::sqrt(tau); // total volatility over the horizon
    return {-m / total + 0.5 * total, -m / total - 0.5 * total};
}

double call_forward(double m, double tau, double vol) {
    const auto [d_plus, d_minus] = d_pair(m, tau, vol);
    return norm_cdf(d_plus) - std::exp(m) * norm_cdf(d_minus);
}

double vega_forward(double m, double tau, double vol) {
    const auto [d_plus, d_minus] = d_pair(m, tau, vol);
    (void)d_minus;
    return norm_pdf(d_plus) * std::sqrt(tau);
}

Band price_band(double m) {
    require_finite(m, "moneyness");
    return {std::max(0.0, 1.0 - std::exp(m)), 1.0};
}

double implied_vol(double price_norm, double m, double tau) {
    require_finite(price_norm, "price");
    require_finite(m, "moneyness");
    require_positive(tau, "tau");

    const Band band = price_band(m);
    if (!(price_norm > band.lower) || !(price_norm < band.upper)) {
        throw ArbitrageViolation("normalized call price " + std::to_string(price_norm) +
                                 " at m=" + std::to_string(m) + " lies outside the band (" +
                                 std::to_string(band.lower) + ", 1)");
    }

    // Bisection: price is strictly increasing in vol, so the bracket is valid
    // whenever the target is attainable inside [kVolLo, kVolHi].
    double lo = kVolLo;
    double hi = kVolHi;
    if (call_forward(m, tau, lo) > price_norm) {
        // Below the price floor of the smallest vol we can represent: the
        // root exists mathematically but not inside the search window.
        throw ConvergenceError("implied vol below search window at m=" + std::to_string(m));
    }
    if (call_forward(m, tau, hi) < price_norm) {
        throw ConvergenceError("implied vol above search window at m=" + std::to_string(m));
    }

    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        mid = 0.5 * (lo + hi);
        if (call_forward(m, tau, mid) < price_norm) {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // Newton polish from the bisection estimate.  Near-zero vega (far wings)
    // is handled by falling back to the bisection midpoint, whose bracket is
    // already ~1e-28 wide after 100 halvings.
    constexpr double kPriceTol = 1e-10;
    double vol = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        const double diff = call_forward(m, tau, vol) - price_norm;
        if (std::abs(diff) <= kPriceTol) {
            return vol;
        }
        const double vega = vega_forward(m, tau, vol);
        if (!(vega > 0.0)) {
            break;
        }
        double next = vol - diff / vega;
        if (next <= lo || next >= hi) {
            next = 0.5 * (lo + hi); // keep the iterate inside the bracket
        }
        vol = next;
    }
    if (std::abs(call_forward(m, tau, vol) - price_norm) <= kPriceTol) {
        return vol;
    }
    throw ConvergenceError("implied vol iteration did not reach tolerance at m=" +
                           std::to_string(m) + ", tau=" + std::to_string(tau));
}

double forward_from_parity(double call_mid, double put_mid, double strike, double discount) {
    require_finite(call_mid, "call price");
    require_finite(put_mid, "put price");
    require_positive(strike, "strike");
    require_positive(discount, "discount factor");
    return strike + (call_mid - put_mid) / discount;
}

} // namespace ivsurf::bs
