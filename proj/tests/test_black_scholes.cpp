#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ivsurf/black_scholes.hpp"
#include "ivsurf/errors.hpp"
#include "ivsurf/rng.hpp"

using namespace ivsurf;

TEST_CASE("standard normal pdf and cdf match high-precision references") {
    const bs::NormalEval at_zero = bs::std_normal(0.0);
    CHECK(at_zero.pdf == doctest::Approx(0.39894228040143267794).epsilon(1e-15));
    CHECK(at_zero.cdf == doctest::Approx(0.5).epsilon(1e-15));

    CHECK(bs::norm_cdf(0.1) == doctest::Approx(0.53982783727702898147).epsilon(1e-13));
    CHECK(bs::norm_cdf(-0.1) == doctest::Approx(0.46017216272297101853).epsilon(1e-13));
    CHECK(bs::norm_cdf(2.0) == doctest::Approx(0.9772498680518207928).epsilon(1e-13));
    CHECK(bs::norm_pdf(-0.1) == doctest::Approx(0.39695254747701176551).epsilon(1e-14));

    // Far left tail: erfc keeps full relative accuracy where 1 - erf would
    // cancel to nothing.
    CHECK(bs::norm_cdf(-8.0) == doctest::Approx(6.2209605742717841235e-16).epsilon(1e-12));
}

TEST_CASE("normal cdf symmetry and monotonicity") {
    Rng rng(11);
    double prev = bs::norm_cdf(-10.0);
    for (int i = 0; i < 200; ++i) {
        const double x = rng.uniform(-8.0, 8.0);
        CHECK(bs::norm_cdf(x) + bs::norm_cdf(-x) == doctest::Approx(1.0).epsilon(1e-12));
    }
    // Strict growth is only representable while 1 - cdf clears the double
    // spacing below 1 (x ~ 8); past that the cdf may round onto 1 exactly.
    for (double x = -9.5; x <= 8.0; x += 0.25) {
        const double c = bs::norm_cdf(x);
        CHECK(c > prev);
        prev = c;
    }
    for (double x = 8.25; x <= 9.5; x += 0.25) {
        const double c = bs::norm_cdf(x);
        CHECK(c >= prev);
        CHECK(c <= 1.0);
        prev = c;
    }
}

TEST_CASE("std_normal rejects non-finite input") {
    CHECK_THROWS_AS(bs::std_normal(std::numeric_limits<double>::quiet_NaN()), std::domain_error);
    CHECK_THROWS_AS(bs::std_normal(std::numeric_limits<double>::infinity()), std::domain_error);
}

TEST_CASE("d_pair closed form and consistency") {
    const bs::DPair atm = bs::d_pair(0.0, 1.0, 0.2);
    CHECK(atm.d_plus == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(atm.d_minus == doctest::Approx(-0.1).epsilon(1e-15));

    const bs::DPair atm_long = bs::d_pair(0.0, 4.0, 0.3);
    CHECK(atm_long.d_plus == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(atm_long.d_minus == doctest::Approx(-0.3).epsilon(1e-14));

    const bs::DPair skewed = bs::d_pair(0.5, 1.0, 0.2);
    CHECK(skewed.d_plus == doctest::Approx(-2.4).epsilon(1e-14));
    CHECK(skewed.d_minus == doctest::Approx(-2.6).epsilon(1e-14));

    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const double m = rng.uniform(-3.0, 3.0);
        const double tau = rng.uniform(0.002, 3.0);
        const double vol = rng.uniform(0.01, 2.0);
        const bs::DPair d = bs::d_pair(m, tau, vol);
        // The identity d+ - d- = vol sqrt(tau) cancels two terms of size
        // |m| / (vol sqrt(tau)), so the achievable accuracy scales with them.
        const double scale = std::max(1.0, std::abs(d.d_plus) + std::abs(d.d_minus));
        CHECK(std::abs((d.d_plus - d.d_minus) - std::sqrt(tau) * vol) <= 1e-13 * scale);
    }

    CHECK_THROWS_AS(bs::d_pair(0.0, 0.0, 0.2), std::domain_error);
    CHECK_THROWS_AS(bs::d_pair(0.0, -1.0, 0.2), std::domain_error);
    CHECK_THROWS_AS(bs::d_pair(0.0, 1.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(bs::d_pair(0.0, 1.0, -0.2), std::domain_error);
}

TEST_CASE("normalized call price matches reference values") {
    CHECK(bs::call_forward(0.0, 1.0, 0.2) ==
          doctest::Approx(0.079655674554057962931).epsilon(1e-14));
    CHECK(bs::call_forward(0.5, 2.0, 0.35) ==
          doctest::Approx(0.050934216735843196861).epsilon(1e-13));
    CHECK(bs::call_forward(-1.0, 0.5, 0.4) ==
          doctest::Approx(0.63212918667406128565).epsilon(1e-13));
    CHECK(bs::call_forward(1.0, 0.25, 0.6) ==
          doctest::Approx(5.4887496446129393501e-05).epsilon(1e-11));
}

TEST_CASE("normalized call price limits and band containment") {
    // Deep in-the-money call collapses to intrinsic value.
    CHECK(bs::call_forward(-30.0, 1.0, 0.2) ==
          doctest::Approx(1.0 - std::exp(-30.0)).epsilon(1e-12));
    // At-the-money call is worthless as vol vanishes.
    CHECK(bs::call_forward(0.0, 1.0, 1e-6) < 1e-6);

    // Containment holds everywhere; strict interiority is only representable
    // away from the deep tails, where the price rounds onto the band edge.
    Rng rng(5);
    int interior = 0;
    for (int i = 0; i < 500; ++i) {
        const double m = rng.uniform(-3.0, 3.0);
        const double tau = rng.uniform(0.002, 3.0);
        const double vol = rng.uniform(0.01, 2.0);
        const double price = bs::call_forward(m, tau, vol);
        const bs::Band band = bs::price_band(m);
        CHECK(price >= band.lower);
        CHECK(price <= band.upper);
        if (price - band.lower > 1e-12 && band.upper - price > 1e-12) ++interior;
    }
    CHECK(interior > 400);
}

TEST_CASE("normalized call price is strictly increasing in vol") {
    // Strictly increasing wherever the slope (vega) is representable; deep
    // in-the-money short-tau prices sit on 1 - e^m with vega underflowed, and
    // there equality is the correct double-precision answer.
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const double m = rng.uniform(-3.0, 1.0);
        const double tau = rng.uniform(0.01, 3.0);
        double prev = bs::call_forward(m, tau, 0.05);
        for (double vol = 0.1; vol <= 1.5; vol += 0.05) {
            const double price = bs::call_forward(m, tau, vol);
            CHECK(price >= prev);
            if (bs::vega_forward(m, tau, vol - 0.025) > 1e-12) CHECK(price > prev);
            prev = price;
        }
    }
}

TEST_CASE("vega matches a finite difference of the price") {
    Rng rng(13);
    for (int i = 0; i < 200; ++i) {
        const double m = rng.uniform(-2.0, 1.0);
        const double tau = rng.uniform(0.01, 3.0);
        const double vol = rng.uniform(0.05, 1.5);
        const double h = 1e-6;
        const double fd =
            (bs::call_forward(m, tau, vol + h) - bs::call_forward(m, tau, vol - h)) / (2.0 * h);
        CHECK(bs::vega_forward(m, tau, vol) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("implied vol inverts the reference price") {
    CHECK(bs::implied_vol(0.079655674554057962931, 0.0, 1.0) ==
          doctest::Approx(0.2).epsilon(1e-10));
}

TEST_CASE("implied vol round trip over random valid triples") {
    Rng rng(17);
    int tested = 0;
    while (tested < 1000) {
        const double m = rng.uniform(-3.0, 1.0);
        const double tau = rng.uniform(0.002, 3.0);
        const double vol = rng.uniform(0.05, 2.0);
        const double price = bs::call_forward(m, tau, vol);
        const bs::Band band = bs::price_band(m);
        // Skip corners where the price hugs a band edge or the vega dies;
        // there the price carries no recoverable vol information.
        if (price - band.lower < 1e-12 || band.upper - price < 1e-12 ||
            bs::vega_forward(m, tau, vol) < 1e-6) {
            continue;
        }
        const double recovered = bs::implied_vol(price, m, tau);
        CHECK(std::abs(recovered - vol) <= 1e-8);
        ++tested;
    }
}

TEST_CASE("implied vol rejects prices outside the no-arbitrage band") {
    CHECK_THROWS_AS(bs::implied_vol(1.5, 0.0, 1.0), ArbitrageViolation);
    CHECK_THROWS_AS(bs::implied_vol(1.0, 0.0, 1.0), ArbitrageViolation);
    CHECK_THROWS_AS(bs::implied_vol(0.0, 0.0, 1.0), ArbitrageViolation);
    // Below intrinsic value of an in-the-money call.
    CHECK_THROWS_AS(bs::implied_vol(0.5 * (1.0 - std::exp(-1.0)), -1.0, 1.0),
                    ArbitrageViolation);
}

TEST_CASE("parity forward arithmetic") {
    CHECK(bs::forward_from_parity(10.0, 5.0, 100.0, 1.0) == doctest::Approx(105.0));
    CHECK(bs::forward_from_parity(5.0, 10.0, 100.0, 0.5) == doctest::Approx(90.0));
    CHECK(bs::forward_from_parity(7.25, 7.25, 123.0, 0.97) == doctest::Approx(123.0));

    CHECK_THROWS_AS(bs::forward_from_parity(10.0, 5.0, 0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(bs::forward_from_parity(10.0, 5.0, 100.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(bs::forward_from_parity(10.0, 5.0, -2.0, 0.5), std::domain_error);
}
