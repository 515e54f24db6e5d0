#pragma once

// Abstract implied-volatility surface over (m, tau), where m = log(K / F) is
// log-forward moneyness and tau > 0 the year fraction to expiry.

namespace ivsurf {

// Value and the input derivatives needed by the no-arbitrage conditions.
// The same struct doubles as the adjoint seed for parameter gradients: a
// weighted combination  lv*v + lm*dm + lmm*dmm + lt*dtau  is differentiated
// with respect to model parameters by passing (lv, lm, lmm, lt) as a jet.
struct SurfaceJet {
    double v = 0.0;    // vol
    double dm = 0.0;   // d v / d m
    double dmm = 0.0;  // d^2 v / d m^2
    double dtau = 0.0; // d v / d tau
};

class Surface {
public:
    virtual ~Surface() = default;

    // Implied volatility at (m, tau).  Requires tau > 0.
    virtual double value(double m, double tau) const = 0;

    // Value plus analytic first/second moneyness and first maturity
    // derivatives.  jet(m, tau).v == value(m, tau) exactly.
    virtual SurfaceJet jet(double m, double tau) const = 0;
};

} // namespace ivsurf
