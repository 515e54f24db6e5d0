#pragma once

#include <stdexcept>
#include <string>

namespace ivsurf {

// An observed or requested option price sits outside the static no-arbitrage
// band, so no implied volatility exists for it.
class ArbitrageViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An iterative root finder or optimizer exhausted its budget without meeting
// its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.  `step` is the iteration at which the
// blow-up was detected; the message carries the per-component breakdown.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, long step)
        : std::runtime_error(what), step(step) {}

    long step;
};

// A file or serialized blob does not conform to its documented format.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A file could not be opened or read.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Too few observations to run a calibration safely.
class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ivsurf
