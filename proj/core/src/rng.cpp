#include "ivsurf/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ivsurf {

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // 1 - uniform01() lies in (0, 1], so the log is finite.
    const double r = std::sqrt(-2.0 * std::log(1.0 - uniform01()));
    const double a = 2.0 * std::numbers::pi * uniform01();
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

double Rng::truncated_normal(double mean, double sd, double lo, double hi) {
    if (!(lo < hi) || !(sd > 0.0)) {
        throw std::domain_error("truncated_normal: need lo < hi and sd > 0");
    }
    for (int attempt = 0; attempt < 100000; ++attempt) {
        const double x = normal(mean, sd);
        if (x >= lo && x <= hi) {
            return x;
        }
    }
    // Unreachable for any window with non-negligible mass; guards against a
    // caller passing an interval many standard deviations away from the mean.
    throw std::domain_error("truncated_normal: acceptance region has negligible mass");
}

} // namespace ivsurf
