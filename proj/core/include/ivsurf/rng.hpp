#pragma once

#include <cstdint>
#include <random>

namespace ivsurf {

// Seeded random source with hand-rolled distribution transforms.
//
// The raw engine is std::mt19937_64, whose output sequence is fixed by the
// standard.  The distribution transforms are implemented here rather than
// taken from <random> because the standard leaves std::uniform_real_distribution
// and friends implementation-defined, and reproducibility across toolchains is
// a hard requirement for this library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 bits of resolution.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform on [lo, hi).  Requires lo < hi.
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Standard normal via Box-Muller.  Both transform outputs are consumed in
    // a fixed order, so the stream is reproducible call-by-call.
    double normal();

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Normal(mean, sd) conditioned on [lo, hi] by rejection.
    // Requires lo < hi and a nondegenerate overlap with the distribution.
    double truncated_normal(double mean, double sd, double lo, double hi);

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace ivsurf
