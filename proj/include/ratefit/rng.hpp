#pragma once

#include <cmath>
#include <cstdint>

#include "ratefit/units.hpp"

namespace ratefit {

// Deterministic splittable generator. Every consumer derives a child stream
// from (seed, stream index), so parallel and serial generation of an ensemble
// produce identical draws. The core is SplitMix64, which is stable across
// platforms; no <random> distributions are used because their output is
// implementation-defined.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : state_(seed) {
        // Decorrelate trivially related seeds (0, 1, 2, ...).
        next_u64();
        next_u64();
    }

    /// Child stream for substream `index`; independent of draws made here.
    RandomStream fork(std::uint64_t index) const {
        return RandomStream(mix(state_ ^ 0x9e3779b97f4a7c15ULL, index));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on (0, 1), never exactly 0 or 1.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no caching,
    /// so the draw sequence is a pure function of the stream position).
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace ratefit
