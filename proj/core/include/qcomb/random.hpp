#pragma once

#include <cmath>
#include <cstdint>

#include "qcomb/units.hpp"

// Deterministic random numbers. std::* distributions are implementation
// defined, so the generator (xoshiro256++), the seeding expansion
// (splitmix64) and every sampler are pinned here; identical seeds must
// yield identical byte streams on any platform.

namespace qcomb::rng {

struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

// Stable sub-seed derivation so concurrent event streams stay independent
// while the whole simulation is reproducible from one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_id) {
    SplitMix64 sm(master ^ (0x6a09e667f3bcc909ULL + stream_id * 0x3c6ef372fe94f82bULL));
    std::uint64_t s = sm.next();
    return s ^ sm.next();
}

class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& w : s_) w = sm.next();
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // (0, 1], safe as a log() argument.
    double uniform01_open_low() {
        return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
    }

    double exponential(double mean) { return -mean * std::log(uniform01_open_low()); }

    double laplace(double scale) {
        // Inverse CDF on u in (-1/2, 1/2].
        double u = uniform01_open_low() - 0.5;
        return u < 0.0 ? scale * std::log1p(2.0 * u) : -scale * std::log1p(-2.0 * u);
    }

    double normal(double sigma) {
        // Box-Muller, cosine branch only: one value per two uniforms keeps
        // the draw count per event fixed (no hidden cache state).
        double u1 = uniform01_open_low();
        double u2 = uniform01();
        return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * units::pi * u2);
    }

    // Small-mean Poisson via inversion; means here are O(1) per draw.
    std::uint64_t poisson(double mean);

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
};

inline std::uint64_t Xoshiro256pp::poisson(double mean) {
    if (!(mean >= 0.0)) return 0;
    if (mean < 30.0) {
        double l = std::exp(-mean);
        std::uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform01_open_low();
        } while (p > l);
        return k - 1;
    }
    // Normal approximation with continuity correction; used only for bulk
    // count draws where mean >> 30 and the approximation error is far
    // below shot noise.
    double v = std::floor(mean + std::sqrt(mean) * normal(1.0) + 0.5);
    return v < 0.0 ? 0 : static_cast<std::uint64_t>(v);
}

}  // namespace qcomb::rng
