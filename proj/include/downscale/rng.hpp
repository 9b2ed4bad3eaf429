#pragma once

#include <cstdint>
#include <cmath>

namespace downscale {

// Counter-based splitmix64 stream. Self-contained so that draw sequences are
// bit-stable across compilers and standard libraries; every reproducibility
// contract in this project rests on that.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller. Two uniforms per draw, no caching, so
    // the i-th normal always consumes the (2i, 2i+1)-th raw words.
    double normal() {
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

private:
    uint64_t state_;
};

// Derives the stream seed for member k of a family rooted at base.
// Scheme: splitmix64(splitmix64(base) + k). splitmix64 is a bijection on
// 64-bit words, so distinct k give distinct seeds.
inline uint64_t child_seed(uint64_t base, uint64_t k) {
    auto mix = [](uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    };
    return mix(mix(base) + k);
}

}  // namespace downscale
