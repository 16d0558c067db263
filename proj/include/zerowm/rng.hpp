#pragma once

#include <cmath>
#include <cstdint>

namespace zw {

// splitmix64 finalizer; the basis for both the sequential and the
// counter-based generators so results are stable across platforms.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return mix64(a ^ (mix64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// Stateless counter-based draws: a pure function of (seed, counter).
inline uint64_t stateless_u64(uint64_t seed, uint64_t counter) {
    return mix64(seed ^ mix64(counter + 0x632be59bd9b4e019ULL));
}

// Uniform in [0,1) with 53 random bits.
inline double stateless_unit(uint64_t seed, uint64_t counter) {
    return static_cast<double>(stateless_u64(seed, counter) >> 11) * 0x1.0p-53;
}

// Sequential generator for sampling-style code paths.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0,1)
    double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    // inclusive on both ends
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    bool bernoulli(double p) { return unit() < p; }

    // Box-Muller; draws two uniforms per call, no cached spare.
    double normal() {
        double u1 = unit();
        double u2 = unit();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Truncated at two standard deviations, the usual transformer init.
    double truncated_normal(double sigma) {
        for (;;) {
            double v = normal();
            if (std::fabs(v) <= 2.0) return v * sigma;
        }
    }

private:
    uint64_t state_;
};

}  // namespace zw
