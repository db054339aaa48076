#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dualvgr {

// mt19937_64 with hand-pinned output transforms. The standard distribution
// classes are implementation-defined, so uniform/gaussian draws are derived
// here directly from the raw 64-bit stream to keep runs reproducible across
// process restarts and toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // [0, 1) with 53-bit resolution.
    double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    // Box-Muller, no cached spare so the draw sequence has no hidden state.
    double gauss() {
        double u1 = unit();
        double u2 = unit();
        while (u1 <= 0.0) u1 = unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = gen_();
        while (x >= limit) x = gen_();
        return x % n;
    }

    int range(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    uint64_t raw() { return gen_(); }

    // Derive an independent child stream (e.g. one per video).
    static uint64_t derive(uint64_t seed, uint64_t stream) {
        // splitmix64 over the combined value
        uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace dualvgr
