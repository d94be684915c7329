#pragma once

#include <cstdint>
#include <cmath>

namespace arfc {

// ─── Counter-based RNG ────────────────────────────────────────
// Stateless mixing of (seed, 128-bit counter) so every draw is a
// pure function of position in the stream. Identical seed + call
// sequence gives identical output on every platform, and masks
// (dropout views, solution rows) are replayable by counter.
struct Rng {
    uint64_t seed = 0;
    uint64_t ctr_lo = 0;
    uint64_t ctr_hi = 0;

    explicit Rng(uint64_t s = 0) : seed(s) {}

    static uint64_t mix(uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    uint64_t next_u64() {
        uint64_t v = mix(seed ^ mix(ctr_lo ^ mix(ctr_hi)));
        if (++ctr_lo == 0) ++ctr_hi;
        return v;
    }

    // uniform in (0,1): never returns exactly 0 (safe for log())
    double uniform() {
        return (next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, two uniforms per call (no cached spare so the
    // counter position fully determines every draw)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Marsaglia-Tsang; boosted for shape < 1
    double gamma(double shape) {
        if (shape < 1.0) {
            double u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double beta(double a, double b) {
        double x = gamma(a);
        double y = gamma(b);
        return x / (x + y);
    }

    // Fisher-Yates over [0, n)
    template <class Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = next_u64() % i;
            auto tmp = v[i - 1];
            v[i - 1] = v[j];
            v[j] = tmp;
        }
    }
};

} // namespace arfc
