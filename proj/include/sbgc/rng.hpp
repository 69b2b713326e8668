#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "sbgc/common.hpp"

namespace sbgc {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from a root seed and a label path.
// Streams used for different purposes (batch draws, noise, probes, ...) get
// distinct labels so adding consumers never perturbs existing streams.
inline uint64_t derive_seed(uint64_t root, std::initializer_list<uint64_t> labels) {
    uint64_t s = root ^ 0x6a09e667f3bcc909ULL;
    for (uint64_t l : labels) {
        s ^= splitmix64(s) + l;
        splitmix64(s);
    }
    return splitmix64(s);
}

// mt19937_64 with hand-rolled double conversions so that streams are stable
// across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; caches the second variate.
    double normal() {
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cache_ = r * std::sin(a);
        has_cache_ = true;
        return r * std::cos(a);
    }

    Vec normal_vec(size_t n) {
        Vec v(n);
        for (auto& x : v) x = normal();
        return v;
    }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        require(n > 0, "uniform_int: n must be positive");
        // rejection sampling keeps the draw exactly uniform
        uint64_t un = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<int>(x % un);
    }

    double rademacher() { return (gen_() & 1ULL) ? 1.0 : -1.0; }

private:
    std::mt19937_64 gen_;
    double cache_ = 0.0;
    bool has_cache_ = false;
};

}  // namespace sbgc
