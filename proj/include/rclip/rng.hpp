#pragma once

#include <cmath>
#include <cstdint>

#include "rclip/hash.hpp"

namespace rclip {

// Deterministic splitmix64-based generator. std:: distributions are
// implementation-defined, so all draws are spelled out here; outputs are
// identical across platforms and compilers.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Unbiased draw in [0, bound). bound must be > 0.
    uint64_t below(uint64_t bound) {
        const uint64_t threshold = -bound % bound;  // 2^64 mod bound
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // [0, 1) with 53 bits
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Box-Muller, no cached second value; two u64 draws per call.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Independent substream keyed by a label; the parent is not advanced.
    Rng fork(std::string_view label) const {
        return Rng(hash_mix(state_, fnv1a64(label)));
    }
    Rng fork(uint64_t n) const { return Rng(hash_mix(state_, n)); }

    uint64_t state() const { return state_; }

  private:
    uint64_t state_;
};

// Fisher-Yates over indices [0, n).
template <typename Container>
void shuffle(Container& xs, Rng& rng) {
    for (size_t i = xs.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.below(i));
        std::swap(xs[i - 1], xs[j]);
    }
}

}  // namespace rclip
