#pragma once

#include <cstdint>

namespace v6recon {

/// splitmix64: small, fully specified generator so seeded results are the
/// same on every platform and standard library.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(uint64_t seed) : state_{seed} {}

    constexpr uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        return mix(z);
    }

    /// Uniform in [0, 1) from the top 53 bits.
    constexpr double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [0, bound) by rejection; bound > 0.
    constexpr uint64_t below(uint64_t bound) {
        uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        while (true) {
            uint64_t v = next();
            if (v < limit) {
                return v % bound;
            }
        }
    }

    static constexpr uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    uint64_t state_;
};

/// Stateless keyed draw: the same (seed, a, b) always gives the same value.
constexpr uint64_t keyed_draw(uint64_t seed, uint64_t a, uint64_t b) {
    return SplitMix64::mix(SplitMix64::mix(seed ^ SplitMix64::mix(a + 0x632be59bd9b4e019ULL)) ^ b);
}

constexpr double keyed_uniform(uint64_t seed, uint64_t a, uint64_t b) {
    return static_cast<double>(keyed_draw(seed, a, b) >> 11) * 0x1.0p-53;
}

}  // namespace v6recon
