#pragma once

#include <cstdint>

namespace defectmet {

/// SplitMix64 (Steele, Lea & Flood; the java.util.SplittableRandom
/// finalizer). Pinned here, constants and all, so every manifest and
/// synthetic dataset reproduces bit-for-bit on any platform. State
/// advances by the 64-bit golden-ratio increment; each output is an
/// avalanching mix of the counter.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Unbiased integer in [0, bound) by rejection: redraw while the raw
    /// draw falls in the short leading remainder of 2^64 mod bound.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t min = (0 - bound) % bound;  // 2^64 mod bound
        std::uint64_t x;
        do {
            x = next();
        } while (x < min);
        return x % bound;
    }

    /// Uniform double in [0, 1) from the top 53 bits.
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

}  // namespace defectmet
