#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace fedtd {

/// Finalizer of the splitmix64 generator; bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// FNV-1a over a byte string.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Derives an independent stream seed from (master, tag, index). Streams for
/// different tags or indices never collide in practice, so adding agents or
/// cells does not shift draws elsewhere.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index = 0) {
    return mix64(mix64(master ^ fnv1a64(tag)) +
                 index * 0x9E3779B97F4A7C15ULL + 1);
}

/// Counter-based RNG (splitmix64): the state is a counter advanced by a fixed
/// odd constant and each output is a hash of it. One 64-bit word per draw,
/// so the draw count of every consumer is deterministic.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() { return mix64(state_ += 0x9E3779B97F4A7C15ULL); }

    /// Uniform on [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0,1); safe as a log argument.
    double uniform_open() {
        return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) {
        // 53-bit scaling; bias is negligible for the small n used here.
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    }

    /// Standard exponential; strictly positive.
    double exponential() { return -std::log(uniform_open()); }

    /// Standard normal via Box-Muller; consumes exactly two words.
    double normal() {
        double u1 = uniform_open();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace fedtd
