#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "scg/stats.hpp"

namespace scg {

// splitmix64 step; used to derive independent seeds from (seed, stream) pairs
// so parallel and serial runs draw identical values.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(splitmix64(seed)); }

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64(derive_seed(seed, stream));
}

// Draw helpers built directly on the raw engine output. The standard
// <random> distributions leave their sequences implementation-defined, which
// would break the fixed-seed reproducibility contract across toolchains.

// 53-bit uniform in [0, 1).
inline double uniform01(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

// Uniform in the open interval (0, 1); safe input for quantile transforms.
inline double uniform01_open(std::mt19937_64& rng) { return ((rng() >> 11) + 0.5) * 0x1.0p-53; }

inline double std_normal(std::mt19937_64& rng) { return norm_quantile(uniform01_open(rng)); }

inline double exp1(std::mt19937_64& rng) { return -std::log(uniform01_open(rng)); }

// Unbiased integer in [0, n) by rejection. Requires n >= 1.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n; // 2^64 mod n
    for (;;) {
        const std::uint64_t x = rng();
        if (x >= threshold) return x % n;
    }
}

} // namespace scg
