// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace occfield {

// splitmix64 finalizer; used to derive independent stream seeds from
// (seed, index) pairs so results do not depend on worker scheduling.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
    return mix64(mix64(seed ^ mix64(a)) ^ mix64(b + 0x5851f42d4c957f2dull));
}

// Per-ray / per-iteration RNG stream.
using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed, uint64_t a = 0, uint64_t b = 0) {
    return Rng(derive_seed(seed, a, b));
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace occfield
