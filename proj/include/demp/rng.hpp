#pragma once

#include <cstdint>
#include <random>

namespace demp {

using Rng = std::mt19937_64;

/// splitmix64 mix step; used to derive independent substream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic per-index generator: results do not depend on execution order.
inline Rng substream(std::uint64_t master_seed, std::uint64_t index) {
    return Rng(mix64(master_seed ^ mix64(index)));
}

}  // namespace demp
