#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cspm {

using Rng = std::mt19937_64;

// splitmix64; used to derive independent seeds from (seed, tag) pairs so that
// the shuffle, mining and init streams never alias.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    return mix64(mix64(seed) ^ mix64(stream * 0x2545f4914f6cdd1dULL + 1));
}

inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
    // FNV-1a over the tag, then mixed with the base seed.
    uint64_t h = 1469598103934665603ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return derive_seed(seed, h);
}

inline Rng make_rng(uint64_t seed, std::string_view tag) {
    return Rng(derive_seed(seed, tag));
}

}  // namespace cspm
