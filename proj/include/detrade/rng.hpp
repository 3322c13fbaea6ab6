#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace detrade::rng {

// splitmix64; used to derive independent substreams from one scenario seed
// so results do not depend on agent evaluation order.
inline uint64_t mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t combine(uint64_t seed, uint64_t tag) { return mix(seed ^ mix(tag)); }

inline uint64_t tag_of(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Stateless uniform draw in [0,1) keyed by (seed, tags...). Each distinct key
// gives one fixed variate, independent of call order.
inline double uniform01(uint64_t key) {
    return static_cast<double>(mix(key) >> 11) * 0x1.0p-53;
}

template <typename... Tags>
uint64_t key(uint64_t seed, Tags... tags) {
    uint64_t k = seed;
    ((k = combine(k, static_cast<uint64_t>(tags))), ...);
    return k;
}

// Seeded engine for the few places that need a stream rather than a point draw.
inline std::mt19937_64 engine(uint64_t key) { return std::mt19937_64(mix(key)); }

}  // namespace detrade::rng
