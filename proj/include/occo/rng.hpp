#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace occo {

// All randomness in the project flows from one root seed. Subsystems derive
// their own streams by mixing the root seed with a label (and optional
// indices), so the same configuration always reproduces the same draws no
// matter which subsystems run or in what order.

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

/// Deterministic sub-seed for a named stream: mix(root, label, indices...).
inline uint64_t derive_seed(uint64_t root, std::string_view label) {
    return detail::splitmix64(root ^ detail::fnv1a(label));
}

inline uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t a) {
    return detail::splitmix64(derive_seed(root, label) ^ detail::splitmix64(a + 1));
}

inline uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t a, uint64_t b) {
    return detail::splitmix64(derive_seed(root, label, a) ^ detail::splitmix64(b + 0x51ed2701));
}

inline std::mt19937_64 make_rng(uint64_t seed) {
    return std::mt19937_64(seed);
}

} // namespace occo
