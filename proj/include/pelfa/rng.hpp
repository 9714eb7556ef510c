#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace pelfa {

using Rng = std::mt19937_64;

// All randomness in the project flows from explicitly seeded generators.
// derive_seed splits one root seed into independent per-purpose streams so
// that e.g. data shuffling and weight init do not share a sequence.
inline std::uint64_t derive_seed(std::uint64_t root, const std::string& tag) {
    std::uint64_t h = root ^ 0x9e3779b97f4a7c15ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
        h ^= h >> 29;
    }
    return h;
}

inline Rng make_rng(std::uint64_t root, const std::string& tag) {
    return Rng(derive_seed(root, tag));
}

}  // namespace pelfa
