#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace umi {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Child seed for a named stream. Streams never share state, so adding a new
// consumer leaves every existing stream untouched.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
    return splitmix64(root ^ splitmix64(fnv1a64(stream)));
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                                    std::uint64_t counter) {
    return splitmix64(derive_seed(root, stream) + splitmix64(counter));
}

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
    return Rng(derive_seed(root, stream));
}

}  // namespace umi
