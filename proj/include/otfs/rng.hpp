#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "types.hpp"

namespace otfs {

// Independent named substreams derived from one master seed.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_name(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive(std::uint64_t master, std::string_view stream,
                            std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t s = splitmix64(master ^ hash_name(stream));
    s = splitmix64(s ^ a);
    return splitmix64(s ^ (b * 0x632be59bd9b4e019ULL));
}

}  // namespace rng

using Engine = std::mt19937_64;

/// Circular complex Gaussian with E|z|^2 = variance.
inline Complex complex_gaussian(Engine& eng, double variance) {
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    const double re = n(eng);
    const double im = n(eng);
    return {re, im};
}

inline Bits random_bits(Engine& eng, std::size_t count) {
    Bits bits(count);
    for (auto& b : bits) b = static_cast<std::uint8_t>(eng() >> 63);
    return bits;
}

}  // namespace otfs
