#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace stabds {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for the stream identified by a root seed and a tuple of keys, e.g.
/// (seed, replication, subsample). Streams depend only on the key, never on
/// which thread consumes them.
inline std::uint64_t stream_seed(std::uint64_t root, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(root);
    for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return h;
}

inline Engine make_stream(std::uint64_t root, std::initializer_list<std::uint64_t> keys) {
    return Engine(stream_seed(root, keys));
}

// Purposes for simulation streams.
namespace stream {
inline constexpr std::uint64_t fixed_effects = 1;
inline constexpr std::uint64_t covariates = 2;
inline constexpr std::uint64_t errors = 3;
inline constexpr std::uint64_t distortion = 4;
inline constexpr std::uint64_t response_distortion = 5;
inline constexpr std::uint64_t stability = 6;
inline constexpr std::uint64_t plain_cv = 7;
}  // namespace stream

}  // namespace stabds
