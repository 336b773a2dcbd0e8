#pragma once

#include <cstdint>
#include <random>

namespace hetpfl {

/// Named sub-stream domains, so every consumer of randomness in a run draws
/// from its own independently seeded engine. Client-level parallelism can
/// never change results because no two consumers share a stream.
enum class Stream : std::uint64_t {
    data = 1,
    server_init = 2,
    client_init = 3,
    client_round = 4,
    fusion_init = 5,
    fusion_train = 6,
    split = 7,
    eval = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

inline std::mt19937_64 make_stream(std::uint64_t seed, Stream domain, std::uint64_t a = 0,
                                   std::uint64_t b = 0) {
    return std::mt19937_64(mix_seed(seed, static_cast<std::uint64_t>(domain), a, b));
}

}  // namespace hetpfl
