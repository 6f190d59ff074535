#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace vila {

// FNV-1a over arbitrary bytes; used as the stable token hash and for
// named seed derivation.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// All randomness flows from one master seed through (label, index) so any
// sub-artifact is reproducible in isolation.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                                 std::uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ fnv1a(label)) ^ index);
}

inline std::vector<double> gaussian_vector(std::size_t n, std::uint64_t seed,
                                           double mean = 0.0, double stddev = 1.0) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist(mean, stddev);
    std::vector<double> out(n);
    for (auto& v : out) v = dist(gen);
    return out;
}

// Xavier-uniform bound for a fan_in x fan_out weight.
inline std::vector<double> xavier_uniform(std::size_t fan_in, std::size_t fan_out,
                                          std::uint64_t seed) {
    double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> out(fan_in * fan_out);
    for (auto& v : out) v = dist(gen);
    return out;
}

}  // namespace vila
