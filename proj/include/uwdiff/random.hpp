#pragma once

#include <cstdint>
#include <random>

#include "uwdiff/tensor.hpp"

namespace uwdiff {

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent stream seeds from (seed, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline Tensor3 gaussian_like(int height, int width, int channels, Rng& rng) {
    Tensor3 out(height, width, channels);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : out.storage()) v = normal(rng);
    return out;
}

}  // namespace uwdiff
