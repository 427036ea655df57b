#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace vipnet {

// mt19937 output is bit-exact across platforms; the std:: distributions are
// not, so floats are derived from raw draws here.

/// Uniform in [0, 1) with 24 bits of mantissa.
inline float uniform01(std::mt19937& gen) {
    return static_cast<float>(gen() >> 8) * (1.0f / 16777216.0f);
}

/// Uniform in [-range, range).
inline float uniform_sym(std::mt19937& gen, float range) {
    return (2.0f * uniform01(gen) - 1.0f) * range;
}

/// Integer uniform in [lo, hi], inclusive on both ends.
inline int uniform_int(std::mt19937& gen, int lo, int hi) {
    return lo + static_cast<int>(gen() % static_cast<std::uint32_t>(hi - lo + 1));
}

/// Standard normal via Box-Muller on the deterministic uniforms.
inline float normal01(std::mt19937& gen) {
    float u1 = uniform01(gen);
    float u2 = uniform01(gen);
    if (u1 < 1e-12f) u1 = 1e-12f;
    return std::sqrt(-2.0f * std::log(u1)) * std::cos(6.28318530718f * u2);
}

/// 0..n-1 in Fisher-Yates shuffled order, driven by the raw generator.
inline std::vector<std::size_t> shuffle_indices(std::size_t n, std::mt19937& gen) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = gen() % i;
        std::swap(v[i - 1], v[j]);
    }
    return v;
}

}  // namespace vipnet
