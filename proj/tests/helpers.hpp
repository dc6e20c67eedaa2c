#pragma once

#include "tfacm/model.hpp"
#include "tfacm/tensor.hpp"

#include <cmath>
#include <cstdint>

namespace tfacm::test {

// Uniform [-0.5, 0.5), bit-reproducible.
inline void fill_uniform(Tensor& t, std::uint64_t seed) {
    std::uint64_t s = seed;
    for (std::size_t i = 0; i < t.numel(); ++i) {
        std::uint64_t r = splitmix64(s) >> 40;
        t[i] = static_cast<float>(r) * (1.0f / 16777216.0f) - 0.5f;
    }
}

inline Tensor uniform(std::vector<std::size_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    fill_uniform(t, seed);
    return t;
}

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
    float m = 0.0f;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool bit_identical(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace tfacm::test
