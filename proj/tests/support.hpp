#pragma once

#include "haaseg/rng.hpp"
#include "haaseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace testing {

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs_diff(const haaseg::Tensor& a, const haaseg::Tensor& b) {
    return max_abs_diff(a.data(), b.data());
}

// Copy of the values, safe to iterate over a temporary tensor.
inline std::vector<double> values(const haaseg::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline bool bit_equal(const haaseg::Tensor& a, const haaseg::Tensor& b) {
    if (a.shape() != b.shape())
        return false;
    return std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

inline haaseg::Tensor random_mask(haaseg::Shape shape, haaseg::Rng& rng, double p = 0.5) {
    haaseg::Tensor t(std::move(shape));
    for (auto& v : t.mutable_data())
        v = rng.uniform() < p ? 1.0 : 0.0;
    return t;
}

} // namespace testing
