#pragma once

#include "haaseg/tensor.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace haaseg {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t input_index = 0; // which checked tensor holds the worst coordinate
    std::size_t coordinate = 0;  // flat index inside it
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t coordinates_checked = 0;
};

/// Compares taped gradients of a scalar function against central differences
/// (f(x + eps e) - f(x - eps e)) / 2eps. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8).
///
/// `f` reads the current values of `inputs`; the checker perturbs them in
/// place and restores them afterwards. When `max_coords_per_input` is
/// nonzero, larger tensors are checked on an evenly strided subset.
GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> inputs, double eps = 1e-5,
                                  std::size_t max_coords_per_input = 0);

/// Single-input convenience form.
GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5);

} // namespace haaseg
