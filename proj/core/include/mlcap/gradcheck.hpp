#pragma once

#include <functional>
#include <span>
#include <string>

#include "mlcap/autodiff.hpp"

namespace mlcap::ad {

// Builds a scalar from the current values of the checked inputs.
using ScalarFunction = std::function<Tensor(Tape&)>;

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;  // index into the checked inputs
  std::size_t worst_entry = 0;  // flat index within that input
  std::size_t coordinates = 0;  // number of entries checked
};

// Compares reverse-mode gradients of f against central differences
// (f(x+h) - f(x-h)) / 2h, coordinate by coordinate. The relative error of one
// entry is |g_ad - g_fd| / max(1e-12, |g_ad| + |g_fd|).
//
// Inputs must be leaves with requires_grad set; their gradients are cleared
// before and after the check and their data is restored exactly.
GradientCheckResult gradient_check(const ScalarFunction& f,
                                   std::span<Tensor> inputs, double h = 1e-5);

}  // namespace mlcap::ad
