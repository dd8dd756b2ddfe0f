#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mlcap/model.hpp"

namespace mlcap {

// Defaults are the standard Adam hyperparameters.
struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;  // first moments, one per parameter
  std::vector<std::vector<double>> v;  // second moments
  std::uint64_t step = 0;
};

// One bias-corrected update of a single array at (already incremented) step t:
//   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
//   theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
void adam_update(std::span<double> theta, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, std::uint64_t step,
                 const AdamConfig& config);

AdamState make_adam_state(const ModelParams& params);

// Increments state.step and updates every parameter from its stored gradient.
// A parameter without a gradient is treated as having a zero gradient.
void adam_step(ModelParams& params, AdamState& state, const AdamConfig& config);

}  // namespace mlcap
