#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlcap/gradcheck.hpp"
#include "mlcap/model.hpp"
#include "mlcap/random.hpp"

namespace mlcap::cli {

struct SuiteEntry {
  std::string name;
  ad::GradientCheckResult result;
  bool passed = false;
};

// Overwrites every parameter with Uniform(lo, hi) draws.
void randomize(ModelParams& params, Rng& rng, double lo = -1.0, double hi = 1.0);

// Finite-difference checks of every differentiable op, one LSTM step, and the
// full sequence loss on a V=10, E=6, H=8, D=5 model with length-4 captions.
std::vector<SuiteEntry> run_gradient_suite(std::uint64_t seed, double h, double tolerance);

}  // namespace mlcap::cli
