#include "mlcap/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mlcap/errors.hpp"

namespace mlcap::ad {
namespace {

double evaluate(const ScalarFunction& f) {
  Tape tape(Tape::Mode::kNoGrad);
  const Tensor out = f(tape);
  if (!out.defined() || out.size() != 1) {
    throw ContractError("gradient_check: function must return a scalar");
  }
  return out.item();
}

}  // namespace

GradientCheckResult gradient_check(const ScalarFunction& f,
                                   std::span<Tensor> inputs, double h) {
  if (!(h > 0.0)) throw ContractError("gradient_check: step h must be positive");
  for (Tensor& in : inputs) {
    if (!in.defined() || !in.requires_grad() || !in.is_leaf()) {
      throw ContractError(
          "gradient_check: inputs must be leaf tensors requiring gradients");
    }
    in.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    const Tensor out = f(tape);
    if (!out.defined() || out.size() != 1) {
      throw ContractError("gradient_check: function must return a scalar");
    }
    tape.backward(out);
  }
  for (Tensor& in : inputs) {
    if (in.has_grad()) {
      analytic.emplace_back(in.grad().begin(), in.grad().end());
    } else {
      analytic.emplace_back(in.size(), 0.0);
    }
    in.zero_grad();
  }

  GradientCheckResult result;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + h;
      const double plus = evaluate(f);
      values[i] = original - h;
      const double minus = evaluate(f);
      values[i] = original;

      const double numeric = (plus - minus) / (2.0 * h);
      const double exact = analytic[t][i];
      const double denom = std::max(1e-12, std::abs(exact) + std::abs(numeric));
      const double rel = std::abs(exact - numeric) / denom;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_input = t;
        result.worst_entry = i;
      }
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace mlcap::ad
