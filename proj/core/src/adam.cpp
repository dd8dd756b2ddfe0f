#include "mlcap/adam.hpp"

#include <cmath>
#include <string>

#include "mlcap/errors.hpp"

namespace mlcap {

void adam_update(std::span<double> theta, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, std::uint64_t step,
                 const AdamConfig& c) {
  if (grad.size() != theta.size() || m.size() != theta.size() ||
      v.size() != theta.size()) {
    throw DimensionError("adam_update: parameter has " + std::to_string(theta.size()) +
                         " entries but gradient/moments have " +
                         std::to_string(grad.size()) + "/" + std::to_string(m.size()) +
                         "/" + std::to_string(v.size()));
  }
  if (step == 0) throw ContractError("adam_update: step counter starts at 1");
  const double t = static_cast<double>(step);
  const double m_correction = 1.0 - std::pow(c.beta1, t);
  const double v_correction = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = m[i] / m_correction;
    const double v_hat = v[i] / v_correction;
    theta[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

AdamState make_adam_state(const ModelParams& params) {
  AdamState state;
  for (const ad::Tensor* t : params.tensors()) {
    state.m.emplace_back(t->size(), 0.0);
    state.v.emplace_back(t->size(), 0.0);
  }
  return state;
}

void adam_step(ModelParams& params, AdamState& state, const AdamConfig& config) {
  auto tensors = params.tensors();
  if (state.m.size() != tensors.size() || state.v.size() != tensors.size()) {
    throw DimensionError("adam_step: optimizer state tracks " +
                         std::to_string(state.m.size()) + " parameters, model has " +
                         std::to_string(tensors.size()));
  }
  ++state.step;
  for (std::size_t p = 0; p < tensors.size(); ++p) {
    ad::Tensor& t = *tensors[p];
    if (t.has_grad()) {
      adam_update(t.data(), t.grad(), state.m[p], state.v[p], state.step, config);
    } else {
      const std::vector<double> zeros(t.size(), 0.0);
      adam_update(t.data(), zeros, state.m[p], state.v[p], state.step, config);
    }
  }
}

}  // namespace mlcap
