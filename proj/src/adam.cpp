#include "marketgraph/adam.hpp"

#include <cmath>
#include <string>

#include "marketgraph/errors.hpp"

namespace marketgraph {

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& config) {
  if (!(config.learning_rate > 0.0)) throw DomainError("adam: learning rate must be positive");
  if (state.step == 0 && state.first_moment.empty()) {
    for (const Parameter* p : params) {
      state.first_moment.push_back(Tensor::zeros(p->value.shape()));
      state.second_moment.push_back(Tensor::zeros(p->value.shape()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.shape() != p.value.shape() || state.first_moment[i].shape() != p.value.shape()) {
      throw DimensionError("adam: shape mismatch for parameter '" + p.name + "'");
    }
  }

  ++state.step;
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.requires_grad) continue;
    double* m = state.first_moment[i].data();
    double* v = state.second_moment[i].data();
    double* w = p.value.data();
    const double* g = p.grad.data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      w[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace marketgraph
