// SPDX-License-Identifier: Apache-2.0
#include "hanet/optim.hpp"

#include <cmath>

#include "hanet/errors.hpp"

namespace hanet {

void adamw_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                OptimizerState& state) {
  if (params.size() != grads.size()) throw InvalidArgument("adamw_step: list length mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i])) throw InvalidArgument("adamw_step: shape mismatch");
    if (!grads[i]->all_finite()) throw InvalidArgument("adamw_step: non-finite gradient");
  }
  if (state.step_count == 0 && state.first_moment.empty()) {
    for (const Matrix* p : params) {
      state.first_moment.emplace_back(p->rows(), p->cols());
      state.second_moment.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw InvalidArgument("adamw_step: optimizer state tracks a different parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!state.first_moment[i].same_shape(*params[i])) {
      throw InvalidArgument("adamw_step: moment shape does not match parameter");
    }
  }

  const AdamWHyper& h = state.hyper;
  const std::size_t t = ++state.step_count;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->values();
    const auto& g = grads[i]->values();
    auto& m = state.first_moment[i].values();
    auto& v = state.second_moment[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      w[k] -= h.learning_rate * (m_hat / (std::sqrt(v_hat) + h.epsilon) + h.weight_decay * w[k]);
    }
  }
}

void adamw_step(std::span<Parameter* const> params, OptimizerState& state) {
  std::vector<Matrix*> values;
  std::vector<const Matrix*> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (Parameter* p : params) {
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  adamw_step(values, grads, state);
}

}  // namespace hanet
