// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hanet/autograd.hpp"
#include "hanet/matrix.hpp"

namespace hanet {

struct AdamWHyper {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
};

struct OptimizerState {
  AdamWHyper hyper;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::size_t step_count = 0;

  OptimizerState() = default;
  explicit OptimizerState(AdamWHyper h) : hyper(h) {}
};

/// One decoupled-weight-decay Adam update over matching parameter/gradient lists.
/// Moments are allocated on the first step; later steps require identical shapes.
void adamw_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                OptimizerState& state);

/// Convenience overload reading Parameter::grad.
void adamw_step(std::span<Parameter* const> params, OptimizerState& state);

}  // namespace hanet
