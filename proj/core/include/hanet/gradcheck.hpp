// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "hanet/autograd.hpp"

namespace hanet {

struct GradCheckResult {
  bool passed = false;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Evaluates the loss at the current parameter values. When `with_grad` is true
/// the callee must also backpropagate into Parameter::grad (already zeroed).
using LossFn = std::function<double(bool with_grad)>;

/// Compares analytic gradients against fourth-order central differences
///   (-L(w+2h) + 8L(w+h) - 8L(w-h) + L(w-2h)) / 12h
/// with relative error |a - n| / max(|a|, |n|, 1e-8).
/// Throws InvalidArgument for non-positive epsilon/tolerance and CheckInvalidError
/// when repeated evaluation at fixed parameters is not bit-identical.
GradCheckResult finite_diff_check(const LossFn& loss_fn, std::span<Parameter* const> params,
                                  double epsilon, double tolerance);

}  // namespace hanet
