// SPDX-License-Identifier: Apache-2.0
#include "hanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hanet/errors.hpp"

namespace hanet {

GradCheckResult finite_diff_check(const LossFn& loss_fn, std::span<Parameter* const> params,
                                  double epsilon, double tolerance) {
  if (!(epsilon > 0.0)) throw InvalidArgument("finite_diff_check: epsilon must be positive");
  if (!(tolerance > 0.0)) throw InvalidArgument("finite_diff_check: tolerance must be positive");

  for (Parameter* p : params) p->zero_grad();
  const double base = loss_fn(true);
  const double again = loss_fn(false);
  if (base != again || !std::isfinite(base)) {
    throw CheckInvalidError("finite_diff_check: loss is not deterministic at fixed parameters");
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& w = params[pi]->value.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double orig = w[k];
      auto at = [&](double offset) {
        w[k] = orig + offset;
        return loss_fn(false);
      };
      // Differences first: a parameter the loss ignores gets exactly zero.
      const double near = at(epsilon) - at(-epsilon);
      const double far = at(2 * epsilon) - at(-2 * epsilon);
      const double numeric = (8 * near - far) / (12 * epsilon);
      w[k] = orig;
      const double a = analytic[pi].values()[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++result.checked;
      if (rel > result.max_relative_error || result.checked == 1) {
        result.max_relative_error = rel;
        result.worst_parameter = params[pi]->name;
        result.worst_index = k;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
  result.passed = result.max_relative_error < tolerance;
  return result;
}

}  // namespace hanet
