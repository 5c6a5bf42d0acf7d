// SPDX-License-Identifier: Apache-2.0
#include "hanet/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "hanet/errors.hpp"

namespace hanet {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw InvalidArgument("matrix: value count does not match shape");
  }
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

}  // namespace hanet
