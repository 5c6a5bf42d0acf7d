// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal reverse-mode differentiation over small dense matrices.
//
// A Tape records every operation of one forward pass. Parameters enter the tape
// as leaves; calling backward() on a 1x1 result accumulates d(result)/d(param)
// into Parameter::grad. A tape built with grad disabled treats parameters as
// constants and records no backward closures.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hanet/matrix.hpp"

namespace hanet {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  double scalar() const;
};

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Matrix value);
  Var param(Parameter& p);

  /// Seeds d(root)/d(root) = 1 and runs all recorded closures in reverse order.
  void backward(Var root);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;
  Var record(Matrix value, std::vector<std::size_t> parents, Backward backward);
  /// Gradient accumulator for a node, allocated lazily.
  Matrix& grad_of(std::size_t id);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

namespace ad {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Adds a 1 x cols row vector to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
/// Elementwise product with a constant mask of the same shape.
Var mask(Var a, const Matrix& m);
/// Tanh-approximated GELU.
Var gelu(Var a);
Var softmax_rows(Var a);
Var gather_rows(Var table, std::span<const std::size_t> ids);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Row r of a as a 1 x cols matrix.
Var row(Var a, std::size_t r);
Var concat_cols(Var a, Var b);
Var select_cols(Var a, std::span<const std::size_t> cols);

// Scalar (1x1) helpers.
/// Cosine similarity of two equal-length row vectors. NumericGuardError on zero norm.
Var cosine(Var a, Var b);
/// -sum_j target_j * log softmax(logits)_j for a 1 x C logit row.
Var soft_cross_entropy(Var logits, std::span<const double> target);
/// -log softmax(logits)_gold.
Var cross_entropy(Var logits, std::size_t gold);
Var logsumexp(std::span<const Var> scalars);
Var sum(std::span<const Var> scalars);
Var add_scalars(Var a, Var b);

}  // namespace ad
}  // namespace hanet
