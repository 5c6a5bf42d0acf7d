// SPDX-License-Identifier: Apache-2.0
#include "hanet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hanet/errors.hpp"
#include "hanet/numerics.hpp"

namespace hanet {

const Matrix& Var::value() const { return tape->value(*this); }

double Var::scalar() const {
  const Matrix& m = value();
  if (m.size() != 1) throw InvalidArgument("Var::scalar on a non-1x1 node");
  return m.values()[0];
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  if (grad_enabled_) {
    n.param = &p;
    n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::vector<std::size_t> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                  [this](std::size_t p) { return nodes_[p].requires_grad; });
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Matrix& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (!grad_enabled_) throw StateError("backward on a tape with gradients disabled");
  if (nodes_[root.id].value.size() != 1) throw InvalidArgument("backward root must be 1x1");
  if (!nodes_[root.id].requires_grad) return;
  grad_of(root.id).values()[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      // Closures only read n.grad and write parents, which precede i.
      Matrix g = std::move(n.grad);
      n.backward(*this, g);
      n.grad = std::move(g);
    } else if (n.param != nullptr) {
      auto& dst = n.param->grad.values();
      const auto& src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

namespace ad {
namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw InvalidArgument("vars from different tapes");
  return *a.tape;
}

bool needs(Tape& t, Var v) { return t.requires_grad(v); }

void add_into(Matrix& dst, const Matrix& src) {
  auto& d = dst.values();
  const auto& s = src.values();
  for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
}

Var scalar_node(Tape& t, double v, std::vector<std::size_t> parents, Tape::Backward bw) {
  return t.record(Matrix(1, 1, v), std::move(parents), std::move(bw));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.rows()) throw InvalidArgument("matmul: inner dimensions differ");
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  Matrix C(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A(i, p);
      for (std::size_t j = 0; j < m; ++j) C(i, j) += aip * B(p, j);
    }
  }
  return t.record(std::move(C), {a.id, b.id}, [a, b, n, k, m](Tape& t, const Matrix& G) {
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    if (needs(t, a)) {
      Matrix& dA = t.grad_of(a.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += G(i, j) * B(p, j);
          dA(i, p) += s;
        }
    }
    if (needs(t, b)) {
      Matrix& dB = t.grad_of(b.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A(i, p);
          for (std::size_t j = 0; j < m; ++j) dB(p, j) += aip * G(i, j);
        }
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.cols()) throw InvalidArgument("matmul_nt: inner dimensions differ");
  const std::size_t n = A.rows(), k = A.cols(), m = B.rows();
  Matrix C(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += A(i, p) * B(j, p);
      C(i, j) = s;
    }
  return t.record(std::move(C), {a.id, b.id}, [a, b, n, k, m](Tape& t, const Matrix& G) {
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    if (needs(t, a)) {
      Matrix& dA = t.grad_of(a.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double g = G(i, j);
          for (std::size_t p = 0; p < k; ++p) dA(i, p) += g * B(j, p);
        }
    }
    if (needs(t, b)) {
      Matrix& dB = t.grad_of(b.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double g = G(i, j);
          for (std::size_t p = 0; p < k; ++p) dB(j, p) += g * A(i, p);
        }
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (!A.same_shape(B)) throw InvalidArgument("add: shape mismatch");
  Matrix C = A;
  add_into(C, B);
  return t.record(std::move(C), {a.id, b.id}, [a, b](Tape& t, const Matrix& G) {
    if (needs(t, a)) add_into(t.grad_of(a.id), G);
    if (needs(t, b)) add_into(t.grad_of(b.id), G);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (!A.same_shape(B)) throw InvalidArgument("sub: shape mismatch");
  Matrix C = A;
  for (std::size_t k = 0; k < C.size(); ++k) C.values()[k] -= B.values()[k];
  return t.record(std::move(C), {a.id, b.id}, [a, b](Tape& t, const Matrix& G) {
    if (needs(t, a)) add_into(t.grad_of(a.id), G);
    if (needs(t, b)) {
      auto& d = t.grad_of(b.id).values();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] -= G.values()[k];
    }
  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  const Matrix& A = t.value(a);
  const Matrix& R = t.value(row);
  if (R.rows() != 1 || R.cols() != A.cols()) throw InvalidArgument("add_row: shape mismatch");
  Matrix C = A;
  for (std::size_t i = 0; i < C.rows(); ++i)
    for (std::size_t j = 0; j < C.cols(); ++j) C(i, j) += R(0, j);
  return t.record(std::move(C), {a.id, row.id}, [a, row](Tape& t, const Matrix& G) {
    if (needs(t, a)) add_into(t.grad_of(a.id), G);
    if (needs(t, row)) {
      Matrix& dR = t.grad_of(row.id);
      for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < G.cols(); ++j) dR(0, j) += G(i, j);
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Matrix C = t.value(a);
  for (double& v : C.values()) v *= s;
  return t.record(std::move(C), {a.id}, [a, s](Tape& t, const Matrix& G) {
    auto& d = t.grad_of(a.id).values();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += s * G.values()[k];
  });
}

Var mask(Var a, const Matrix& m) {
  Tape& t = *a.tape;
  Matrix C = t.value(a);
  if (!C.same_shape(m)) throw InvalidArgument("mask: shape mismatch");
  for (std::size_t k = 0; k < C.size(); ++k) C.values()[k] *= m.values()[k];
  return t.record(std::move(C), {a.id}, [a, m](Tape& t, const Matrix& G) {
    auto& d = t.grad_of(a.id).values();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += m.values()[k] * G.values()[k];
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
  Tape& t = *a.tape;
  Matrix C = t.value(a);
  for (double& x : C.values()) {
    x = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  return t.record(std::move(C), {a.id}, [a](Tape& t, const Matrix& G) {
    const auto& X = t.value(a).values();
    auto& d = t.grad_of(a.id).values();
    for (std::size_t k = 0; k < d.size(); ++k) {
      const double x = X[k];
      const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
      const double dy = 0.5 * (1.0 + th) +
                        0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      d[k] += dy * G.values()[k];
    }
  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& A = t.value(a);
  Matrix Y(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    auto p = softmax_stable(A.row(i));
    std::copy(p.begin(), p.end(), Y.row(i).begin());
  }
  const std::size_t out_id = t.size();
  return t.record(std::move(Y), {a.id}, [a, out_id](Tape& t, const Matrix& G) {
    const Matrix& Y = t.value(Var{&t, out_id});
    Matrix& dA = t.grad_of(a.id);
    for (std::size_t i = 0; i < Y.rows(); ++i) {
      double gy = 0.0;
      for (std::size_t j = 0; j < Y.cols(); ++j) gy += G(i, j) * Y(i, j);
      for (std::size_t j = 0; j < Y.cols(); ++j) dA(i, j) += Y(i, j) * (G(i, j) - gy);
    }
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  Tape& t = *table.tape;
  const Matrix& T = t.value(table);
  Matrix C(ids.size(), T.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= T.rows()) throw InvalidArgument("gather_rows: index out of range");
    std::copy(T.row(ids[i]).begin(), T.row(ids[i]).end(), C.row(i).begin());
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return t.record(std::move(C), {table.id}, [table, idx](Tape& t, const Matrix& G) {
    Matrix& dT = t.grad_of(table.id);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < G.cols(); ++j) dT(idx[i], j) += G(i, j);
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& t = *a.tape;
  const Matrix& A = t.value(a);
  if (begin + count > A.rows()) throw InvalidArgument("slice_rows: out of range");
  Matrix C(count, A.cols());
  std::copy(A.values().begin() + static_cast<std::ptrdiff_t>(begin * A.cols()),
            A.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * A.cols()),
            C.values().begin());
  return t.record(std::move(C), {a.id}, [a, begin](Tape& t, const Matrix& G) {
    Matrix& dA = t.grad_of(a.id);
    for (std::size_t i = 0; i < G.rows(); ++i)
      for (std::size_t j = 0; j < G.cols(); ++j) dA(begin + i, j) += G(i, j);
  });
}

Var row(Var a, std::size_t r) { return slice_rows(a, r, 1); }

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.rows() != B.rows()) throw InvalidArgument("concat_cols: row count mismatch");
  const std::size_t ca = A.cols(), cb = B.cols();
  Matrix C(A.rows(), ca + cb);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) C(i, j) = A(i, j);
    for (std::size_t j = 0; j < cb; ++j) C(i, ca + j) = B(i, j);
  }
  return t.record(std::move(C), {a.id, b.id}, [a, b, ca, cb](Tape& t, const Matrix& G) {
    if (needs(t, a)) {
      Matrix& dA = t.grad_of(a.id);
      for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < ca; ++j) dA(i, j) += G(i, j);
    }
    if (needs(t, b)) {
      Matrix& dB = t.grad_of(b.id);
      for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < cb; ++j) dB(i, j) += G(i, ca + j);
    }
  });
}

Var select_cols(Var a, std::span<const std::size_t> cols) {
  Tape& t = *a.tape;
  const Matrix& A = t.value(a);
  Matrix C(A.rows(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] >= A.cols()) throw InvalidArgument("select_cols: index out of range");
    for (std::size_t i = 0; i < A.rows(); ++i) C(i, j) = A(i, cols[j]);
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return t.record(std::move(C), {a.id}, [a, idx](Tape& t, const Matrix& G) {
    Matrix& dA = t.grad_of(a.id);
    for (std::size_t j = 0; j < idx.size(); ++j)
      for (std::size_t i = 0; i < G.rows(); ++i) dA(i, idx[j]) += G(i, j);
  });
}

Var cosine(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const auto& A = t.value(a).values();
  const auto& B = t.value(b).values();
  if (A.size() != B.size()) throw InvalidArgument("cosine: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < A.size(); ++k) {
    ab += A[k] * B[k];
    aa += A[k] * A[k];
    bb += B[k] * B[k];
  }
  if (aa == 0.0 || bb == 0.0) throw NumericGuardError("cosine: zero-norm representation");
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  // sqrt of the product is exact for a == b, so self-similarity is exactly 1.
  const double c = ab / std::sqrt(aa * bb);
  return scalar_node(t, c, {a.id, b.id}, [a, b, c, na, nb, aa, bb](Tape& t, const Matrix& G) {
    const double g = G.values()[0];
    const auto& A = t.value(a).values();
    const auto& B = t.value(b).values();
    if (needs(t, a)) {
      auto& d = t.grad_of(a.id).values();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += g * (B[k] / (na * nb) - c * A[k] / aa);
    }
    if (needs(t, b)) {
      auto& d = t.grad_of(b.id).values();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += g * (A[k] / (na * nb) - c * B[k] / bb);
    }
  });
}

Var soft_cross_entropy(Var logits, std::span<const double> target) {
  Tape& t = *logits.tape;
  const Matrix& Z = t.value(logits);
  if (Z.rows() != 1 || Z.cols() != target.size()) {
    throw InvalidArgument("soft_cross_entropy: target length mismatch");
  }
  const double mx = *std::max_element(Z.values().begin(), Z.values().end());
  double total = 0.0;
  for (double z : Z.values()) total += std::exp(z - mx);
  const double lse = mx + std::log(total);
  double loss = 0.0, mass = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    if (target[j] != 0.0) loss -= target[j] * (Z(0, j) - lse);
    mass += target[j];
  }
  std::vector<double> tgt(target.begin(), target.end());
  return scalar_node(t, loss, {logits.id}, [logits, tgt, lse, mass](Tape& t, const Matrix& G) {
    const double g = G.values()[0];
    const Matrix& Z = t.value(logits);
    Matrix& dZ = t.grad_of(logits.id);
    for (std::size_t j = 0; j < tgt.size(); ++j) {
      dZ(0, j) += g * (mass * std::exp(Z(0, j) - lse) - tgt[j]);
    }
  });
}

Var cross_entropy(Var logits, std::size_t gold) {
  const Matrix& Z = logits.value();
  if (gold >= Z.cols()) throw InvalidArgument("cross_entropy: gold index out of range");
  std::vector<double> onehot(Z.cols(), 0.0);
  onehot[gold] = 1.0;
  return soft_cross_entropy(logits, onehot);
}

Var logsumexp(std::span<const Var> scalars) {
  if (scalars.empty()) throw InvalidArgument("logsumexp: empty input");
  Tape& t = *scalars.front().tape;
  std::vector<std::size_t> ids;
  ids.reserve(scalars.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (Var v : scalars) {
    ids.push_back(v.id);
    mx = std::max(mx, v.scalar());
  }
  double total = 0.0;
  for (Var v : scalars) total += std::exp(v.scalar() - mx);
  const double lse = mx + std::log(total);
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  return scalar_node(t, lse, ids, [inputs, lse](Tape& t, const Matrix& G) {
    const double g = G.values()[0];
    for (Var v : inputs) {
      if (needs(t, v)) t.grad_of(v.id).values()[0] += g * std::exp(t.value(v).values()[0] - lse);
    }
  });
}

Var sum(std::span<const Var> scalars) {
  if (scalars.empty()) throw InvalidArgument("sum: empty input");
  Tape& t = *scalars.front().tape;
  std::vector<std::size_t> ids;
  double total = 0.0;
  for (Var v : scalars) {
    ids.push_back(v.id);
    total += v.scalar();
  }
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  return scalar_node(t, total, ids, [inputs](Tape& t, const Matrix& G) {
    for (Var v : inputs) {
      if (needs(t, v)) t.grad_of(v.id).values()[0] += G.values()[0];
    }
  });
}

Var add_scalars(Var a, Var b) {
  const Var both[] = {a, b};
  return sum(both);
}

}  // namespace ad
}  // namespace hanet
