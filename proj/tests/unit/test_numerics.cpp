// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "hanet/autograd.hpp"
#include "hanet/errors.hpp"
#include "hanet/gradcheck.hpp"
#include "hanet/matrix.hpp"
#include "hanet/numerics.hpp"
#include "hanet/optim.hpp"
#include "hanet/rng.hpp"

using namespace hanet;

TEST_CASE("softmax of equal logits is uniform") {
  const auto p = softmax_stable(std::vector<double>{0, 0, 0, 0});
  for (double v : p) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax survives huge logits") {
  const auto p = softmax_stable(std::vector<double>{1000, 1000});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax of log weights recovers the weights") {
  const auto p = softmax_stable(std::vector<double>{std::log(1.0), std::log(3.0)});
  CHECK(std::abs(p[0] - 0.25) < 1e-12);
  CHECK(std::abs(p[1] - 0.75) < 1e-12);
}

TEST_CASE("softmax rejects empty and non-finite input") {
  CHECK_THROWS_AS(softmax_stable(std::vector<double>{}), InvalidArgument);
  CHECK_THROWS_AS(softmax_stable(std::vector<double>{1.0, NAN}), InvalidArgument);
}

TEST_CASE("softmax is shift invariant, positive and normalized") {
  RngStream rng(3, "test");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(1 + rng.uniform_int(8));
    for (double& v : z) v = 20.0 * (rng.uniform() - 0.5);
    const double c = 100.0 * (rng.uniform() - 0.5);
    std::vector<double> shifted = z;
    for (double& v : shifted) v += c;
    const auto p = softmax_stable(z);
    const auto q = softmax_stable(shifted);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-9);
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] > 0.0);
      CHECK(std::abs(p[i] - q[i]) < 1e-9);
    }
  }
}

TEST_CASE("rng streams are replayable and label-separated") {
  RngStream a(42, "init");
  RngStream b(42, "init");
  RngStream c(42, "dropout");
  std::vector<std::uint64_t> da, db, dc;
  for (int i = 0; i < 16; ++i) {
    da.push_back(a.next_u64());
    db.push_back(b.next_u64());
    dc.push_back(c.next_u64());
  }
  CHECK(da == db);
  CHECK(da != dc);

  RngStream resumed(42, "init", 5);
  CHECK(resumed.next_u64() == da[5]);
  CHECK(a.counter() == 16);
  CHECK(RngStream(42, "init").derive("x").label() == "init/x");
}

TEST_CASE("uniform draws stay in range") {
  RngStream r(1, "u");
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.uniform_int(7) < 7);
  }
  CHECK_THROWS_AS(r.uniform_int(0), InvalidArgument);
}

TEST_CASE("zero variance gives exact copies of the mean") {
  RngStream rng(1, "gauss");
  const auto xs = sample_gaussian(std::vector<double>{1, 2}, std::vector<double>{0, 0}, 3, rng);
  REQUIRE(xs.size() == 3);
  for (const auto& x : xs) CHECK(x == std::vector<double>{1, 2});
}

TEST_CASE("a single gaussian draw has the right length") {
  RngStream rng(1, "gauss");
  const auto xs = sample_gaussian(std::vector<double>{0, 1, 2}, std::vector<double>{1, 2, 3}, 1, rng);
  REQUIRE(xs.size() == 1);
  CHECK(xs[0].size() == 3);
}

TEST_CASE("gaussian sample moments converge") {
  RngStream rng(11, "gauss");
  const std::size_t n = 100000;
  const auto xs = sample_gaussian(std::vector<double>{0.0}, std::vector<double>{1.0}, n, rng);
  double mean = 0.0;
  for (const auto& x : xs) mean += x[0];
  mean /= n;
  double var = 0.0;
  for (const auto& x : xs) var += (x[0] - mean) * (x[0] - mean);
  var /= n;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("gaussian sampling is bit-identical for identical streams") {
  RngStream a(5, "gauss", 17);
  RngStream b(5, "gauss", 17);
  const std::vector<double> mu{0.3, -1.0}, var{0.5, 2.0};
  CHECK(sample_gaussian(mu, var, 50, a) == sample_gaussian(mu, var, 50, b));
}

TEST_CASE("gaussian sampling validates its inputs") {
  RngStream rng(1, "gauss");
  CHECK_THROWS_AS(sample_gaussian(std::vector<double>{0.0}, std::vector<double>{-1.0}, 1, rng),
                  InvalidArgument);
  CHECK_THROWS_AS(sample_gaussian(std::vector<double>{0.0, 1.0}, std::vector<double>{1.0}, 1, rng),
                  InvalidArgument);
}

TEST_CASE("first adamw step moves by the learning rate") {
  std::vector<Matrix> w{Matrix(1, 1, 1.0)};
  std::vector<Matrix> g{Matrix(1, 1, 2.0)};
  Matrix* ps[] = {&w[0]};
  const Matrix* gs[] = {&g[0]};
  OptimizerState st(AdamWHyper{0.1, 0.9, 0.999, 1e-8, 0.0});
  adamw_step(ps, gs, st);
  // m_hat = 2, v_hat = 4, so the step is lr * 2 / (2 + eps).
  CHECK(std::abs(w[0](0, 0) - (1.0 - 0.1 * 2.0 / (2.0 + 1e-8))) < 1e-15);
  CHECK(w[0](0, 0) == doctest::Approx(0.9));
  CHECK(st.step_count == 1);
}

TEST_CASE("adamw with zero gradient and zero decay is the identity") {
  Matrix w(2, 3);
  RngStream rng(2, "w");
  for (double& v : w.values()) v = rng.normal();
  const Matrix before = w;
  Matrix g(2, 3);
  Matrix* ps[] = {&w};
  const Matrix* gs[] = {&g};
  OptimizerState st(AdamWHyper{0.1, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 5; ++i) adamw_step(ps, gs, st);
  CHECK(w == before);
  CHECK(st.step_count == 5);
}

TEST_CASE("adamw decay with zero gradient shrinks by lr * lambda * w") {
  Matrix w(1, 1, 2.0);
  Matrix g(1, 1, 0.0);
  Matrix* ps[] = {&w};
  const Matrix* gs[] = {&g};
  OptimizerState st(AdamWHyper{0.1, 0.9, 0.999, 1e-8, 0.5});
  adamw_step(ps, gs, st);
  CHECK(std::abs(w(0, 0) - (2.0 - 0.1 * 0.5 * 2.0)) < 1e-15);
}

TEST_CASE("adamw rejects mismatched shapes and non-finite gradients") {
  Matrix w(2, 2), g(2, 3), bad(2, 2, NAN);
  Matrix* ps[] = {&w};
  const Matrix* gs[] = {&g};
  OptimizerState st;
  CHECK_THROWS_AS(adamw_step(ps, gs, st), InvalidArgument);
  const Matrix* gbad[] = {&bad};
  CHECK_THROWS(adamw_step(ps, gbad, st));
  Matrix ok(2, 2);
  const Matrix* gok[] = {&ok};
  adamw_step(ps, gok, st);
  Matrix w2(3, 3), g2(3, 3);
  Matrix* ps2[] = {&w2};
  const Matrix* gs2[] = {&g2};
  CHECK_THROWS_AS(adamw_step(ps2, gs2, st), InvalidArgument);
}

TEST_CASE("gradient check accepts a quadratic") {
  Parameter w("w", Matrix(2, 3));
  RngStream rng(4, "w");
  for (double& v : w.value.values()) v = rng.normal();
  LossFn loss = [&](bool with_grad) {
    double total = 0.0;
    for (double v : w.value.values()) total += v * v;
    if (with_grad) {
      for (std::size_t i = 0; i < w.value.values().size(); ++i) {
        w.grad.values()[i] = 2.0 * w.value.values()[i];
      }
    }
    return total;
  };
  Parameter* ps[] = {&w};
  const auto r = finite_diff_check(loss, ps, 1e-4, 1e-6);
  CHECK(r.passed);
  CHECK(r.max_relative_error < 1e-6);
  CHECK(r.checked == 6);
}

TEST_CASE("gradient check rejects bad settings and nondeterministic losses") {
  Parameter w("w", Matrix(1, 1, 1.0));
  Parameter* ps[] = {&w};
  LossFn fine = [&](bool) { return w.value(0, 0); };
  CHECK_THROWS_AS(finite_diff_check(fine, ps, 0.0, 1e-4), InvalidArgument);
  CHECK_THROWS_AS(finite_diff_check(fine, ps, 1e-4, 0.0), InvalidArgument);
  int calls = 0;
  LossFn noisy = [&](bool) { return w.value(0, 0) + 1e-3 * ++calls; };
  CHECK_THROWS_AS(finite_diff_check(noisy, ps, 1e-4, 1e-4), CheckInvalidError);
}

TEST_CASE("gradient check catches a wrong gradient") {
  Parameter w("w", Matrix(1, 2, 1.0));
  Parameter* ps[] = {&w};
  LossFn wrong = [&](bool with_grad) {
    if (with_grad) w.grad.fill(3.0);
    return w.value(0, 0) * w.value(0, 0) + w.value(0, 1);
  };
  const auto r = finite_diff_check(wrong, ps, 1e-4, 1e-4);
  CHECK_FALSE(r.passed);
  CHECK(r.worst_parameter == "w");
}

namespace {

// Runs a scalar-valued graph over two parameters through the checker.
GradCheckResult check_graph(const std::function<Var(Tape&, Var, Var)>& graph, std::size_t r1,
                            std::size_t c1, std::size_t r2, std::size_t c2, std::uint64_t seed) {
  Parameter a("a", Matrix(r1, c1));
  Parameter b("b", Matrix(r2, c2));
  RngStream rng(seed, "graph");
  for (double& v : a.value.values()) v = rng.normal();
  for (double& v : b.value.values()) v = rng.normal();
  LossFn fn = [&](bool with_grad) {
    Tape tape(with_grad);
    Var out = graph(tape, tape.param(a), tape.param(b));
    if (with_grad) tape.backward(out);
    return out.scalar();
  };
  Parameter* ps[] = {&a, &b};
  return finite_diff_check(fn, ps, 1e-5, 1e-4);
}

Var total(Var m) {
  std::vector<Var> cells;
  for (std::size_t r = 0; r < m.value().rows(); ++r) {
    Var row = ad::row(m, r);
    for (std::size_t c = 0; c < m.value().cols(); ++c) {
      const std::size_t idx[] = {c};
      cells.push_back(ad::matmul(ad::select_cols(row, idx), m.tape->constant(Matrix(1, 1, 1.0))));
    }
  }
  return ad::sum(cells);
}

}  // namespace

TEST_CASE("every tape operation passes the gradient check") {
  SUBCASE("matmul, add_row, gelu") {
    auto r = check_graph([](Tape&, Var a, Var b) {
      return total(ad::gelu(ad::add_row(ad::matmul(a, b), ad::row(b, 0))));
    }, 3, 4, 4, 4, 1);
    CHECK(r.passed);
  }
  SUBCASE("matmul_nt, softmax_rows, scale, sub") {
    auto r = check_graph([](Tape&, Var a, Var b) {
      Var s = ad::softmax_rows(ad::scale(ad::matmul_nt(a, b), 0.7));
      return total(ad::sub(ad::matmul(s, b), ad::scale(a, 0.3)));
    }, 3, 4, 5, 4, 2);
    CHECK(r.passed);
  }
  SUBCASE("gather_rows, slice_rows, concat_cols, mask") {
    auto r = check_graph([](Tape&, Var a, Var b) {
      const std::size_t ids[] = {2, 0, 2};
      Var g = ad::gather_rows(a, ids);
      Matrix m(2, 4, 2.0);
      m(0, 1) = 0.0;
      Var s = ad::mask(ad::slice_rows(g, 1, 2), m);
      Var c = ad::concat_cols(s, ad::slice_rows(b, 0, 2));
      return total(ad::add(c, c));
    }, 3, 4, 3, 2, 3);
    CHECK(r.passed);
  }
  SUBCASE("cosine, logsumexp, cross entropies") {
    auto r = check_graph([](Tape&, Var a, Var b) {
      Var c1 = ad::cosine(ad::row(a, 0), ad::row(b, 0));
      Var c2 = ad::cosine(ad::row(a, 1), ad::row(b, 1));
      Var lse = ad::logsumexp(std::vector<Var>{c1, c2, ad::scale(c1, 2.0)});
      const double target[] = {0.2, 0.5, 0.3};
      Var ce = ad::cross_entropy(ad::row(a, 1), 2);
      Var sce = ad::soft_cross_entropy(ad::row(b, 1), target);
      return ad::add_scalars(ad::add_scalars(lse, ce), sce);
    }, 2, 3, 2, 3, 4);
    CHECK(r.passed);
  }
}

TEST_CASE("cross entropy gradient is softmax minus one-hot") {
  Parameter z("z", Matrix(1, 4));
  RngStream rng(9, "z");
  for (double& v : z.value.values()) v = rng.normal();
  Tape tape(true);
  Var loss = ad::cross_entropy(tape.param(z), 1);
  tape.backward(loss);
  const auto p = softmax_stable(z.value.values());
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(std::abs(z.grad(0, j) - (p[j] - (j == 1 ? 1.0 : 0.0))) < 1e-12);
  }
}

TEST_CASE("no-grad tapes leave parameter gradients alone") {
  Parameter w("w", Matrix(1, 2, 1.0));
  Tape tape(false);
  Var v = tape.param(w);
  CHECK_FALSE(tape.requires_grad(v));
  CHECK(w.grad == Matrix(1, 2));
}

TEST_CASE("cosine on a zero vector is guarded") {
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}),
                  NumericGuardError);
  Tape tape(true);
  CHECK_THROWS_AS(ad::cosine(tape.constant(Matrix(1, 2)), tape.constant(Matrix(1, 2, 1.0))),
                  NumericGuardError);
}

TEST_CASE("matrix construction checks sizes") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), InvalidArgument);
  Matrix m(2, 3, 1.5);
  CHECK(m.all_finite());
  m(1, 2) = INFINITY;
  CHECK_FALSE(m.all_finite());
  CHECK(m.row(1).size() == 3);
}
