// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hanet/contrastive.hpp"
#include "hanet/errors.hpp"
#include "hanet/gradcheck.hpp"
#include "hanet/numerics.hpp"
#include "oracles.hpp"

using namespace hanet;

namespace {

using Vec = std::vector<double>;

ViewGroups random_groups(RngStream& rng, std::size_t n, std::size_t views, std::size_t d) {
  ViewGroups g(n, std::vector<Vec>(views, Vec(d)));
  for (auto& o : g)
    for (auto& v : o)
      for (double& x : v) x = rng.normal();
  return g;
}

Instance sentence() {
  return {"s", {"a", "b", "c", "d", "e", "f", "g", "h"}, {{{2, 4}, "X"}, {{6, 7}, "Y"}}};
}

}  // namespace

TEST_CASE("two-origin sentence fixture") {
  const ViewGroups g{{{1, 0}, {1, 0}}, {{0, 1}, {0, 1}}};
  // Four anchors, each -log(e / 2) = ln 2 - 1; normalization 1/((2-1)*1).
  CHECK(std::abs(l_cls(g, 1.0) - 4.0 * (std::log(2.0) - 1.0)) < 1e-9);
  CHECK(std::abs(l_cls(g, 1.0) - oracle::infonce(g, {}, 1.0)) < 1e-9);
}

TEST_CASE("three-origin sentence fixture") {
  const ViewGroups g{{{1, 0, 0}, {1, 0, 0}}, {{0, 1, 0}, {0, 1, 0}}, {{0, 0, 1}, {0, 0, 1}}};
  // Six anchors, four zero-similarity negatives each: 6 (ln 4 - 1) / 2.
  CHECK(std::abs(l_cls(g, 1.0) - 3.0 * (2.0 * std::log(2.0) - 1.0)) < 1e-9);
  CHECK(std::abs(l_cls(g, 1.0) - oracle::infonce(g, {}, 1.0)) < 1e-9);
}

TEST_CASE("three-origin trigger fixture") {
  const ViewGroups g{{{1, 0}, {1, 0}}, {{1, 0}, {1, 0}}, {{0, 1}, {0, 1}}};
  const std::vector<std::size_t> labels{0, 0, 1};
  // Origins 1 and 2 each have two anchors with one positive (S = 1) and two
  // negatives (S = 0); origin 3 has no same-label partner.
  CHECK(std::abs(l_trig(g, labels, 1.0) - 2.0 * (std::log(2.0) - 1.0)) < 1e-9);
  CHECK(std::abs(l_trig(g, labels, 1.0) - oracle::infonce(g, labels, 1.0)) < 1e-9);
}

TEST_CASE("losses match the loop oracle on random batches") {
  RngStream rng(3, "contrastive");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(4);
    const std::size_t views = 2 + rng.uniform_int(3);
    const double tau = 0.05 + rng.uniform();
    const auto g = random_groups(rng, n, views, 5);
    CHECK(std::abs(l_cls(g, tau) - oracle::infonce(g, {}, tau)) < 1e-9 * std::max(1.0, oracle::infonce(g, {}, tau)));
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.uniform_int(2);
    const double expected = oracle::infonce(g, labels, tau);
    CHECK(std::abs(l_trig(g, labels, tau) - expected) < 1e-9 * std::max(1.0, std::abs(expected)));
  }
}

TEST_CASE("losses ignore a common positive rescaling") {
  RngStream rng(4, "scale");
  const auto g = random_groups(rng, 3, 2, 4);
  auto scaled = g;
  for (auto& o : scaled)
    for (auto& v : o)
      for (double& x : v) x *= 37.5;
  const std::vector<std::size_t> labels{0, 1, 0};
  CHECK(std::abs(l_cls(g, 0.1) - l_cls(scaled, 0.1)) < 1e-9);
  CHECK(std::abs(l_trig(g, labels, 0.1) - l_trig(scaled, labels, 0.1)) < 1e-9);
}

TEST_CASE("large temperature flattens every term to log of the negative count") {
  RngStream rng(5, "tau");
  const std::size_t n = 4, views = 3;
  const auto g = random_groups(rng, n, views, 3);
  // n*views anchors, views-1 positives each, (n-1)*views negatives each.
  const double limit = static_cast<double>(n * views * (views - 1)) *
                       std::log(static_cast<double>((n - 1) * views)) /
                       static_cast<double>((n - 1) * (views - 1));
  CHECK(std::abs(l_cls(g, 1e8) - limit) < 1e-6);
}

TEST_CASE("degenerate batches") {
  bool skipped = false;
  Tape tape(false);
  std::vector<std::vector<Var>> one{{tape.constant(Matrix(1, 1, 1.0)),
                                     tape.constant(Matrix(1, 1, 2.0))}};
  CHECK(l_cls(tape, one, 0.1, &skipped).scalar() == 0.0);
  CHECK(skipped);
  const ViewGroups same_label{{{1, 0}, {0, 1}}, {{1, 1}, {1, 0}}};
  const std::vector<std::size_t> labels{2, 2};
  CHECK(l_trig(same_label, labels, 0.1) == 0.0);
  CHECK_THROWS_AS(l_cls(same_label, 0.0), InvalidArgument);
  const ViewGroups ragged{{{1, 0}, {0, 1}}, {{1, 1}}};
  CHECK_THROWS_AS(l_cls(ragged, 0.1), InvalidArgument);
  const ViewGroups single_view{{{1, 0}}, {{0, 1}}};
  CHECK_THROWS_AS(l_cls(single_view, 0.1), InvalidArgument);
  const std::vector<std::size_t> short_labels{0};
  CHECK_THROWS_AS(l_trig(same_label, short_labels, 0.1), InvalidArgument);
}

TEST_CASE("both losses have correct gradients") {
  RngStream rng(6, "grad");
  std::vector<Parameter> reps;
  for (int i = 0; i < 6; ++i) {
    Matrix m(1, 4);
    for (double& x : m.values()) x = rng.normal();
    reps.emplace_back("rep" + std::to_string(i), std::move(m));
  }
  std::vector<Parameter*> params;
  for (auto& p : reps) params.push_back(&p);
  for (bool trig : {false, true}) {
    LossFn fn = [&](bool with_grad) {
      Tape tape(with_grad);
      std::vector<Var> v;
      for (auto& p : reps) v.push_back(tape.param(p));
      Var loss;
      if (trig) {
        loss = l_trig(tape, {{0, {v[0], v[1]}}, {1, {v[2], v[3]}}, {0, {v[4], v[5]}}}, 0.2);
      } else {
        loss = l_cls(tape, {{v[0], v[1]}, {v[2], v[3]}, {v[4], v[5]}}, 0.2);
      }
      if (with_grad) tape.backward(loss);
      return loss.scalar();
    };
    CHECK(finite_diff_check(fn, params, 1e-5, 1e-6).passed);
  }
}

TEST_CASE("shuffle permutes units and keeps triggers contiguous") {
  const Instance inst = sentence();
  RngStream rng(7, "aug");
  const std::vector<Span> tracked{{2, 4}, {0, 1}};
  const std::vector<std::string> vocab{"z"};
  const auto views = augment(inst, tracked, AugMethod::kShuffle, 20, rng, vocab);
  REQUIRE(views.size() == 20);
  bool moved = false;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const AugmentedView& view = views[v];
    CHECK(view.view_index == v + 2);
    CHECK(view.origin_id == "s");
    auto a = inst.tokens, b = view.instance.tokens;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    REQUIRE(view.instance.triggers.size() == 2);
    for (std::size_t t = 0; t < 2; ++t) {
      const Span from = inst.triggers[t].span;
      const Span to = view.instance.triggers[t].span;
      CHECK(view.instance.triggers[t].label == inst.triggers[t].label);
      CHECK(std::equal(inst.tokens.begin() + from.start, inst.tokens.begin() + from.end,
                       view.instance.tokens.begin() + to.start, view.instance.tokens.begin() + to.end));
    }
    REQUIRE(view.tracked.size() == 2);
    CHECK(view.tracked[0] == view.instance.triggers[0].span);
    CHECK(view.instance.tokens[view.tracked[1].start] == "a");
    moved = moved || view.instance.tokens != inst.tokens;
  }
  CHECK(moved);
}

TEST_CASE("augmentation is a function of the stream") {
  const Instance inst = sentence();
  const std::vector<std::string> vocab{"p", "q", "r"};
  for (AugMethod m : {AugMethod::kShuffle, AugMethod::kRtr}) {
    RngStream a(8, "aug"), b(8, "aug");
    const auto va = augment(inst, {}, m, 3, a, vocab, 0.5);
    const auto vb = augment(inst, {}, m, 3, b, vocab, 0.5);
    for (std::size_t i = 0; i < 3; ++i) CHECK(va[i].instance == vb[i].instance);
  }
}

TEST_CASE("rtr leaves trigger tokens alone") {
  const Instance inst = sentence();
  const std::vector<std::string> vocab{"p", "q"};
  RngStream rng(9, "rtr");
  const auto all = augment(inst, {}, AugMethod::kRtr, 1, rng, vocab, 1.0)[0].instance;
  for (std::size_t k = 0; k < inst.tokens.size(); ++k) {
    const bool trig = (k >= 2 && k < 4) || k == 6;
    if (trig) {
      CHECK(all.tokens[k] == inst.tokens[k]);
    } else {
      CHECK((all.tokens[k] == "p" || all.tokens[k] == "q"));
    }
  }
  CHECK(all.triggers == inst.triggers);
  const auto none = augment(inst, {}, AugMethod::kRtr, 1, rng, vocab, 0.0)[0].instance;
  CHECK(none == inst);
}

TEST_CASE("dropout views are copies") {
  const Instance inst = sentence();
  RngStream rng(10, "d");
  const std::vector<Span> tracked{{6, 7}};
  const auto views = augment(inst, tracked, AugMethod::kDropout, 2, rng, {});
  CHECK(views[1].instance == inst);
  CHECK(views[1].tracked == tracked);
}

TEST_CASE("augmentation argument errors") {
  const Instance inst = sentence();
  RngStream rng(11, "e");
  const std::vector<std::string> vocab{"p"};
  CHECK_THROWS_AS(augment(inst, {}, AugMethod::kShuffle, 0, rng, vocab), InvalidArgument);
  CHECK_THROWS_AS(augment(inst, {}, AugMethod::kRtr, 1, rng, {}), InvalidArgument);
  CHECK_THROWS_AS(augment(inst, {}, AugMethod::kRtr, 1, rng, vocab, 1.5), InvalidArgument);
  const std::vector<Span> outside{{7, 9}};
  CHECK_THROWS_AS(augment(inst, outside, AugMethod::kShuffle, 1, rng, vocab), InvalidArgument);
  const std::vector<Span> straddle{{3, 5}};
  CHECK_THROWS_AS(augment(inst, straddle, AugMethod::kShuffle, 1, rng, vocab), InvalidArgument);
  CHECK(parse_aug_method(aug_method_name(AugMethod::kRtr)) == AugMethod::kRtr);
  CHECK_THROWS_AS(parse_aug_method("mixup"), InvalidArgument);
}
