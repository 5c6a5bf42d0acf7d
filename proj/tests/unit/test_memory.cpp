// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hanet/errors.hpp"
#include "hanet/memory.hpp"
#include "hanet/numerics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace hanet;

namespace {

Candidate cand(std::string inst, std::size_t start, std::string label) {
  return {std::move(inst), {start, start + 1}, std::move(label)};
}

}  // namespace

TEST_CASE("the exemplar is the candidate nearest the type mean") {
  const std::vector<Candidate> cs{cand("a", 0, "X"), cand("b", 0, "X"), cand("c", 0, "X")};
  const std::vector<std::vector<double>> reps{{0.0, 0.0}, {1.0, 0.0}, {3.0, 0.0}};
  const auto ex = select_exemplars_from_reps(cs, reps, DistanceMetric::kL2);
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].candidate.instance_id == "b");
  CHECK(ex[0].variance[0] == doctest::Approx(14.0 / 9.0).epsilon(1e-12));
  CHECK(ex[0].variance[1] == 0.0);
}

TEST_CASE("exemplar selection agrees with a brute-force scan") {
  RngStream rng(11, "memory-oracle");
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(9);
    const std::size_t d = 1 + rng.uniform_int(6);
    std::vector<Candidate> cs;
    std::vector<std::vector<double>> reps;
    for (std::size_t i = 0; i < n; ++i) {
      cs.push_back(cand("i" + std::to_string(i), 0, "T"));
      std::vector<double> r(d);
      for (double& v : r) v = rng.normal();
      reps.push_back(std::move(r));
    }
    for (DistanceMetric m : {DistanceMetric::kL2, DistanceMetric::kCosine}) {
      const auto ex = select_exemplars_from_reps(cs, reps, m);
      const auto best = oracle::nearest_to_mean(reps, m == DistanceMetric::kCosine);
      const auto chosen = static_cast<std::size_t>(
          std::find(cs.begin(), cs.end(), ex.at(0).candidate) - cs.begin());
      CHECK(std::find(best.begin(), best.end(), chosen) != best.end());
      // Without a near-tie the choice is unique.
      if (best.size() == 1) CHECK(chosen == best[0]);
    }
  }
}

TEST_CASE("labels are grouped in first-appearance order and NA is skipped") {
  const std::vector<Candidate> cs{cand("a", 0, "B"), cand("a", 1, "NA"), cand("b", 0, "A"),
                                  cand("c", 0, "B")};
  const std::vector<std::vector<double>> reps{{1.0}, {9.0}, {2.0}, {3.0}};
  const auto ex = select_exemplars_from_reps(cs, reps, DistanceMetric::kL2);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].label() == "B");
  CHECK(ex[1].label() == "A");
  // Tie between distance 1 on both sides: the earliest supplied candidate wins.
  CHECK(ex[0].candidate.instance_id == "a");
}

TEST_CASE("stored variance does not depend on candidate order") {
  RngStream rng(5, "order");
  std::vector<Candidate> cs;
  std::vector<std::vector<double>> reps;
  for (int i = 0; i < 12; ++i) {
    cs.push_back(cand("i" + std::to_string(i), 0, "T"));
    reps.push_back({rng.normal() * 1e3, rng.normal() * 1e-3, rng.normal()});
  }
  const auto base = select_exemplars_from_reps(cs, reps, DistanceMetric::kL2);
  std::vector<std::size_t> perm(cs.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (int round = 0; round < 5; ++round) {
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
    std::vector<Candidate> pc;
    std::vector<std::vector<double>> pr;
    for (std::size_t i : perm) {
      pc.push_back(cs[i]);
      pr.push_back(reps[i]);
    }
    const auto shuffled = select_exemplars_from_reps(pc, pr, DistanceMetric::kL2);
    CHECK(shuffled[0].variance == base[0].variance);
    CHECK(shuffled[0].candidate == base[0].candidate);
  }
}

TEST_CASE("selection errors") {
  const std::vector<Candidate> cs{cand("a", 0, "X")};
  const std::vector<std::vector<double>> one{{1.0}};
  const std::vector<std::string> need{"X", "Y"};
  CHECK_THROWS_AS(select_exemplars_from_reps(cs, one, DistanceMetric::kL2, need), SelectionError);
  CHECK_THROWS_AS(select_exemplars_from_reps(cs, {}, DistanceMetric::kL2), InvalidArgument);
  const std::vector<Candidate> two{cand("a", 0, "X"), cand("b", 0, "X")};
  const std::vector<std::vector<double>> ragged{{1.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(select_exemplars_from_reps(two, ragged, DistanceMetric::kL2), InvalidArgument);
}

TEST_CASE("merging memory keeps task order and rejects duplicates") {
  MemorySet m;
  const std::vector<Exemplar> first{{cand("a", 0, "X"), {1.0}}, {cand("b", 0, "Y"), {2.0}}};
  const std::vector<Exemplar> second{{cand("c", 0, "Z"), {3.0}}};
  const MemorySet m1 = merge_memory(m, first);
  const MemorySet m2 = merge_memory(m1, second);
  CHECK(m.empty());
  CHECK(m1.size() == 2);
  REQUIRE(m2.size() == 3);
  CHECK(m2.exemplars()[2].label() == "Z");
  CHECK(m2.find("Y")->candidate.instance_id == "b");
  CHECK(m2.find("Q") == nullptr);
  CHECK_THROWS_AS(merge_memory(m2, first), InvalidArgument);
  const std::vector<Exemplar> na{{cand("d", 0, "NA"), {0.0}}};
  CHECK_THROWS_AS(merge_memory(m2, na), InvalidArgument);
}

TEST_CASE("encoder-backed selection keeps one exemplar per task label") {
  const Benchmark bench = test::toy_bench();
  const Vocabulary vocab = Vocabulary::from_instances(bench.instances());
  const EncoderParams enc = test::toy_encoder(vocab);
  const TaskSplit& task = bench.tasks[0];
  const auto ex = select_exemplars(task.train, bench, enc, vocab, DistanceMetric::kL2, task.labels);
  REQUIRE(ex.size() == task.labels.size());
  for (const Exemplar& e : ex) {
    CHECK(std::find(task.labels.begin(), task.labels.end(), e.label()) != task.labels.end());
    CHECK(e.variance.size() == 2 * enc.dim());
    CHECK(std::find(task.train.begin(), task.train.end(), e.candidate) != task.train.end());
  }
}

TEST_CASE("prototypical samples center on the current encoder's representation") {
  const Benchmark bench = test::toy_bench();
  const Vocabulary vocab = Vocabulary::from_instances(bench.instances());
  const EncoderParams enc = test::toy_encoder(vocab);
  const TaskSplit& task = bench.tasks[0];
  auto ex = select_exemplars(task.train, bench, enc, vocab, DistanceMetric::kL2)[0];
  const auto mean = exemplar_mean(ex, bench, enc, vocab);

  ex.variance.assign(mean.size(), 0.0);
  RngStream rng(1, "syn");
  for (const auto& s : sample_prototypical(ex, bench, enc, vocab, 3, rng)) CHECK(s == mean);

  // The mean is recomputed under whichever encoder is supplied.
  const EncoderParams other = test::toy_encoder(vocab, 8, 0.0, 0.5, 99);
  const auto moved = exemplar_mean(ex, bench, other, vocab);
  CHECK(moved != mean);

  ex.variance.assign(mean.size(), 0.25);
  RngStream big(2, "syn");
  const auto draws = sample_prototypical(ex, bench, enc, vocab, 4000, big);
  double m0 = 0.0;
  for (const auto& s : draws) m0 += s[0];
  m0 /= static_cast<double>(draws.size());
  CHECK(std::abs(m0 - mean[0]) < 4.0 * 0.5 / std::sqrt(4000.0));
}

TEST_CASE("memory integrity failures") {
  const Benchmark bench = test::toy_bench();
  const Vocabulary vocab = Vocabulary::from_instances(bench.instances());
  const EncoderParams enc = test::toy_encoder(vocab);
  RngStream rng(1, "syn");
  const Exemplar ghost{cand("no-such-instance", 0, "X"), std::vector<double>(16, 1.0)};
  CHECK_THROWS_AS(sample_prototypical(ghost, bench, enc, vocab, 1, rng), MemoryIntegrityError);
  Exemplar short_var{bench.tasks[0].train.front(), {1.0}};
  CHECK_THROWS_AS(sample_prototypical(short_var, bench, enc, vocab, 1, rng), MemoryIntegrityError);
}

TEST_CASE("replay gradient reaches the head only") {
  const Benchmark bench = test::toy_bench();
  Vocabulary vocab = Vocabulary::from_instances(bench.instances());
  EncoderParams enc = test::toy_encoder(vocab);
  LabelRegistry reg(true);
  reg.add_task(bench.tasks[0].labels);
  RngStream init(3, "head");
  HeadParams head = HeadParams::create(2 * enc.dim(), reg, init);

  MemorySet mem;
  mem = merge_memory(mem, select_exemplars(bench.tasks[0].train, bench, enc, vocab,
                                           DistanceMetric::kL2));
  RngStream rng(4, "syn");
  const auto feats = sample_memory(mem, bench, enc, vocab, reg, 5, rng);
  CHECK(feats.size() == 5 * mem.size());

  Tape tape(true);
  const BoundEncoder be = bind(tape, enc);
  (void)be;
  const BoundHead bh = bind(tape, head);
  Var loss = replay_loss(tape, bh, feats);
  CHECK(std::abs(loss.scalar() - replay_loss(head, feats)) < 1e-12);
  tape.backward(loss);
  for (const Parameter* p : std::as_const(enc).parameters()) {
    for (double g : p->grad.values()) CHECK(g == 0.0);
  }
  double head_norm = 0.0;
  for (double g : head.weight.grad.values()) head_norm += g * g;
  CHECK(head_norm > 0.0);

  std::vector<SyntheticFeature> bad{{feats[0].feature, 99}};
  CHECK_THROWS_AS(replay_loss(head, bad), InvalidArgument);
  Tape empty(false);
  CHECK(replay_loss(empty, bind(empty, head), {}).scalar() == 0.0);
}

TEST_CASE("metric names round trip") {
  CHECK(parse_metric("l2") == DistanceMetric::kL2);
  CHECK(parse_metric(metric_name(DistanceMetric::kCosine)) == DistanceMetric::kCosine);
  CHECK_THROWS_AS(parse_metric("manhattan"), InvalidArgument);
}
