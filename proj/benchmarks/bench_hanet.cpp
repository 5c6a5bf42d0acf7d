// SPDX-License-Identifier: Apache-2.0
// Hot paths of a training step, on the desk-scale synthetic benchmark.

#include <benchmark/benchmark.h>

#include "hanet/contrastive.hpp"
#include "hanet/eval.hpp"
#include "hanet/trainer.hpp"

using namespace hanet;

namespace {

const Benchmark& desk() {
  static const Benchmark bench = build_benchmark(gen_synthetic_corpus({}), {});
  return bench;
}

void BM_EncodeForward(benchmark::State& state) {
  TrainConfig c;
  c.model_dim = static_cast<std::size_t>(state.range(0));
  c.ff_dim = 2 * c.model_dim;
  const Model m = initial_model(desk(), c, 1);
  const Instance& inst = desk().instances().front();
  RngStream rng(1, "bench");
  for (auto _ : state) benchmark::DoNotOptimize(encode_values(m.encoder, m.vocab, inst, Mode::kEval, rng));
}
BENCHMARK(BM_EncodeForward)->Arg(16)->Arg(64);

void BM_StageLossBackward(benchmark::State& state) {
  TrainConfig c;
  c.epochs = 1;
  StageState s = initial_state(RunMode::kHanet);
  run_stage(s, desk(), 1, c);
  begin_stage(s, desk(), 2, c);
  TrainingBatch batch;
  const auto pool = training_pool(s, desk(), c);
  batch.candidates.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(c.batch_size));
  RngStream gauss(1, "gauss");
  batch.synthetic = sample_memory(*s.memory, desk(), s.model.encoder, s.model.vocab,
                                  s.model.registry, c.n_syn, gauss);
  for (auto _ : state) {
    for (Parameter* p : s.model.parameters()) p->zero_grad();
    benchmark::DoNotOptimize(stage_loss(s, desk(), batch, c, true).total);
  }
}
BENCHMARK(BM_StageLossBackward);

void BM_SentenceContrast(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RngStream rng(2, "bench");
  ViewGroups g(n, std::vector<std::vector<double>>(2, std::vector<double>(16)));
  for (auto& o : g)
    for (auto& v : o)
      for (double& x : v) x = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(l_cls(g, 0.1));
}
BENCHMARK(BM_SentenceContrast)->Arg(4)->Arg(32);

void BM_SelectExemplars(benchmark::State& state) {
  const TrainConfig c;
  const Model m = initial_model(desk(), c, 1);
  const TaskSplit& task = desk().tasks.front();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        select_exemplars(task.train, desk(), m.encoder, m.vocab, DistanceMetric::kL2));
  }
}
BENCHMARK(BM_SelectExemplars);

void BM_EvaluateStage(benchmark::State& state) {
  const TrainConfig c;
  const Model m = initial_model(desk(), c, 5);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_stage(m, desk(), 5));
}
BENCHMARK(BM_EvaluateStage);

}  // namespace

BENCHMARK_MAIN();
