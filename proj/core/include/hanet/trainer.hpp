// SPDX-License-Identifier: Apache-2.0
#pragma once

// Stage-by-stage continual training: loss scheduling, snapshotting the previous
// model, memory maintenance and stage checkpoints.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hanet/contrastive.hpp"
#include "hanet/corpus.hpp"
#include "hanet/distill.hpp"
#include "hanet/eval.hpp"
#include "hanet/memory.hpp"
#include "hanet/model.hpp"
#include "hanet/optim.hpp"

namespace hanet {

struct TrainConfig {
  double lambda_ce = 1.0;
  double lambda_re = 1.0;
  double lambda_cls = 1.0;
  double lambda_trig = 1.0;
  double lambda_fd = 1.0;
  double lambda_pd = 1.0;
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double tau = 0.1;
  double tau_d = 2.0;
  std::size_t m_aug = 1;
  std::size_t n_syn = 10;
  AugMethod aug_method = AugMethod::kShuffle;
  DistanceMetric metric = DistanceMetric::kL2;
  bool na_enabled = true;
  std::uint64_t seed = 1;

  std::size_t model_dim = 16;
  std::size_t ff_dim = 32;
  double dropout_rate = 0.1;
  double init_std = 0.1;
  double rtr_rate = 0.15;
  /// Memory exemplars join the classification batches as ordinary candidates.
  bool replay_in_ce = true;
  /// Prediction distillation with the temperature placed where it cancels.
  bool literal_pd_temperature = false;

  bool operator==(const TrainConfig&) const = default;
};

/// Throws InvalidArgument for negative weights or non-positive sizes/temperatures.
void validate_config(const TrainConfig& config);

/// JSON text with one key per field.
std::string config_to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are a ValidationError.
TrainConfig config_from_json(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);
std::string config_checksum(const TrainConfig& config);

enum class RunMode { kHanet, kFinetune, kRetrain };

RunMode parse_mode(std::string_view name);
std::string_view mode_name(RunMode mode);

/// The configuration a mode actually trains with: the baselines keep only the
/// classification loss.
TrainConfig effective_config(const TrainConfig& config, RunMode mode);

struct StageState {
  RunMode mode = RunMode::kHanet;
  /// Stage being trained (or last trained once `stage_complete`). 0 before the first.
  std::size_t stage = 0;
  bool stage_complete = true;
  std::size_t epochs_done = 0;
  Model model;
  std::optional<FrozenSnapshot> frozen;
  /// Never constructed in finetune mode.
  std::optional<MemorySet> memory;
  OptimizerState optimizer;
};

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double re = 0.0;
  double cls = 0.0;
  double trig = 0.0;
  double fd = 0.0;
  double pd = 0.0;
};

struct TrainingBatch {
  std::vector<Candidate> candidates;
  /// Replay features, already sampled around the current encoder's means.
  std::vector<SyntheticFeature> synthetic;
  RngStream dropout_rng{0, "dropout"};
  RngStream augment_rng{0, "augment"};
};

/// Weighted objective of the current stage. Stage 1 uses CE and the sentence
/// contrastive loss only; later stages add replay, trigger contrastive and both
/// distillation terms. Zero-weighted components are skipped entirely. With
/// `backward` the gradients are accumulated into the model parameters.
LossBreakdown stage_loss(StageState& state, const Benchmark& bench, const TrainingBatch& batch,
                         const TrainConfig& config, bool backward);

/// Candidates a stage trains on: the task (or, in retrain mode, all tasks so
/// far) plus memory exemplars when they replay through CE.
std::vector<Candidate> training_pool(const StageState& state, const Benchmark& bench,
                                     const TrainConfig& config);

/// Model with fresh encoder and a head covering tasks 1..tasks.
Model initial_model(const Benchmark& bench, const TrainConfig& config, std::size_t tasks);

/// Enters stage t: freezes a copy of the previous model, expands the head for the
/// new labels (retrain mode starts over from a fresh model) and resets the optimizer.
void begin_stage(StageState& state, const Benchmark& bench, std::size_t t,
                 const TrainConfig& config);
/// Runs up to `count` further epochs of the current stage.
void train_epochs(StageState& state, const Benchmark& bench, const TrainConfig& config,
                  std::size_t count);
/// Selects this task's exemplars into memory (hanet mode) and marks the stage done.
void finish_stage(StageState& state, const Benchmark& bench, const TrainConfig& config);

StageState initial_state(RunMode mode);

/// begin + all epochs + finish; writes `checkpoint_dir/stage<t>.json` when given.
void run_stage(StageState& state, const Benchmark& bench, std::size_t t,
               const TrainConfig& config,
               const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

/// Digest of everything a run's outputs depend on: code version, effective
/// configuration, benchmark checksum and mode.
std::string manifest_id(const TrainConfig& config, std::string_view benchmark_checksum,
                        RunMode mode);

struct StreamResult {
  RunReport report;
  StageState final_state;
};

/// Trains every stage of the benchmark in the given mode and scores stage t on
/// the accumulated test set 1..t. Stage reports carry mode, seed and checksum.
StreamResult run_stream(const Benchmark& bench, const TrainConfig& config, RunMode mode,
                        const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

}  // namespace hanet
