// SPDX-License-Identifier: Apache-2.0
#pragma once

// One-exemplar-per-type memory with Gaussian prototypical augmentation.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hanet/autograd.hpp"
#include "hanet/corpus.hpp"
#include "hanet/detector.hpp"
#include "hanet/encoder.hpp"
#include "hanet/rng.hpp"

namespace hanet {

enum class DistanceMetric { kL2, kCosine };

DistanceMetric parse_metric(std::string_view name);
std::string_view metric_name(DistanceMetric m);

struct Exemplar {
  Candidate candidate;
  /// Per-dimension spread of the type's representations around their mean.
  std::vector<double> variance;

  const std::string& label() const noexcept { return candidate.gold; }
  bool operator==(const Exemplar&) const = default;
};

/// Label -> exemplar, iterated in insertion (task) order.
class MemorySet {
 public:
  const std::vector<Exemplar>& exemplars() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const Exemplar* find(std::string_view label) const;

  bool operator==(const MemorySet&) const = default;

  friend MemorySet merge_memory(const MemorySet& previous, std::span<const Exemplar> added);

 private:
  std::vector<Exemplar> entries_;
};

/// Union; throws InvalidArgument when a label is already present.
MemorySet merge_memory(const MemorySet& previous, std::span<const Exemplar> added);

double representation_distance(std::span<const double> a, std::span<const double> b,
                               DistanceMetric metric);

/// Per non-NA label (first-appearance order): prototype = mean representation,
/// exemplar = candidate nearest the prototype (earliest wins ties), variance =
/// mean squared deviation from the prototype. `reps[i]` belongs to `candidates[i]`.
/// Every label in `required` must have at least one candidate (SelectionError).
std::vector<Exemplar> select_exemplars_from_reps(std::span<const Candidate> candidates,
                                                 std::span<const std::vector<double>> reps,
                                                 DistanceMetric metric,
                                                 std::span<const std::string> required = {});

/// Encodes every non-NA candidate in eval mode and selects from those reps.
std::vector<Exemplar> select_exemplars(std::span<const Candidate> candidates,
                                       const Benchmark& bench, const EncoderParams& encoder,
                                       const Vocabulary& vocab, DistanceMetric metric,
                                       std::span<const std::string> required = {});

/// Trigger representation of the exemplar under the given (current) encoder.
std::vector<double> exemplar_mean(const Exemplar& exemplar, const Benchmark& bench,
                                  const EncoderParams& encoder, const Vocabulary& vocab);

/// n_syn draws from Normal(mean under the current encoder, stored variance).
std::vector<std::vector<double>> sample_prototypical(const Exemplar& exemplar,
                                                     const Benchmark& bench,
                                                     const EncoderParams& encoder,
                                                     const Vocabulary& vocab, std::size_t n_syn,
                                                     RngStream& rng);

struct SyntheticFeature {
  std::vector<double> feature;
  std::size_t label = 0;
};

/// Synthetic features for every exemplar, in memory order.
std::vector<SyntheticFeature> sample_memory(const MemorySet& memory, const Benchmark& bench,
                                            const EncoderParams& encoder, const Vocabulary& vocab,
                                            const LabelRegistry& registry, std::size_t n_syn,
                                            RngStream& rng);

/// Sum of -log p_label with the head applied directly to each feature. The
/// features are tape constants, so only head parameters receive gradient.
Var replay_loss(Tape& tape, const BoundHead& head, std::span<const SyntheticFeature> features);
double replay_loss(const HeadParams& head, std::span<const SyntheticFeature> features);

}  // namespace hanet
