// SPDX-License-Identifier: Apache-2.0
#include "hanet/memory.hpp"

#include <algorithm>
#include <limits>

#include "hanet/errors.hpp"
#include "hanet/numerics.hpp"

namespace hanet {

DistanceMetric parse_metric(std::string_view name) {
  if (name == "l2" || name == "L2") return DistanceMetric::kL2;
  if (name == "cosine") return DistanceMetric::kCosine;
  throw InvalidArgument("unknown distance metric " + std::string(name));
}

std::string_view metric_name(DistanceMetric m) {
  return m == DistanceMetric::kL2 ? "l2" : "cosine";
}

const Exemplar* MemorySet::find(std::string_view label) const {
  for (const Exemplar& e : entries_) {
    if (e.label() == label) return &e;
  }
  return nullptr;
}

MemorySet merge_memory(const MemorySet& previous, std::span<const Exemplar> added) {
  MemorySet out = previous;
  for (const Exemplar& e : added) {
    if (e.candidate.is_na()) throw InvalidArgument("merge_memory: NA exemplar");
    if (out.find(e.label()) != nullptr) {
      throw InvalidArgument("merge_memory: label " + e.label() + " already in memory");
    }
    out.entries_.push_back(e);
  }
  return out;
}

double representation_distance(std::span<const double> a, std::span<const double> b,
                               DistanceMetric metric) {
  if (metric == DistanceMetric::kL2) return squared_l2_distance(a, b);
  return 1.0 - cosine_similarity(a, b);
}

std::vector<Exemplar> select_exemplars_from_reps(std::span<const Candidate> candidates,
                                                 std::span<const std::vector<double>> reps,
                                                 DistanceMetric metric,
                                                 std::span<const std::string> required) {
  if (candidates.size() != reps.size()) {
    throw InvalidArgument("select_exemplars: candidate/representation count mismatch");
  }
  std::vector<std::string> labels;
  for (const Candidate& c : candidates) {
    if (!c.is_na() && std::find(labels.begin(), labels.end(), c.gold) == labels.end()) {
      labels.push_back(c.gold);
    }
  }
  for (const std::string& r : required) {
    if (std::find(labels.begin(), labels.end(), r) == labels.end()) {
      throw SelectionError("select_exemplars: label " + r + " has no training candidates");
    }
  }
  std::vector<Exemplar> out;
  for (const std::string& label : labels) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (candidates[i].gold == label) members.push_back(i);
    }
    // Sums run in (instance id, span) order so the moments do not depend on
    // the order candidates were supplied in.
    std::vector<std::size_t> canonical = members;
    std::sort(canonical.begin(), canonical.end(), [&](std::size_t a, std::size_t b) {
      const Candidate& ca = candidates[a];
      const Candidate& cb = candidates[b];
      return ca.instance_id != cb.instance_id ? ca.instance_id < cb.instance_id : ca.span < cb.span;
    });
    const std::size_t dim = reps[members.front()].size();
    std::vector<double> mean(dim, 0.0);
    for (std::size_t i : canonical) {
      if (reps[i].size() != dim) throw InvalidArgument("select_exemplars: ragged representations");
      for (std::size_t j = 0; j < dim; ++j) mean[j] += reps[i][j];
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    for (double& m : mean) m *= inv;

    std::vector<double> variance(dim, 0.0);
    for (std::size_t i : canonical) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = reps[i][j] - mean[j];
        variance[j] += d * d;
      }
    }
    for (double& v : variance) v *= inv;

    std::size_t best = members.front();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i : members) {
      const double dist = representation_distance(reps[i], mean, metric);
      if (dist < best_dist) {
        best_dist = dist;
        best = i;
      }
    }
    out.push_back({candidates[best], std::move(variance)});
  }
  return out;
}

std::vector<Exemplar> select_exemplars(std::span<const Candidate> candidates,
                                       const Benchmark& bench, const EncoderParams& encoder,
                                       const Vocabulary& vocab, DistanceMetric metric,
                                       std::span<const std::string> required) {
  std::vector<Candidate> kept;
  std::vector<std::vector<double>> reps;
  RngStream unused(0, "eval");
  for (const Candidate& c : candidates) {
    if (c.is_na()) continue;
    const Matrix hidden = encode_values(encoder, vocab, bench.instance(c.instance_id),
                                        Mode::kEval, unused);
    kept.push_back(c);
    reps.push_back(trigger_rep_values(hidden, c.span));
  }
  if (kept.empty() && required.empty()) {
    throw SelectionError("select_exemplars: no labeled training candidates");
  }
  return select_exemplars_from_reps(kept, reps, metric, required);
}

std::vector<double> exemplar_mean(const Exemplar& exemplar, const Benchmark& bench,
                                  const EncoderParams& encoder, const Vocabulary& vocab) {
  if (!bench.has_instance(exemplar.candidate.instance_id)) {
    throw MemoryIntegrityError("exemplar " + exemplar.label() + " references unknown instance " +
                               exemplar.candidate.instance_id);
  }
  RngStream unused(0, "eval");
  const Matrix hidden = encode_values(encoder, vocab, bench.instance(exemplar.candidate.instance_id),
                                      Mode::kEval, unused);
  return trigger_rep_values(hidden, exemplar.candidate.span);
}

std::vector<std::vector<double>> sample_prototypical(const Exemplar& exemplar,
                                                     const Benchmark& bench,
                                                     const EncoderParams& encoder,
                                                     const Vocabulary& vocab, std::size_t n_syn,
                                                     RngStream& rng) {
  const auto mean = exemplar_mean(exemplar, bench, encoder, vocab);
  if (mean.size() != exemplar.variance.size()) {
    throw MemoryIntegrityError("exemplar " + exemplar.label() +
                               ": stored variance length does not match representation");
  }
  return sample_gaussian(mean, exemplar.variance, n_syn, rng);
}

std::vector<SyntheticFeature> sample_memory(const MemorySet& memory, const Benchmark& bench,
                                            const EncoderParams& encoder, const Vocabulary& vocab,
                                            const LabelRegistry& registry, std::size_t n_syn,
                                            RngStream& rng) {
  std::vector<SyntheticFeature> out;
  for (const Exemplar& e : memory.exemplars()) {
    const std::size_t label = registry.index(e.label());
    for (auto& f : sample_prototypical(e, bench, encoder, vocab, n_syn, rng)) {
      out.push_back({std::move(f), label});
    }
  }
  return out;
}

Var replay_loss(Tape& tape, const BoundHead& head, std::span<const SyntheticFeature> features) {
  const std::size_t labels = head.weight.value().cols();
  std::vector<Var> terms;
  terms.reserve(features.size());
  for (const SyntheticFeature& f : features) {
    if (f.label >= labels) throw InvalidArgument("replay_loss: label missing from registry");
    Var x = tape.constant(Matrix::row_vector(f.feature));
    terms.push_back(ad::cross_entropy(head_logits(head, x), f.label));
  }
  if (terms.empty()) return tape.constant(Matrix(1, 1, 0.0));
  return ad::sum(terms);
}

double replay_loss(const HeadParams& head, std::span<const SyntheticFeature> features) {
  std::vector<LabeledRep> batch;
  for (const SyntheticFeature& f : features) {
    if (f.label >= head.label_count()) {
      throw InvalidArgument("replay_loss: label missing from registry");
    }
    batch.push_back({f.feature, f.label});
  }
  return ce_loss(head, batch);
}

}  // namespace hanet
