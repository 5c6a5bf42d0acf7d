// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hanet/autograd.hpp"
#include "hanet/rng.hpp"

namespace hanet {

/// Append-only list of observed labels. Index 0 is "NA" when enabled.
class LabelRegistry {
 public:
  explicit LabelRegistry(bool na_enabled = true);

  /// Appends a task's labels as one segment. Throws InvalidArgument on duplicates.
  void add_task(std::span<const std::string> labels);

  std::size_t index(std::string_view label) const;
  std::optional<std::size_t> find(std::string_view label) const;
  bool contains(std::string_view label) const { return find(label).has_value(); }

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  bool na_enabled() const noexcept { return na_enabled_; }
  /// [begin, end) label indices contributed by each task.
  const std::vector<std::pair<std::size_t, std::size_t>>& segments() const noexcept {
    return segments_;
  }
  std::size_t task_count() const noexcept { return segments_.size(); }
  /// Number of labels known after the first `tasks` tasks (NA slot included).
  std::size_t prefix_size(std::size_t tasks) const;

  bool operator==(const LabelRegistry&) const = default;

 private:
  bool na_enabled_;
  std::vector<std::string> labels_;
  std::vector<std::pair<std::size_t, std::size_t>> segments_;
};

/// Linear classifier: logits = h^T W + b with W of shape (2d x |L|).
struct HeadParams {
  Parameter weight;
  Parameter bias;

  /// One column per registry label, initialized from Normal(0, 0.02^2).
  static HeadParams create(std::size_t input_dim, const LabelRegistry& registry, RngStream& rng);

  std::size_t input_dim() const noexcept { return weight.value.rows(); }
  std::size_t label_count() const noexcept { return weight.value.cols(); }
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

inline constexpr double kHeadInitStd = 0.02;

/// Appends `labels` as a new task segment and one freshly drawn column per label.
/// Existing columns are untouched.
void expand_labels(HeadParams& head, LabelRegistry& registry, std::span<const std::string> labels,
                   RngStream& rng);

struct BoundHead {
  Var weight;
  Var bias;
};
BoundHead bind(Tape& tape, HeadParams& head);
BoundHead bind_constant(Tape& tape, const HeadParams& head);

/// 1 x |L| logit row for a 1 x 2d representation.
Var head_logits(const BoundHead& head, Var rep);

std::vector<double> logits_values(const HeadParams& head, std::span<const double> rep);
std::vector<double> classify(const HeadParams& head, std::span<const double> rep);

struct LabeledRep {
  std::vector<double> rep;
  std::size_t gold;
};
/// Sum over the batch of -log p_gold.
double ce_loss(const HeadParams& head, std::span<const LabeledRep> batch);

}  // namespace hanet
