// SPDX-License-Identifier: Apache-2.0
#include "hanet/detector.hpp"

#include <algorithm>
#include <cmath>

#include "hanet/corpus.hpp"
#include "hanet/errors.hpp"
#include "hanet/numerics.hpp"

namespace hanet {

LabelRegistry::LabelRegistry(bool na_enabled) : na_enabled_(na_enabled) {
  if (na_enabled_) labels_.emplace_back(kNaLabel);
}

void LabelRegistry::add_task(std::span<const std::string> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) throw InvalidArgument("label registry: empty label");
    if (contains(labels[i]) || std::find(labels.begin(), labels.begin() + i, labels[i]) !=
                                   labels.begin() + i) {
      throw InvalidArgument("label registry: duplicate label " + labels[i]);
    }
  }
  const std::size_t begin = labels_.size();
  labels_.insert(labels_.end(), labels.begin(), labels.end());
  segments_.emplace_back(begin, labels_.size());
}

std::optional<std::size_t> LabelRegistry::find(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

std::size_t LabelRegistry::index(std::string_view label) const {
  auto i = find(label);
  if (!i) throw InvalidArgument("label registry: unknown label " + std::string(label));
  return *i;
}

std::size_t LabelRegistry::prefix_size(std::size_t tasks) const {
  if (tasks == 0) return na_enabled_ ? 1 : 0;
  if (tasks > segments_.size()) throw InvalidArgument("label registry: task index out of range");
  return segments_[tasks - 1].second;
}

namespace {

std::vector<double> draw_column(std::size_t rows, RngStream& rng) {
  std::vector<double> col(rows);
  for (double& v : col) v = kHeadInitStd * rng.normal();
  return col;
}

void append_columns(HeadParams& head, std::size_t count, RngStream& rng) {
  const std::size_t rows = head.input_dim();
  const std::size_t old_cols = head.label_count();
  const std::size_t new_cols = old_cols + count;
  Matrix w(rows, new_cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < old_cols; ++c) w(r, c) = head.weight.value(r, c);
  Matrix b(1, new_cols);
  for (std::size_t c = 0; c < old_cols; ++c) b(0, c) = head.bias.value(0, c);
  for (std::size_t c = old_cols; c < new_cols; ++c) {
    const auto col = draw_column(rows, rng);
    for (std::size_t r = 0; r < rows; ++r) w(r, c) = col[r];
    b(0, c) = kHeadInitStd * rng.normal();
  }
  head.weight = {"head_weight", std::move(w)};
  head.bias = {"head_bias", std::move(b)};
}

}  // namespace

HeadParams HeadParams::create(std::size_t input_dim, const LabelRegistry& registry,
                              RngStream& rng) {
  if (input_dim == 0) throw InvalidArgument("head: input_dim must be positive");
  HeadParams head{{"head_weight", Matrix(input_dim, 0)}, {"head_bias", Matrix(1, 0)}};
  append_columns(head, registry.size(), rng);
  return head;
}

void expand_labels(HeadParams& head, LabelRegistry& registry, std::span<const std::string> labels,
                   RngStream& rng) {
  if (head.label_count() != registry.size()) {
    throw StateError("expand_labels: head and registry disagree on label count");
  }
  registry.add_task(labels);
  append_columns(head, labels.size(), rng);
}

BoundHead bind(Tape& tape, HeadParams& head) {
  return {tape.param(head.weight), tape.param(head.bias)};
}

BoundHead bind_constant(Tape& tape, const HeadParams& head) {
  return {tape.constant(head.weight.value), tape.constant(head.bias.value)};
}

Var head_logits(const BoundHead& head, Var rep) {
  if (rep.value().cols() != head.weight.value().rows() || rep.value().rows() != 1) {
    throw InvalidArgument("classify: representation length does not match head input");
  }
  return ad::add_row(ad::matmul(rep, head.weight), head.bias);
}

std::vector<double> logits_values(const HeadParams& head, std::span<const double> rep) {
  if (rep.size() != head.input_dim()) {
    throw InvalidArgument("classify: representation length " + std::to_string(rep.size()) +
                          " does not match head input " + std::to_string(head.input_dim()));
  }
  std::vector<double> z(head.bias.value.values());
  for (std::size_t r = 0; r < rep.size(); ++r) {
    const double x = rep[r];
    for (std::size_t c = 0; c < z.size(); ++c) z[c] += x * head.weight.value(r, c);
  }
  return z;
}

std::vector<double> classify(const HeadParams& head, std::span<const double> rep) {
  return softmax_stable(logits_values(head, rep));
}

double ce_loss(const HeadParams& head, std::span<const LabeledRep> batch) {
  double total = 0.0;
  for (const LabeledRep& s : batch) {
    if (s.gold >= head.label_count()) throw InvalidArgument("ce_loss: gold index out of range");
    const auto z = logits_values(head, s.rep);
    const double mx = *std::max_element(z.begin(), z.end());
    double acc = 0.0;
    for (double v : z) acc += std::exp(v - mx);
    total += mx + std::log(acc) - z[s.gold];
  }
  return total;
}

}  // namespace hanet
