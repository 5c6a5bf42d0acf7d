// SPDX-License-Identifier: Apache-2.0
#include "hanet/distill.hpp"

#include <numeric>

#include "hanet/errors.hpp"
#include "hanet/numerics.hpp"

namespace hanet {

Var feature_distill(Tape& tape, std::span<const std::vector<double>> previous,
                    std::span<const Var> current) {
  if (previous.size() != current.size()) {
    throw InvalidArgument("feature_distill: previous/current count mismatch");
  }
  std::vector<Var> terms;
  for (std::size_t i = 0; i < previous.size(); ++i) {
    Var prev = tape.constant(Matrix::row_vector(previous[i]));
    Var c = ad::cosine(prev, current[i]);
    terms.push_back(ad::sub(tape.constant(Matrix(1, 1, 1.0)), c));
  }
  if (terms.empty()) return tape.constant(Matrix(1, 1, 0.0));
  return ad::sum(terms);
}

double feature_distill(std::span<const std::vector<double>> previous,
                       std::span<const std::vector<double>> current) {
  Tape tape(false);
  std::vector<Var> cur;
  for (const auto& c : current) cur.push_back(tape.constant(Matrix::row_vector(c)));
  return feature_distill(tape, previous, cur).scalar();
}

namespace {

double effective_temperature(const SoftenOptions& opts) {
  if (!(opts.temperature > 0.0)) {
    throw InvalidArgument("predict_distill: temperature must be positive");
  }
  return opts.literal_cancelling_form ? 1.0 : opts.temperature;
}

}  // namespace

std::vector<double> soften(std::span<const double> logits, std::span<const std::size_t> idx,
                           const SoftenOptions& opts) {
  const double t = effective_temperature(opts);
  std::vector<double> z;
  z.reserve(idx.size());
  for (std::size_t i : idx) {
    if (i >= logits.size()) throw InvalidArgument("soften: label index out of range");
    z.push_back(logits[i] / t);
  }
  return softmax_stable(z);
}

Var predict_distill(Tape& tape, std::span<const std::vector<double>> previous_logits,
                    std::span<const Var> current_logits,
                    std::span<const std::size_t> previous_labels, const SoftenOptions& opts) {
  const double t = effective_temperature(opts);
  if (previous_logits.size() != current_logits.size()) {
    throw InvalidArgument("predict_distill: previous/current count mismatch");
  }
  if (previous_labels.empty()) throw InvalidArgument("predict_distill: empty previous label set");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < previous_logits.size(); ++i) {
    const auto target = soften(previous_logits[i], previous_labels, opts);
    Var restricted = ad::select_cols(current_logits[i], previous_labels);
    terms.push_back(ad::soft_cross_entropy(ad::scale(restricted, 1.0 / t), target));
  }
  if (terms.empty()) return tape.constant(Matrix(1, 1, 0.0));
  return ad::sum(terms);
}

double predict_distill(std::span<const std::vector<double>> previous_logits,
                       std::span<const std::vector<double>> current_logits,
                       std::span<const std::size_t> previous_labels, const SoftenOptions& opts) {
  Tape tape(false);
  std::vector<Var> cur;
  for (const auto& c : current_logits) cur.push_back(tape.constant(Matrix::row_vector(c)));
  return predict_distill(tape, previous_logits, cur, previous_labels, opts).scalar();
}

std::vector<std::size_t> label_prefix(std::size_t count) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace hanet
