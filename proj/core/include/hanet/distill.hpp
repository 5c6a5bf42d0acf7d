// SPDX-License-Identifier: Apache-2.0
#pragma once

// Feature- and prediction-level distillation from a frozen previous model.
// Previous-model quantities enter as plain values, so no gradient can reach
// the frozen parameters.

#include <cstddef>
#include <span>
#include <vector>

#include "hanet/autograd.hpp"
#include "hanet/detector.hpp"
#include "hanet/encoder.hpp"

namespace hanet {

/// Complete copy of the model at the end of the previous stage.
struct FrozenSnapshot {
  EncoderParams encoder;
  HeadParams head;
  LabelRegistry registry;
};

/// Sum over pairs of 1 - cos(previous, current).
Var feature_distill(Tape& tape, std::span<const std::vector<double>> previous,
                    std::span<const Var> current);
double feature_distill(std::span<const std::vector<double>> previous,
                       std::span<const std::vector<double>> current);

struct SoftenOptions {
  double temperature = 2.0;
  /// Temperature applied outside the exponential, where it cancels out.
  bool literal_cancelling_form = false;
};

/// Softmax of logits[idx] / temperature (or plain softmax in the literal form).
std::vector<double> soften(std::span<const double> logits, std::span<const std::size_t> idx,
                           const SoftenOptions& opts);

/// Sum over samples of -sum_j p_prev_j log p_cur_j, both restricted to
/// `previous_labels` and softened with the same temperature.
Var predict_distill(Tape& tape, std::span<const std::vector<double>> previous_logits,
                    std::span<const Var> current_logits,
                    std::span<const std::size_t> previous_labels, const SoftenOptions& opts);
double predict_distill(std::span<const std::vector<double>> previous_logits,
                       std::span<const std::vector<double>> current_logits,
                       std::span<const std::size_t> previous_labels, const SoftenOptions& opts);

/// Indices 0..count-1.
std::vector<std::size_t> label_prefix(std::size_t count);

}  // namespace hanet
