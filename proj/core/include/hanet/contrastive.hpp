// SPDX-License-Identifier: Apache-2.0
#pragma once

// View generation and the sentence/trigger InfoNCE objectives.
//
// Both losses use cosine similarity. For origin i with views 1..m+1, every
// ordered pair (j, k != j) contributes
//   -log( exp(S(a, pos)/tau) / sum_{negatives} exp(S(a, neg)/tau) )
// and the total is scaled by 1/(n-1) * 1/m, n = number of origins.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hanet/autograd.hpp"
#include "hanet/corpus.hpp"
#include "hanet/rng.hpp"

namespace hanet {

enum class AugMethod { kDropout, kShuffle, kRtr };

AugMethod parse_aug_method(std::string_view name);
std::string_view aug_method_name(AugMethod m);

struct AugmentedView {
  std::string origin_id;
  /// 1 is the untransformed original.
  std::size_t view_index = 1;
  AugMethod method = AugMethod::kShuffle;
  Instance instance;
  /// New positions of the tracked spans, in the order they were given.
  std::vector<Span> tracked;
};

/// Returns m_aug transformed views (indices 2..m_aug+1) of `instance`. Each
/// tracked span must be a trigger span or disjoint from every trigger.
///   shuffle: uniform permutation of units, each trigger span (and each
///            tracked span) moving as one contiguous block;
///   rtr:     every non-trigger token replaced with probability rtr_rate by a
///            uniform draw from `vocab_tokens`;
///   dropout: copies; the views differ only through encoder dropout.
std::vector<AugmentedView> augment(const Instance& instance, std::span<const Span> tracked,
                                   AugMethod method,
                                   std::size_t m_aug, RngStream& rng,
                                   std::span<const std::string> vocab_tokens,
                                   double rtr_rate = 0.15);

struct TriggerGroup {
  std::size_t label = 0;
  std::vector<Var> views;
};

/// Sentence-level loss over origin groups of summary representations.
/// Fewer than two origins yields 0 and sets *skipped.
Var l_cls(Tape& tape, const std::vector<std::vector<Var>>& groups, double tau,
          bool* skipped = nullptr);

/// Trigger-level loss: positives are same-label views of other origins,
/// negatives are views of other origins with a different label. Anchors
/// without negatives contribute 0.
Var l_trig(Tape& tape, const std::vector<TriggerGroup>& groups, double tau);

// Value-level forms for fixtures and oracles.
using ViewGroups = std::vector<std::vector<std::vector<double>>>;
double l_cls(const ViewGroups& groups, double tau);
double l_trig(const ViewGroups& groups, std::span<const std::size_t> labels, double tau);

}  // namespace hanet
