// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small contextual encoder: token + position embeddings, one single-head
// self-attention block and one position-wise feed-forward block, both residual.
// Row 0 of the hidden matrix is a learned summary slot; token i sits at row i+1.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hanet/autograd.hpp"
#include "hanet/corpus.hpp"
#include "hanet/rng.hpp"

namespace hanet {

class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kSummary = 1;
  static constexpr std::size_t kReserved = 2;

  Vocabulary() = default;
  /// `tokens` excludes the reserved entries; token i receives id i + kReserved.
  explicit Vocabulary(std::vector<std::string> tokens);
  /// Sorted unique tokens of all instances.
  static Vocabulary from_instances(const std::vector<Instance>& instances);

  std::size_t id(std::string_view token) const;
  std::vector<std::size_t> ids(const std::vector<std::string>& tokens) const;
  std::size_t size() const noexcept { return tokens_.size() + kReserved; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t model_dim = 16;
  std::size_t ff_dim = 32;
  /// Includes the summary slot.
  std::size_t max_len = 0;
  double dropout_rate = 0.1;
};

struct EncoderParams {
  EncoderConfig config;
  Parameter token_embeddings;
  Parameter position_embeddings;
  Parameter query;
  Parameter key;
  Parameter value;
  Parameter output;
  Parameter ff_in;
  Parameter ff_in_bias;
  Parameter ff_out;
  Parameter ff_out_bias;

  /// Weights ~ Normal(0, init_std^2) from `rng`; biases zero.
  static EncoderParams init(const EncoderConfig& config, double init_std, RngStream rng);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t dim() const noexcept { return config.model_dim; }
};

enum class Mode { kTrain, kEval };

/// Encoder parameters placed on a tape once per forward/backward pass.
struct BoundEncoder {
  const EncoderConfig* config = nullptr;
  Var token_embeddings, position_embeddings, query, key, value, output;
  Var ff_in, ff_in_bias, ff_out, ff_out_bias;
};

/// Trainable binding: gradients flow into `params`.
BoundEncoder bind(Tape& tape, EncoderParams& params);
/// Constant binding: parameters enter the tape as constants.
BoundEncoder bind_constant(Tape& tape, const EncoderParams& params);

/// Hidden states ((n+1) x d) for token ids. Dropout masks come from `rng` in
/// train mode; eval mode never touches `rng`. If `attention` is non-null the
/// attention weights are copied into it.
Var encode(const BoundEncoder& enc, std::span<const std::size_t> token_ids, Mode mode,
           RngStream& rng, Matrix* attention = nullptr);

/// Concatenation of the first and last token rows of `span` (length 2d).
Var trigger_rep(Var hidden, const Span& span);
/// The summary row (length d).
Var sentence_rep(Var hidden);

// Value-level conveniences over a private no-grad tape.
Matrix encode_values(const EncoderParams& params, const Vocabulary& vocab,
                     const Instance& instance, Mode mode, RngStream& rng);
std::vector<double> trigger_rep_values(const Matrix& hidden, const Span& span);
std::vector<double> sentence_rep_values(const Matrix& hidden);

}  // namespace hanet
