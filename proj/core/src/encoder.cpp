// SPDX-License-Identifier: Apache-2.0
#include "hanet/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hanet/errors.hpp"

namespace hanet {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i + kReserved).second) {
      throw InvalidArgument("vocabulary: duplicate token " + tokens_[i]);
    }
  }
}

Vocabulary Vocabulary::from_instances(const std::vector<Instance>& instances) {
  std::set<std::string> all;
  for (const Instance& inst : instances) all.insert(inst.tokens.begin(), inst.tokens.end());
  return Vocabulary(std::vector<std::string>(all.begin(), all.end()));
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::ids(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) out.push_back(id(t));
  return out;
}

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, RngStream& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = stddev * rng.normal();
  return m;
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& c, double init_std, RngStream rng) {
  if (c.model_dim < 2 || c.model_dim % 2 != 0) {
    throw InvalidArgument("encoder: model_dim must be even and >= 2");
  }
  if (c.vocab_size < Vocabulary::kReserved || c.max_len < 2 || c.ff_dim == 0) {
    throw InvalidArgument("encoder: invalid configuration");
  }
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) {
    throw InvalidArgument("encoder: dropout_rate must be in [0, 1)");
  }
  const std::size_t d = c.model_dim;
  EncoderParams p;
  p.config = c;
  p.token_embeddings = {"token_embeddings", gaussian_matrix(c.vocab_size, d, init_std, rng)};
  p.position_embeddings = {"position_embeddings", gaussian_matrix(c.max_len, d, init_std, rng)};
  p.query = {"query", gaussian_matrix(d, d, init_std, rng)};
  p.key = {"key", gaussian_matrix(d, d, init_std, rng)};
  p.value = {"value", gaussian_matrix(d, d, init_std, rng)};
  p.output = {"output", gaussian_matrix(d, d, init_std, rng)};
  p.ff_in = {"ff_in", gaussian_matrix(d, c.ff_dim, init_std, rng)};
  p.ff_in_bias = {"ff_in_bias", Matrix(1, c.ff_dim)};
  p.ff_out = {"ff_out", gaussian_matrix(c.ff_dim, d, init_std, rng)};
  p.ff_out_bias = {"ff_out_bias", Matrix(1, d)};
  return p;
}

std::vector<Parameter*> EncoderParams::parameters() {
  return {&token_embeddings, &position_embeddings, &query, &key,        &value,
          &output,           &ff_in,               &ff_in_bias, &ff_out, &ff_out_bias};
}

std::vector<const Parameter*> EncoderParams::parameters() const {
  return {&token_embeddings, &position_embeddings, &query, &key,        &value,
          &output,           &ff_in,               &ff_in_bias, &ff_out, &ff_out_bias};
}

BoundEncoder bind(Tape& tape, EncoderParams& p) {
  return {&p.config,          tape.param(p.token_embeddings), tape.param(p.position_embeddings),
          tape.param(p.query), tape.param(p.key),             tape.param(p.value),
          tape.param(p.output), tape.param(p.ff_in),          tape.param(p.ff_in_bias),
          tape.param(p.ff_out), tape.param(p.ff_out_bias)};
}

BoundEncoder bind_constant(Tape& tape, const EncoderParams& p) {
  auto c = [&tape](const Parameter& q) { return tape.constant(q.value); };
  return {&p.config,   c(p.token_embeddings), c(p.position_embeddings), c(p.query),
          c(p.key),    c(p.value),            c(p.output),              c(p.ff_in),
          c(p.ff_in_bias), c(p.ff_out),       c(p.ff_out_bias)};
}

namespace {

Var dropout(Var x, double rate, Mode mode, RngStream& rng) {
  if (mode == Mode::kEval || rate == 0.0) return x;
  const Matrix& v = x.value();
  Matrix m(v.rows(), v.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& e : m.values()) e = rng.uniform() < rate ? 0.0 : keep_scale;
  return ad::mask(x, m);
}

}  // namespace

Var encode(const BoundEncoder& enc, std::span<const std::size_t> token_ids, Mode mode,
           RngStream& rng, Matrix* attention) {
  const EncoderConfig& c = *enc.config;
  if (token_ids.size() + 1 > c.max_len) {
    throw LengthError("encode: sentence of " + std::to_string(token_ids.size()) +
                      " tokens exceeds max_len - 1 = " + std::to_string(c.max_len - 1));
  }
  std::vector<std::size_t> ids;
  ids.reserve(token_ids.size() + 1);
  ids.push_back(Vocabulary::kSummary);
  for (std::size_t id : token_ids) {
    if (id >= c.vocab_size) throw InvalidArgument("encode: token id out of range");
    ids.push_back(id);
  }
  const double rate = c.dropout_rate;

  Var x = ad::add(ad::gather_rows(enc.token_embeddings, ids),
                  ad::slice_rows(enc.position_embeddings, 0, ids.size()));
  x = dropout(x, rate, mode, rng);

  Var q = ad::matmul(x, enc.query);
  Var k = ad::matmul(x, enc.key);
  Var v = ad::matmul(x, enc.value);
  Var att = ad::softmax_rows(
      ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(c.model_dim))));
  if (attention != nullptr) *attention = att.value();
  Var o = ad::matmul(ad::matmul(att, v), enc.output);
  x = dropout(ad::add(x, o), rate, mode, rng);

  Var h = ad::gelu(ad::add_row(ad::matmul(x, enc.ff_in), enc.ff_in_bias));
  Var f = ad::add_row(ad::matmul(h, enc.ff_out), enc.ff_out_bias);
  return dropout(ad::add(x, f), rate, mode, rng);
}

namespace {

void check_span(std::size_t hidden_rows, const Span& span) {
  if (!(span.start < span.end && span.end + 1 <= hidden_rows)) {
    throw InvalidArgument("trigger_rep: span [" + std::to_string(span.start) + ", " +
                          std::to_string(span.end) + ") invalid for sentence of " +
                          std::to_string(hidden_rows - 1) + " tokens");
  }
}

}  // namespace

Var trigger_rep(Var hidden, const Span& span) {
  check_span(hidden.value().rows(), span);
  return ad::concat_cols(ad::row(hidden, span.start + 1), ad::row(hidden, span.end));
}

Var sentence_rep(Var hidden) { return ad::row(hidden, 0); }

Matrix encode_values(const EncoderParams& params, const Vocabulary& vocab,
                     const Instance& instance, Mode mode, RngStream& rng) {
  Tape tape(false);
  BoundEncoder enc = bind_constant(tape, params);
  const auto ids = vocab.ids(instance.tokens);
  return encode(enc, ids, mode, rng).value();
}

std::vector<double> trigger_rep_values(const Matrix& hidden, const Span& span) {
  check_span(hidden.rows(), span);
  std::vector<double> out(hidden.row(span.start + 1).begin(), hidden.row(span.start + 1).end());
  out.insert(out.end(), hidden.row(span.end).begin(), hidden.row(span.end).end());
  return out;
}

std::vector<double> sentence_rep_values(const Matrix& hidden) {
  return {hidden.row(0).begin(), hidden.row(0).end()};
}

}  // namespace hanet
