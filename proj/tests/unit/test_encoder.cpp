// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "hanet/encoder.hpp"
#include "hanet/errors.hpp"
#include "hanet/gradcheck.hpp"
#include "test_support.hpp"

using namespace hanet;

namespace {

const Instance kSentence{"s", {"the", "court", "married", "them", "today"}, {{{2, 3}, "Marry"}}};

Vocabulary sentence_vocab() { return Vocabulary::from_instances({kSentence}); }

}  // namespace

TEST_CASE("vocabulary reserves unknown and summary ids") {
  const Vocabulary v = sentence_vocab();
  CHECK(v.size() == 5 + Vocabulary::kReserved);
  CHECK(v.id("zebra") == Vocabulary::kUnk);
  CHECK(v.id("court") >= Vocabulary::kReserved);
  CHECK_THROWS_AS(Vocabulary(std::vector<std::string>{"a", "a"}), InvalidArgument);
}

TEST_CASE("hidden states have one row per token plus the summary row") {
  const Vocabulary v = sentence_vocab();
  const EncoderParams p = test::toy_encoder(v);
  RngStream rng(1, "dropout");
  const Matrix h = encode_values(p, v, kSentence, Mode::kEval, rng);
  CHECK(h.rows() == 6);
  CHECK(h.cols() == 8);
  CHECK(h.all_finite());
}

TEST_CASE("eval mode is deterministic and ignores the stream") {
  const Vocabulary v = sentence_vocab();
  const EncoderParams p = test::toy_encoder(v, 8, 0.5);
  RngStream a(1, "dropout");
  RngStream b(2, "other", 99);
  CHECK(encode_values(p, v, kSentence, Mode::kEval, a) ==
        encode_values(p, v, kSentence, Mode::kEval, b));
  CHECK(a.counter() == 0);
}

TEST_CASE("zero dropout makes train mode equal eval mode") {
  const Vocabulary v = sentence_vocab();
  const EncoderParams p = test::toy_encoder(v, 8, 0.0);
  RngStream rng(1, "dropout");
  CHECK(encode_values(p, v, kSentence, Mode::kTrain, rng) ==
        encode_values(p, v, kSentence, Mode::kEval, rng));
}

TEST_CASE("train mode dropout draws differ between counters") {
  const Vocabulary v = sentence_vocab();
  const EncoderParams p = test::toy_encoder(v, 8, 0.5);
  RngStream rng(1, "dropout");
  const Matrix first = encode_values(p, v, kSentence, Mode::kTrain, rng);
  const Matrix second = encode_values(p, v, kSentence, Mode::kTrain, rng);
  CHECK(first != second);
  RngStream replay(1, "dropout");
  CHECK(encode_values(p, v, kSentence, Mode::kTrain, replay) == first);
}

TEST_CASE("too long sentences raise a length error") {
  const Vocabulary v = sentence_vocab();
  EncoderConfig c{v.size(), 8, 16, 5, 0.0};
  const EncoderParams p = EncoderParams::init(c, 0.1, RngStream(1, "init"));
  RngStream rng(1, "dropout");
  CHECK_THROWS_AS(encode_values(p, v, kSentence, Mode::kEval, rng), LengthError);
}

TEST_CASE("encoder configuration is validated") {
  CHECK_THROWS_AS(EncoderParams::init({10, 7, 8, 10, 0.0}, 0.1, RngStream(1, "i")), InvalidArgument);
  CHECK_THROWS_AS(EncoderParams::init({10, 8, 8, 10, 1.0}, 0.1, RngStream(1, "i")), InvalidArgument);
}

TEST_CASE("trigger representations concatenate the first and last span rows") {
  const Vocabulary v = sentence_vocab();
  const EncoderParams p = test::toy_encoder(v);
  RngStream rng(1, "dropout");
  const Matrix h = encode_values(p, v, kSentence, Mode::kEval, rng);
  const auto single = trigger_rep_values(h, {2, 3});
  REQUIRE(single.size() == 16);
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(single[j] == h(3, j));
    CHECK(single[8 + j] == h(3, j));
  }
  const auto pair = trigger_rep_values(h, {1, 3});
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(pair[j] == h(2, j));
    CHECK(pair[8 + j] == h(3, j));
  }
  CHECK_THROWS_AS(trigger_rep_values(h, {3, 3}), InvalidArgument);
  CHECK_THROWS_AS(trigger_rep_values(h, {4, 6}), InvalidArgument);
}

TEST_CASE("sentence representation is the summary row") {
  const Vocabulary v = sentence_vocab();
  const EncoderParams p = test::toy_encoder(v);
  RngStream rng(1, "dropout");
  const Matrix h = encode_values(p, v, kSentence, Mode::kEval, rng);
  const auto s = sentence_rep_values(h);
  for (std::size_t j = 0; j < 8; ++j) CHECK(s[j] == h(0, j));
  Instance twin = kSentence;
  twin.id = "twin";
  CHECK(sentence_rep_values(encode_values(p, v, twin, Mode::kEval, rng)) == s);
}

TEST_CASE("attention rows sum to one") {
  const Vocabulary v = sentence_vocab();
  EncoderParams p = test::toy_encoder(v);
  Tape tape(false);
  const BoundEncoder enc = bind_constant(tape, p);
  RngStream rng(1, "dropout");
  Matrix att;
  encode(enc, v.ids(kSentence.tokens), Mode::kEval, rng, &att);
  REQUIRE(att.rows() == 6);
  for (std::size_t r = 0; r < att.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < att.cols(); ++c) sum += att(r, c);
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("shuffling tokens changes contextual representations") {
  const Vocabulary v = sentence_vocab();
  const EncoderParams p = test::toy_encoder(v);
  RngStream rng(1, "dropout");
  Instance shuffled = kSentence;
  std::swap(shuffled.tokens[0], shuffled.tokens[4]);
  CHECK(sentence_rep_values(encode_values(p, v, kSentence, Mode::kEval, rng)) !=
        sentence_rep_values(encode_values(p, v, shuffled, Mode::kEval, rng)));
}

TEST_CASE("gradients through the encoder match finite differences") {
  const Vocabulary v = sentence_vocab();
  EncoderParams p = test::toy_encoder(v, 8, 0.3);
  const auto ids = v.ids(kSentence.tokens);
  Matrix readout(24, 3);
  RngStream draw(5, "readout");
  for (double& x : readout.values()) x = draw.normal();
  LossFn fn = [&](bool with_grad) {
    Tape tape(with_grad);
    const BoundEncoder enc = bind(tape, p);
    RngStream rng(3, "dropout");
    Var h = encode(enc, ids, Mode::kTrain, rng);
    Var feats = ad::concat_cols(sentence_rep(h), trigger_rep(h, {2, 3}));
    Var loss = ad::cross_entropy(ad::matmul(feats, tape.constant(readout)), 1);
    if (with_grad) tape.backward(loss);
    return loss.scalar();
  };
  auto params = p.parameters();
  const auto r = finite_diff_check(fn, params, 1e-5, 1e-4);
  INFO("worst " << r.worst_parameter << "[" << r.worst_index << "] analytic " << r.worst_analytic
                << " numeric " << r.worst_numeric);
  CHECK(r.passed);
}

TEST_CASE("a loss on the summary row reaches the token embeddings") {
  const Vocabulary v = sentence_vocab();
  EncoderParams p = test::toy_encoder(v);
  Tape tape(true);
  const BoundEncoder enc = bind(tape, p);
  RngStream rng(1, "dropout");
  Var h = encode(enc, v.ids(kSentence.tokens), Mode::kEval, rng);
  Var s = sentence_rep(h);
  Var loss = ad::cosine(s, tape.constant(Matrix(1, 8, 1.0)));
  tape.backward(loss);
  double norm = 0.0;
  for (double g : p.token_embeddings.grad.values()) norm += g * g;
  CHECK(norm > 0.0);
}
