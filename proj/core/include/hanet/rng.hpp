// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace hanet {

/// Counter-based random stream keyed by (seed, label).
///
/// Draw i of a stream is a pure function of (seed, label, i), so a stream can be
/// replayed from any recorded counter, and streams with different labels are
/// independent. Child streams append "/sub" to the label.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string label, std::uint64_t counter = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal via Box-Muller (cosine branch; two uniforms per draw).
  double normal();

  RngStream derive(std::string_view sub) const;

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& label() const noexcept { return label_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::uint64_t counter_;
  std::uint64_t key_;
};

std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace hanet
