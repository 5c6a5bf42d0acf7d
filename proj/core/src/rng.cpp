// SPDX-License-Identifier: Apache-2.0
#include "hanet/rng.hpp"

#include <cmath>
#include <numbers>

#include "hanet/errors.hpp"

namespace hanet {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::string label, std::uint64_t counter)
    : seed_(seed), label_(std::move(label)), counter_(counter) {
  key_ = mix64(mix64(seed_ + kGolden) ^ fnv1a64(label_));
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t x = key_ + (counter_ + 1) * kGolden;
  ++counter_;
  return mix64(x);
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("uniform_int: empty range");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double RngStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::derive(std::string_view sub) const {
  std::string child = label_;
  child += '/';
  child += sub;
  return RngStream(seed_, std::move(child));
}

}  // namespace hanet
