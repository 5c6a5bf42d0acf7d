// SPDX-License-Identifier: Apache-2.0
#include "hanet/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "hanet/errors.hpp"

namespace hanet {

std::vector<double> softmax_stable(std::span<const double> logits) {
  if (logits.empty()) throw InvalidArgument("softmax_stable: empty input");
  for (double z : logits) {
    if (!std::isfinite(z)) throw InvalidArgument("softmax_stable: non-finite logit");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

std::vector<std::vector<double>> sample_gaussian(std::span<const double> mean,
                                                 std::span<const double> variance,
                                                 std::size_t count, RngStream& rng) {
  if (mean.size() != variance.size()) {
    throw InvalidArgument("sample_gaussian: mean and variance lengths differ");
  }
  if (count == 0) throw InvalidArgument("sample_gaussian: count must be positive");
  std::vector<double> stddev(variance.size());
  for (std::size_t j = 0; j < variance.size(); ++j) {
    if (!(variance[j] >= 0.0) || !std::isfinite(variance[j])) {
      throw InvalidArgument("sample_gaussian: variance entries must be finite and >= 0");
    }
    stddev[j] = std::sqrt(variance[j]);
  }
  std::vector<std::vector<double>> out(count, std::vector<double>(mean.size()));
  for (auto& sample : out) {
    for (std::size_t j = 0; j < mean.size(); ++j) {
      sample[j] = mean[j] + stddev[j] * rng.normal();
    }
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double squared_l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("squared_l2_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double aa = dot(a, a);
  const double bb = dot(b, b);
  if (aa == 0.0 || bb == 0.0) throw NumericGuardError("cosine similarity of a zero-norm vector");
  return dot(a, b) / std::sqrt(aa * bb);
}

}  // namespace hanet
