// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hanet/rng.hpp"

namespace hanet {

/// Max-subtracted softmax. Throws InvalidArgument on empty or non-finite input.
std::vector<double> softmax_stable(std::span<const double> logits);

/// `count` independent draws of Normal(mean_j, variance_j) per dimension.
std::vector<std::vector<double>> sample_gaussian(std::span<const double> mean,
                                                 std::span<const double> variance,
                                                 std::size_t count, RngStream& rng);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double squared_l2_distance(std::span<const double> a, std::span<const double> b);
/// Throws NumericGuardError if either vector has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace hanet
