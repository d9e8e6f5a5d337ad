// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

#include "distilla/nn/model.hpp"

namespace distilla::distill {

enum class MatchMetric { layerwise_cosine, l2 };

std::string_view to_string(MatchMetric metric) noexcept;
MatchMetric parse_match_metric(std::string_view text);

/// layerwise_cosine: sum over layers of 1 - cos(a_l, b_l); a layer where either
/// side is zero (squared norm below 1e-20) contributes 1. l2: squared Euclidean distance.
double grad_distance(const nn::ParameterVector& a, const nn::ParameterVector& b, MatchMetric metric);

/// Partial derivative of grad_distance(a, b) with respect to a.
nn::ParameterVector grad_distance_wrt_first(const nn::ParameterVector& a, const nn::ParameterVector& b,
                                            MatchMetric metric);

}  // namespace distilla::distill
