// SPDX-License-Identifier: Apache-2.0
#include "distilla/distill/matching.hpp"

#include <cmath>
#include <string>

#include "distilla/core/error.hpp"

namespace distilla::distill {

std::string_view to_string(MatchMetric metric) noexcept {
    return metric == MatchMetric::l2 ? "l2" : "layerwise-cosine";
}

MatchMetric parse_match_metric(std::string_view text) {
    if (text == "layerwise-cosine") return MatchMetric::layerwise_cosine;
    if (text == "l2") return MatchMetric::l2;
    throw Error(Errc::invalid_argument, "unknown match metric '" + std::string(text) + "'");
}

namespace {

// Layers below this squared norm are treated as zero. Biases feeding a
// normalization layer have an identically zero gradient that arrives as
// rounding noise, whose direction is meaningless.
constexpr double kZeroNormSq = 1e-20;

struct LayerDots {
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
};

LayerDots dots(const double* a, const double* b, std::size_t n) {
    LayerDots d;
    for (std::size_t i = 0; i < n; ++i) {
        d.ab += a[i] * b[i];
        d.aa += a[i] * a[i];
        d.bb += b[i] * b[i];
    }
    return d;
}

}  // namespace

double grad_distance(const nn::ParameterVector& a, const nn::ParameterVector& b, MatchMetric metric) {
    a.require_same_layout(b);
    if (metric == MatchMetric::l2) {
        double sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a.values[i] - b.values[i];
            sum += d * d;
        }
        return sum;
    }
    double total = 0.0;
    for (const auto& layer : a.layout) {
        const auto d = dots(a.values.data() + layer.offset, b.values.data() + layer.offset, layer.size());
        if (d.aa < kZeroNormSq || d.bb < kZeroNormSq) {
            total += 1.0;
            continue;
        }
        total += 1.0 - d.ab / (std::sqrt(d.aa) * std::sqrt(d.bb));
    }
    return total;
}

nn::ParameterVector grad_distance_wrt_first(const nn::ParameterVector& a, const nn::ParameterVector& b,
                                            MatchMetric metric) {
    a.require_same_layout(b);
    auto out = nn::ParameterVector::zeros_like(a);
    if (metric == MatchMetric::l2) {
        for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = 2.0 * (a.values[i] - b.values[i]);
        return out;
    }
    for (const auto& layer : a.layout) {
        const double* pa = a.values.data() + layer.offset;
        const double* pb = b.values.data() + layer.offset;
        const auto d = dots(pa, pb, layer.size());
        if (d.aa < kZeroNormSq || d.bb < kZeroNormSq) continue;
        const double na = std::sqrt(d.aa);
        const double nb = std::sqrt(d.bb);
        const double cos = d.ab / (na * nb);
        for (std::size_t i = 0; i < layer.size(); ++i)
            out.values[layer.offset + i] = -(pb[i] / (na * nb) - cos * pa[i] / d.aa);
    }
    return out;
}

}  // namespace distilla::distill
