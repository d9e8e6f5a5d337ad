// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "distilla/core/dataset.hpp"
#include "distilla/nn/model.hpp"

namespace distilla::nn {

struct LossAndGrad {
    double loss = 0.0;
    ParameterVector grad;
};

/// Mean softmax cross-entropy over the batch and its parameter gradient.
LossAndGrad loss_and_grad(const ModelSpec& spec, const ParameterVector& params, const DataView& batch);

/// Loss only.
double loss(const ModelSpec& spec, const ParameterVector& params, const DataView& batch);

/// Gradients with respect to both parameters and input pixels.
struct FullGradients {
    double loss = 0.0;
    std::vector<double> grad;
    std::vector<double> input_grad;
};
FullGradients loss_and_full_grad(const ModelSpec& spec, const ParameterVector& params, const DataView& batch);

/// Second-order quantities along a parameter-space direction v:
/// hvp = (d^2 L / d theta^2) v and input_vjp = d/dx (v . dL/dtheta).
struct DirectionalDerivatives {
    double loss = 0.0;
    std::vector<double> grad;
    std::vector<double> hvp;
    std::vector<double> input_grad;
    std::vector<double> input_vjp;
};
DirectionalDerivatives directional_derivatives(const ModelSpec& spec, const ParameterVector& params,
                                               const DataView& batch, std::span<const double> direction);

/// Row-major [n, class_count] logits.
std::vector<double> logits(const ModelSpec& spec, const ParameterVector& params, const DataView& batch);

}  // namespace distilla::nn
