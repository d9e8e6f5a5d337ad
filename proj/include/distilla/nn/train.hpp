// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "distilla/core/dataset.hpp"
#include "distilla/nn/model.hpp"

namespace distilla::nn {

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_size = 256;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    std::size_t snapshot_every = 0;

    void validate() const;
};

Json to_json(const TrainConfig& cfg);

/// v' = momentum * v + grad + weight_decay * params; params' = params - lr * v'.
/// An empty velocity is treated as zero and resized.
void sgd_step(ParameterVector& params, const ParameterVector& grad, std::vector<double>& velocity,
              const TrainConfig& cfg);

struct Snapshot {
    std::size_t step = 0;
    ParameterVector params;
};

struct TrainResult {
    ParameterVector params;
    std::vector<Snapshot> snapshots;
    std::vector<double> epoch_losses;  // mean mini-batch loss per epoch
    std::size_t steps = 0;
};

/// Optional instrumentation for the training loop.
struct TrainHooks {
    /// Dataset indices of each mini-batch, before the step is applied.
    std::function<void(std::size_t step, std::span<const std::size_t> batch)> on_batch;
    /// Parameters after each optimizer step.
    std::function<void(std::size_t step, const ParameterVector& params)> on_step;
};

/// Shuffled mini-batch momentum SGD. The order of epoch e comes from a stream
/// seeded by (cfg.seed, e), independent of snapshot settings.
TrainResult train(const ModelSpec& spec, const ParameterVector& params0, const DataView& data,
                  const TrainConfig& cfg, const TrainHooks* hooks = nullptr);

/// Argmax class per example, ties broken toward the lowest index.
std::vector<std::int64_t> predict(const ModelSpec& spec, const ParameterVector& params, const DataView& data);

/// Fraction of argmax-correct predictions.
double evaluate_accuracy(const ModelSpec& spec, const ParameterVector& params, const DataView& data);

}  // namespace distilla::nn
