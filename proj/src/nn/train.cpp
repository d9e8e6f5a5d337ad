// SPDX-License-Identifier: Apache-2.0
#include "distilla/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "distilla/core/error.hpp"
#include "distilla/core/rng.hpp"
#include "distilla/nn/network.hpp"

namespace distilla::nn {

void TrainConfig::validate() const {
    require(std::isfinite(lr) && lr >= 0.0, Errc::invalid_argument, "learning rate must be nonnegative");
    require(momentum >= 0.0 && momentum < 1.0, Errc::invalid_argument, "momentum must lie in [0, 1)");
    require(weight_decay >= 0.0, Errc::invalid_argument, "weight decay must be nonnegative");
    require(batch_size >= 1, Errc::invalid_argument, "batch size must be at least 1");
}

Json to_json(const TrainConfig& cfg) {
    return {{"lr", cfg.lr},
            {"momentum", cfg.momentum},
            {"weight_decay", cfg.weight_decay},
            {"batch_size", cfg.batch_size},
            {"epochs", cfg.epochs},
            {"seed", cfg.seed},
            {"snapshot_every", cfg.snapshot_every}};
}

void sgd_step(ParameterVector& params, const ParameterVector& grad, std::vector<double>& velocity,
              const TrainConfig& cfg) {
    params.require_same_layout(grad);
    if (velocity.empty()) velocity.assign(params.size(), 0.0);
    require(velocity.size() == params.size(), Errc::layout_mismatch, "momentum state does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = cfg.momentum * velocity[i] + grad.values[i] + cfg.weight_decay * params.values[i];
        params.values[i] -= cfg.lr * velocity[i];
    }
}

TrainResult train(const ModelSpec& spec, const ParameterVector& params0, const DataView& data,
                  const TrainConfig& cfg, const TrainHooks* hooks) {
    cfg.validate();
    require(cfg.epochs == 0 || !data.empty(), Errc::invalid_argument, "training data is empty");
    TrainResult result;
    result.params = params0;
    const bool snapshots = cfg.snapshot_every > 0;
    if (snapshots) result.snapshots.push_back({0, params0});

    std::vector<double> velocity;
    std::vector<std::size_t> order(data.size());
    std::vector<double> batch_images;
    std::vector<std::int64_t> batch_labels;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, stream::shuffle, epoch));
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> indices(order.data() + start, stop - start);
            if (hooks != nullptr && hooks->on_batch) hooks->on_batch(step, indices);
            batch_images.clear();
            batch_labels.clear();
            for (const std::size_t i : indices) {
                const auto img = data.image(i);
                batch_images.insert(batch_images.end(), img.begin(), img.end());
                batch_labels.push_back(data.labels[i]);
            }
            const auto lg = loss_and_grad(spec, result.params, DataView{data.shape, batch_images, batch_labels});
            loss_sum += lg.loss;
            ++batches;
            sgd_step(result.params, lg.grad, velocity, cfg);
            ++step;
            if (hooks != nullptr && hooks->on_step) hooks->on_step(step, result.params);
            if (snapshots && step % cfg.snapshot_every == 0) result.snapshots.push_back({step, result.params});
        }
        result.epoch_losses.push_back(batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0);
    }
    if (snapshots && result.snapshots.back().step != step) result.snapshots.push_back({step, result.params});
    result.steps = step;
    return result;
}

std::vector<std::int64_t> predict(const ModelSpec& spec, const ParameterVector& params, const DataView& data) {
    std::vector<std::int64_t> out;
    out.reserve(data.size());
    constexpr std::size_t chunk = 512;
    const std::size_t stride = data.shape.size();
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        const std::size_t stop = std::min(data.size(), start + chunk);
        const DataView part{data.shape, data.images.subspan(start * stride, (stop - start) * stride),
                            data.labels.subspan(start, stop - start)};
        const auto z = logits(spec, params, part);
        for (std::size_t s = 0; s < stop - start; ++s) {
            const double* row = z.data() + s * spec.class_count;
            std::size_t best = 0;
            for (std::size_t c = 1; c < spec.class_count; ++c)
                if (row[c] > row[best]) best = c;
            out.push_back(static_cast<std::int64_t>(best));
        }
    }
    return out;
}

double evaluate_accuracy(const ModelSpec& spec, const ParameterVector& params, const DataView& data) {
    require(!data.empty(), Errc::invalid_argument, "cannot evaluate on an empty dataset");
    const auto predictions = predict(spec, params, data);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == data.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace distilla::nn
