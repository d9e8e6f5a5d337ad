// SPDX-License-Identifier: Apache-2.0
#include "distilla/distill/gradmatch.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "distilla/core/error.hpp"
#include "distilla/core/rng.hpp"
#include "distilla/nn/network.hpp"

namespace distilla::distill {

std::string_view to_string(StudentMode mode) noexcept {
    return mode == StudentMode::real_traj ? "real-traj" : "synthetic-traj";
}

StudentMode parse_student_mode(std::string_view text) {
    if (text == "synthetic-traj") return StudentMode::synthetic_traj;
    if (text == "real-traj") return StudentMode::real_traj;
    throw Error(Errc::invalid_argument, "unknown student mode '" + std::string(text) + "'");
}

namespace {

void copy_image(const DataView& view, std::size_t i, std::vector<double>& out) {
    const auto img = view.image(i);
    out.insert(out.end(), img.begin(), img.end());
}

// First k entries of a partial Fisher-Yates shuffle of `pool`.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
    k = std::min(k, pool.size());
    for (std::size_t j = 0; j < k; ++j) std::swap(pool[j], pool[j + rng.below(pool.size() - j)]);
    pool.resize(k);
    return pool;
}

}  // namespace

MatchResult gradient_match_loss(const nn::ModelSpec& spec, const nn::ParameterVector& params,
                                const DataView& frozen, const DataView& current, const DataView& real_batch,
                                MatchMetric metric, const AugmentTransform* augment, bool per_class) {
    require(!real_batch.empty(), Errc::invalid_argument, "real batch is empty");
    require(!current.empty() || !frozen.empty(), Errc::invalid_argument, "synthetic batch is empty");
    require(current.empty() || current.shape == spec.input, Errc::shape_mismatch, "synthetic images do not fit the model");
    require(frozen.empty() || frozen.shape == spec.input, Errc::shape_mismatch, "frozen images do not fit the model");
    require(real_batch.shape == spec.input, Errc::shape_mismatch, "real images do not fit the model");

    const ImageShape& shape = spec.input;
    const std::size_t stride = shape.size();
    MatchResult result;
    result.pixel_grad.assign(current.images.size(), 0.0);

    const std::size_t groups = per_class ? spec.class_count : 1;
    for (std::size_t g = 0; g < groups; ++g) {
        const auto member = [&](std::int64_t label) { return !per_class || label == static_cast<std::int64_t>(g); };
        std::vector<double> synth_images;
        std::vector<std::int64_t> synth_labels;
        std::vector<std::size_t> current_rows;  // row of each current image in `current`
        for (std::size_t i = 0; i < frozen.size(); ++i) {
            if (!member(frozen.labels[i])) continue;
            copy_image(frozen, i, synth_images);
            synth_labels.push_back(frozen.labels[i]);
        }
        const std::size_t frozen_count = synth_labels.size();
        for (std::size_t i = 0; i < current.size(); ++i) {
            if (!member(current.labels[i])) continue;
            copy_image(current, i, synth_images);
            synth_labels.push_back(current.labels[i]);
            current_rows.push_back(i);
        }
        std::vector<double> real_images;
        std::vector<std::int64_t> real_labels;
        for (std::size_t i = 0; i < real_batch.size(); ++i) {
            if (!member(real_batch.labels[i])) continue;
            copy_image(real_batch, i, real_images);
            real_labels.push_back(real_batch.labels[i]);
        }
        if (synth_labels.empty() || real_labels.empty()) continue;

        if (augment != nullptr) {
            synth_images = apply_transform(*augment, shape, synth_images);
            real_images = apply_transform(*augment, shape, real_images);
        }
        const DataView synth_view{shape, synth_images, synth_labels};
        const auto g_synth = nn::loss_and_grad(spec, params, synth_view).grad;
        const auto g_real = nn::loss_and_grad(spec, params, DataView{shape, real_images, real_labels}).grad;
        result.loss += grad_distance(g_synth, g_real, metric);
        if (current_rows.empty()) continue;

        const auto v = grad_distance_wrt_first(g_synth, g_real, metric);
        auto pixel = nn::directional_derivatives(spec, params, synth_view, v.values).input_vjp;
        if (augment != nullptr) pixel = transform_adjoint(*augment, shape, pixel);
        for (std::size_t r = 0; r < current_rows.size(); ++r) {
            const double* src = pixel.data() + (frozen_count + r) * stride;
            std::copy(src, src + stride, result.pixel_grad.begin() + static_cast<long>(current_rows[r] * stride));
        }
    }
    return result;
}

nn::ParameterVector update_student_params(StudentMode mode, const nn::ModelSpec& spec,
                                          const nn::ParameterVector& params, const DataView& synth,
                                          const DataView& real_batch, const nn::TrainConfig& cfg,
                                          std::vector<double>* velocity) {
    const DataView& batch = mode == StudentMode::synthetic_traj ? synth : real_batch;
    auto next = params;
    const auto lg = nn::loss_and_grad(spec, params, batch);
    std::vector<double> local;
    nn::sgd_step(next, lg.grad, velocity != nullptr ? *velocity : local, cfg);
    return next;
}

StageResult distill_stage_gradmatch(const nn::ModelSpec& spec, std::span<const nn::ParameterVector> starts,
                                    const LabeledDataset& data, const DataView& frozen,
                                    const DistillBudget& budget, StudentMode mode, std::uint64_t seed,
                                    std::size_t stage_index) {
    budget.validate();
    require(!starts.empty(), Errc::invalid_argument, "no start parameters given");
    require(!data.empty(), Errc::invalid_argument, "real data is empty");

    StageResult result;
    result.set = init_synthetic_set(data, budget.ipc, budget.init_mode, seed, stage_index);
    SyntheticSet& set = result.set;
    Rng rng(derive_seed(seed, stream::distill, stage_index));
    const auto by_class = data.indices_by_class();
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});

    nn::TrainConfig student;
    student.lr = budget.student_lr;
    student.momentum = budget.student_momentum;
    student.weight_decay = 0.0;
    student.batch_size = budget.real_batch;

    std::vector<double> pixel_velocity(set.images.size(), 0.0);
    for (std::size_t it = 0; it < budget.outer_iterations; ++it) {
        nn::ParameterVector theta = starts[rng.below(starts.size())];
        std::vector<double> student_velocity;
        double total = 0.0;
        for (std::size_t step = 0; step < budget.inner_steps; ++step) {
            std::vector<std::size_t> picked;
            for (const auto& members : by_class) {
                const auto chosen = sample_without_replacement(members, budget.real_batch_per_class, rng);
                picked.insert(picked.end(), chosen.begin(), chosen.end());
            }
            const auto real = gather(data.view(), picked);
            const auto transform = sample_transform(budget.augment, data.shape(), rng);
            const auto match = gradient_match_loss(spec, theta, frozen, set.view(), real.view(), budget.match_metric,
                                                   &transform);
            total += match.loss;
            for (std::size_t i = 0; i < set.images.size(); ++i) {
                pixel_velocity[i] = kGradmatchOuterMomentum * pixel_velocity[i] + match.pixel_grad[i];
                set.images[i] -= budget.outer_lr * pixel_velocity[i];
            }
            if (step + 1 == budget.inner_steps) break;  // the final student step would be discarded

            TrainingData synth;
            synth.shape = data.shape();
            if (!frozen.empty()) synth.append(frozen);
            synth.append(set.view());
            TrainingData real_step;
            if (mode == StudentMode::real_traj)
                real_step = gather(data.view(), sample_without_replacement(all, budget.real_batch, rng));
            theta = update_student_params(mode, spec, theta, synth.view(), real_step.view(), student,
                                          &student_velocity);
        }
        result.loss_history.push_back(total / static_cast<double>(budget.inner_steps));
    }
    return result;
}

}  // namespace distilla::distill
