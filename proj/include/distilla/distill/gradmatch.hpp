// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "distilla/core/dataset.hpp"
#include "distilla/core/synthetic.hpp"
#include "distilla/distill/augment.hpp"
#include "distilla/distill/budget.hpp"
#include "distilla/nn/model.hpp"
#include "distilla/nn/train.hpp"

namespace distilla::distill {

enum class StudentMode { synthetic_traj, real_traj };

std::string_view to_string(StudentMode mode) noexcept;
StudentMode parse_student_mode(std::string_view text);

struct MatchResult {
    double loss = 0.0;
    /// d loss / d current-stage pixels, laid out like `current.images`.
    std::vector<double> pixel_grad;
};

/// Distance between the parameter gradient on the synthetic collection
/// (frozen plus current images) and on the real batch. Per-class mode matches
/// class c synthetic images against class c real images and sums the
/// distances; classes missing from either side are skipped. Only the current
/// images receive a gradient. `augment`, when given, is applied to both sides
/// before the forward pass.
MatchResult gradient_match_loss(const nn::ModelSpec& spec, const nn::ParameterVector& params,
                                const DataView& frozen, const DataView& current, const DataView& real_batch,
                                MatchMetric metric, const AugmentTransform* augment = nullptr,
                                bool per_class = true);

/// One SGD step on the synthetic union or on a real mini-batch.
nn::ParameterVector update_student_params(StudentMode mode, const nn::ModelSpec& spec,
                                          const nn::ParameterVector& params, const DataView& synth,
                                          const DataView& real_batch, const nn::TrainConfig& cfg,
                                          std::vector<double>* velocity = nullptr);

struct StageResult {
    SyntheticSet set;
    /// Mean matching loss of each outer iteration.
    std::vector<double> loss_history;
};

/// Gradient-matching distillation of one stage conditioned on `frozen`.
/// Each outer iteration draws one of `starts`, then alternates a pixel update
/// and a student update for budget.inner_steps steps. The returned set is not
/// finalized.
StageResult distill_stage_gradmatch(const nn::ModelSpec& spec, std::span<const nn::ParameterVector> starts,
                                    const LabeledDataset& data, const DataView& frozen,
                                    const DistillBudget& budget, StudentMode mode, std::uint64_t seed,
                                    std::size_t stage_index = 1);

}  // namespace distilla::distill
