// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "distilla/core/dataset.hpp"
#include "distilla/distill/augment.hpp"
#include "distilla/distill/budget.hpp"
#include "distilla/distill/gradmatch.hpp"
#include "distilla/nn/model.hpp"
#include "distilla/nn/train.hpp"

namespace distilla::distill {

/// Below this squared norm the expert segment is treated as stationary.
inline constexpr double kDegenerateTolerance = 1e-12;

/// ||end - expert_end||^2 / ||start - expert_end||^2.
double trajectory_match_loss(const nn::ParameterVector& student_end, const nn::ParameterVector& student_start,
                             const nn::ParameterVector& expert_end);

enum class ExpertOrigin { fresh_init, transition_checkpoint };

std::string_view to_string(ExpertOrigin origin) noexcept;
ExpertOrigin parse_expert_origin(std::string_view text);

struct ExpertTrajectory {
    std::uint64_t seed = 0;
    std::vector<nn::Snapshot> snapshots;
};

struct ExpertTrajectoryStore {
    nn::ModelSpec spec;
    std::size_t stage_index = 1;
    ExpertOrigin origin = ExpertOrigin::fresh_init;
    std::vector<ExpertTrajectory> experts;

    /// At least two snapshots per expert, strictly increasing steps, one layout.
    void validate() const;
};

/// Trains expert k from starts[k] on the full data with snapshots every
/// `snapshot_every` steps. The per-expert shuffle seed is derived from
/// (cfg.seed, k). Snapshots are stored at persisted precision.
ExpertTrajectoryStore generate_expert_trajectories(const nn::ModelSpec& spec, const LabeledDataset& data,
                                                   std::span<const nn::ParameterVector> starts,
                                                   const nn::TrainConfig& cfg, std::size_t n_experts,
                                                   std::size_t snapshot_every, std::size_t stage_index = 1,
                                                   ExpertOrigin origin = ExpertOrigin::fresh_init,
                                                   std::size_t jobs = 1);

/// Writes experts/manifest.json and experts/e<k>/step_<s>.f32 under dir.
void save_expert_store(const ExpertTrajectoryStore& store, const std::filesystem::path& dir);
ExpertTrajectoryStore load_expert_store(const std::filesystem::path& dir);

struct UnrolledMatch {
    double loss = 0.0;
    std::vector<double> pixel_grad;  // w.r.t. current-stage pixels
    double lr_grad = 0.0;
};

/// Runs `steps` plain SGD steps with rate `lr` from `start` on the full batch
/// frozen + current (after `augment`), then differentiates the trajectory
/// matching loss against `expert_end` through the unrolled steps.
UnrolledMatch unrolled_trajectory_match(const nn::ModelSpec& spec, const nn::ParameterVector& start,
                                        const nn::ParameterVector& expert_end, const DataView& frozen,
                                        const DataView& current, double lr, std::size_t steps,
                                        const AugmentTransform* augment = nullptr);

/// Trajectory-matching distillation of one stage. `data` provides the
/// initialization of the learnable images. learned_lr is set on the result;
/// it is kept nonnegative during optimization.
StageResult distill_stage_mtt(const nn::ModelSpec& spec, const ExpertTrajectoryStore& experts,
                              const LabeledDataset& data, const DataView& frozen, const DistillBudget& budget,
                              std::uint64_t seed, std::size_t stage_index = 1);

}  // namespace distilla::distill
