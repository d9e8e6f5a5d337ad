// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "distilla/core/dataset.hpp"
#include "distilla/core/synthetic.hpp"
#include "distilla/distill/budget.hpp"
#include "distilla/nn/model.hpp"
#include "distilla/nn/train.hpp"

namespace distilla::pdd {

enum class BaseMethod { gradmatch_synthetic, gradmatch_real, mtt };

std::string_view to_string(BaseMethod base) noexcept;
BaseMethod parse_base_method(std::string_view text);

struct PddConfig {
    std::size_t stages = 1;  // P
    std::size_t per_stage_ipc = 1;
    BaseMethod base = BaseMethod::gradmatch_real;
    nn::ModelSpec spec;
    distill::DistillBudget budget;  // budget.ipc is replaced by per_stage_ipc
    nn::TrainConfig transition;
    nn::TrainConfig expert;
    std::size_t expert_snapshot_every = 10;
    /// One initialization seed per checkpoint; E = seeds.size().
    std::vector<std::uint64_t> seeds{0};
    std::uint64_t distill_seed = 0;
    bool no_transition = false;
    bool no_conditioning = false;
    std::size_t jobs = 1;
    std::string config_digest;

    void validate() const;
};

/// floor(2000 / (P + 1)); a multiplier other than 1 scales that count, keeping at least one epoch.
std::size_t schedule_stage_epochs(std::size_t stages, double multiplier = 1.0);

/// floor(1000 * P * n / B): total optimizer steps of the full progressive schedule.
std::uint64_t total_training_iterations(std::uint64_t stages, std::uint64_t n, std::uint64_t batch);

/// Trains theta_prev on the union; an empty union returns theta_prev unchanged.
nn::ParameterVector transition_train(const nn::ModelSpec& spec, const nn::ParameterVector& theta_prev,
                                     const DataView& union_so_far, const nn::TrainConfig& cfg);

/// Training configuration used for the transition after stage i (1-based) for
/// checkpoint k: cfg with a per-(stage, seed) shuffle seed and, when the stage
/// carries a learned learning rate, that rate.
nn::TrainConfig transition_config(const nn::TrainConfig& base, const SyntheticSet& stage, std::size_t stage_index,
                                  std::size_t checkpoint);

struct PddResult {
    StageSequence sequence;
    /// starts[i][k]: checkpoint k at the start of stage i + 1. starts[P] holds
    /// the checkpoints after the final transition.
    std::vector<std::vector<nn::ParameterVector>> starts;
};

/// Real data used to distill stage i (1-based).
using StageData = std::function<const LabeledDataset&(std::size_t stage)>;

/// Algorithm loop: distill S_i conditioned on the earlier stages from the
/// current checkpoints, finalize it, then transition every checkpoint on
/// S_1..S_i.
PddResult run_pdd(const PddConfig& config, const LabeledDataset& data);
PddResult run_pdd(const PddConfig& config, const StageData& stage_data, const LabeledDataset& reference);

/// checkpoints/stage_<i>_seed_<k>.f32 for i = 1..P+1 plus checkpoints/manifest.json.
void save_checkpoints(const PddResult& result, const std::filesystem::path& dir);
std::vector<std::vector<nn::ParameterVector>> load_checkpoints(const std::filesystem::path& dir);

}  // namespace distilla::pdd
