// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distilla/core/dataset.hpp"
#include "distilla/core/persistence.hpp"
#include "distilla/core/synthetic.hpp"
#include "distilla/nn/model.hpp"
#include "distilla/nn/train.hpp"

namespace distilla::eval {

/// Union: everything at once. Sequential: S_i alone in phase i. Progressive: S_1..S_i in phase i.
enum class Mode { union_all, sequential, progressive };

std::string_view to_string(Mode mode) noexcept;  // "U", "S", "P"
Mode parse_mode(std::string_view text);

struct PhaseRecord {
    std::size_t phase = 1;
    std::size_t images = 0;
    std::size_t epochs = 0;
    double lr = 0.0;
    friend bool operator==(const PhaseRecord&, const PhaseRecord&) = default;
};

/// Sees every mini-batch of a phase: the phase's training data and the batch's row indices into it.
using BatchObserver = std::function<void(std::size_t phase, const TrainingData& data, std::span<const std::size_t> batch)>;

struct PhasedRun {
    nn::ParameterVector params;
    std::vector<PhaseRecord> phases;
};

/// Fresh init from cfg.seed, then one training phase per schedule entry (a
/// single phase for union). Phase p shuffles with a seed derived from
/// (cfg.seed, p). A stage's learned_lr replaces cfg.lr for the phases that end
/// on that stage; union uses the last stage's rate.
PhasedRun train_phased(const StageSequence& seq, const nn::ModelSpec& spec, const nn::TrainConfig& cfg, Mode mode,
                       std::span<const std::size_t> epoch_schedule, const BatchObserver* observer = nullptr);

nn::ParameterVector train_progressive(const StageSequence& seq, const nn::ModelSpec& spec,
                                      const nn::TrainConfig& cfg, std::span<const std::size_t> epoch_schedule);
nn::ParameterVector train_sequential(const StageSequence& seq, const nn::ModelSpec& spec,
                                     const nn::TrainConfig& cfg, std::span<const std::size_t> epoch_schedule);
nn::ParameterVector train_union(const StageSequence& seq, const nn::ModelSpec& spec, const nn::TrainConfig& cfg,
                                std::size_t total_epochs);

/// Union epochs with the same optimizer-step count as the progressive schedule:
/// floor(sum_i i * e_i / P).
std::size_t union_epochs(std::span<const std::size_t> epoch_schedule);

/// Equal per-phase epochs from the stage-count rule, scaled by `multiplier`.
std::vector<std::size_t> default_schedule(std::size_t stages, double multiplier = 1.0);

struct EvalReport {
    std::string mode;  // "U", "S", "P" or "R" for random real selection
    std::string spec_name;
    std::vector<std::uint64_t> seeds;
    std::vector<double> accuracies;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
    std::vector<PhaseRecord> phase_schedule;
    std::string config_digest;

    void validate() const;
};

/// Mean and population standard deviation.
std::pair<double, double> summarize(std::span<const double> values);

Json to_json(const EvalReport& report);
EvalReport report_from_json(const Json& j);
/// One compact JSON object per line; `append` keeps earlier lines.
void write_reports(const std::filesystem::path& path, std::span<const EvalReport> reports, bool append = false);
std::vector<EvalReport> read_reports(const std::filesystem::path& path);

/// Seeds base, base + 1, ...
std::vector<std::uint64_t> seed_list(std::size_t n, std::uint64_t base = 0);

/// For every mode: one fresh network per seed trained through the phase
/// pipeline, test accuracy after the last phase.
std::vector<EvalReport> evaluate_sequence(const StageSequence& seq, const nn::ModelSpec& spec,
                                          const nn::TrainConfig& cfg, std::span<const Mode> modes,
                                          std::span<const std::uint64_t> seeds,
                                          std::span<const std::size_t> epoch_schedule, const LabeledDataset& test,
                                          std::size_t jobs = 1);

/// Progressive evaluation with a different architecture.
EvalReport cross_arch_eval(const StageSequence& seq, const nn::ModelSpec& alt_spec, const nn::TrainConfig& cfg,
                           std::span<const std::uint64_t> seeds, std::span<const std::size_t> epoch_schedule,
                           const LabeledDataset& test, std::size_t jobs = 1);

/// Baseline: per seed, `ipc` real images per class chosen at random from
/// `train`, trained for `epochs` in one phase.
EvalReport random_selection_baseline(const LabeledDataset& train, std::size_t ipc, const nn::ModelSpec& spec,
                                     const nn::TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                                     std::size_t epochs, const LabeledDataset& test, std::size_t jobs = 1);

struct CurvePoint {
    std::size_t phase = 0;
    std::size_t images = 0;
    double mean = 0.0;
    double std = 0.0;
};

/// Test accuracy after every phase, aggregated over seeds.
std::vector<CurvePoint> accuracy_curve(const StageSequence& seq, const nn::ModelSpec& spec, const nn::TrainConfig& cfg,
                                       Mode mode, std::span<const std::uint64_t> seeds,
                                       std::span<const std::size_t> epoch_schedule, const LabeledDataset& test,
                                       std::size_t jobs = 1);

/// Header "mode,phase,images,mean,std".
void write_curve_csv(const std::filesystem::path& path, Mode mode, std::span<const CurvePoint> curve);

}  // namespace distilla::eval
