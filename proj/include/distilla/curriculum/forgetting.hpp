// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "distilla/core/dataset.hpp"
#include "distilla/nn/model.hpp"
#include "distilla/nn/train.hpp"
#include "distilla/pdd/pdd.hpp"

namespace distilla::curriculum {

struct ForgettingRecord {
    /// history[i][t]: whether example i was classified correctly at evaluation point t.
    /// Empty when the record was loaded from disk.
    std::vector<std::vector<bool>> history;
    std::vector<std::size_t> counts;  // correct -> wrong transitions
    std::vector<bool> ever_learned;
    std::size_t eval_every = 0;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const noexcept { return counts.size(); }
    void validate() const;
};

/// Updates forgetting counts one evaluation point at a time.
class ForgettingTracker {
public:
    explicit ForgettingTracker(std::size_t examples, bool keep_history = true);

    void observe(const std::vector<bool>& correct);

    [[nodiscard]] std::size_t evaluations() const noexcept { return evaluations_; }
    [[nodiscard]] const std::vector<std::size_t>& counts() const noexcept { return counts_; }
    [[nodiscard]] const std::vector<bool>& ever_learned() const noexcept { return learned_; }
    [[nodiscard]] ForgettingRecord record(std::size_t eval_every, std::uint64_t seed) &&;

private:
    std::vector<std::size_t> counts_;
    std::vector<bool> learned_;
    std::vector<bool> previous_;
    std::vector<std::vector<bool>> history_;
    std::size_t evaluations_ = 0;
    bool keep_history_;
};

/// ceil(n / batch): optimizer steps in one epoch.
std::size_t steps_per_epoch(std::size_t examples, std::size_t batch_size);

/// Trains on `data` and records per-example correctness every `eval_every`
/// optimizer steps (step 0 excluded).
ForgettingRecord compute_forgetting_scores(const nn::ModelSpec& spec, const LabeledDataset& data,
                                           const nn::TrainConfig& cfg, std::size_t eval_every);

struct Partition {
    std::vector<std::vector<std::size_t>> bins;  // bins[i]: counts in [width*i, width*(i+1))
    std::vector<std::size_t> excluded;           // counts >= width*P
    double used_fraction = 0.0;
};

Partition partition_by_forgetting(std::span<const std::size_t> counts, std::size_t stages, std::size_t bin_width = 3);
Partition partition_by_forgetting(const ForgettingRecord& record, std::size_t stages, std::size_t bin_width = 3);

/// run_pdd with stage i distilled from bin i only. Fails with empty_bin when a
/// stage's bin is empty.
pdd::PddResult run_pdd_curriculum(const pdd::PddConfig& config, const LabeledDataset& data,
                                  const ForgettingRecord& record, std::size_t bin_width = 3);

/// forgetting.json: counts, ever_learned, eval cadence and seed.
void save_forgetting(const ForgettingRecord& record, const std::filesystem::path& path);
ForgettingRecord load_forgetting(const std::filesystem::path& path);

}  // namespace distilla::curriculum
