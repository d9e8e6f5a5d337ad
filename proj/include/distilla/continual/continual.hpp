// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "distilla/core/dataset.hpp"
#include "distilla/core/synthetic.hpp"
#include "distilla/eval/eval.hpp"
#include "distilla/pdd/pdd.hpp"

namespace distilla::continual {

/// Contiguous class ranges of size C / phases; the last phase absorbs the remainder.
std::vector<std::vector<std::int64_t>> split_class_phases(std::size_t classes, std::size_t phases);

struct ContinualConfig {
    pdd::PddConfig pdd;
    std::size_t phases = 1;
    nn::TrainConfig eval;  // evaluation training; epochs come from epoch_schedule
    std::vector<std::size_t> epoch_schedule;
    std::vector<std::uint64_t> eval_seeds{0};
    std::size_t jobs = 1;
};

struct PhaseResult {
    std::size_t phase = 1;
    std::vector<std::int64_t> classes_seen;
    std::size_t memory_images = 0;
    eval::EvalReport report;
};

/// Stage-wise concatenation: stage i of the result holds stage i of every input.
/// learned_lr is taken from the last input that has one.
StageSequence merge_sequences(const std::vector<StageSequence>& parts);

/// Phase p distills its own classes with PDD (distill seed shifted by p - 1),
/// adds them to the memory, trains fresh networks progressively on the memory
/// and tests on the classes seen so far. Labels stay global.
std::vector<PhaseResult> run_continual(const ContinualConfig& config, const LabeledDataset& train,
                                       const LabeledDataset& test);

/// Examples whose label is in `classes`.
LabeledDataset restrict_classes(const LabeledDataset& data, const std::vector<std::int64_t>& classes);

}  // namespace distilla::continual
