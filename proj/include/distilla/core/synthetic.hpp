// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "distilla/core/dataset.hpp"

namespace distilla {

enum class InitMode { real_sample, noise };

std::string_view to_string(InitMode mode) noexcept;
InitMode parse_init_mode(std::string_view text);

/// Learnable images for one stage. Pixels are unconstrained reals while the
/// stage is being optimized; finalize() clamps and rounds them to storage precision.
struct SyntheticSet {
    ImageShape shape;
    std::size_t class_count = 0;
    std::vector<double> images;
    std::vector<std::int64_t> labels;
    std::size_t ipc = 0;
    std::size_t stage_index = 1;
    std::optional<double> learned_lr;
    InitMode init_mode = InitMode::real_sample;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] DataView view() const { return {shape, images, labels}; }
    /// True when every class that appears does so exactly ipc times.
    [[nodiscard]] bool is_label_balanced() const;
    /// Clamps pixels to [0, 1] and rounds them (and learned_lr) to 32-bit float.
    void finalize();
};

/// Draws ipc images per present class, either copies of real images chosen
/// without replacement or uniform noise. Labels are grouped by class.
SyntheticSet init_synthetic_set(const LabeledDataset& dataset, std::size_t ipc, InitMode mode,
                                std::uint64_t seed, std::size_t stage_index);

struct StageSequence {
    std::string dataset_name;
    std::size_t class_count = 0;
    ImageShape shape;
    std::string config_digest;
    std::vector<SyntheticSet> stages;

    [[nodiscard]] std::size_t stage_count() const noexcept { return stages.size(); }
    void validate() const;
};

/// Concatenation of S_1..S_upto, provenance recorded as (stage, index).
TrainingData union_stages(const StageSequence& seq, std::size_t upto);

/// Wraps a single stage as training data.
TrainingData as_training_data(const SyntheticSet& set);

double round_to_f32(double value) noexcept;

}  // namespace distilla
