// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "distilla/core/dataset.hpp"
#include "distilla/core/persistence.hpp"
#include "distilla/eval/eval.hpp"
#include "distilla/pdd/pdd.hpp"

namespace distilla::cli {

inline constexpr int kConfigVersion = 1;

struct DatasetConfig {
    std::string kind = "blobs";  // "blobs" or "idx"
    // blobs
    std::uint64_t seed = 0;
    std::uint64_t test_seed = 1;
    std::size_t classes = 4;
    std::size_t per_class = 100;
    std::size_t test_per_class = 50;
    std::size_t side = 8;
    double noise = 0.5;
    // idx: classes and shape must be stated and are checked on load
    ImageShape shape{1, 8, 8};
    std::filesystem::path train_images, train_labels, test_images, test_labels;
};

struct EvalSettings {
    nn::TrainConfig train;  // epochs unused; the schedule decides
    double epoch_multiplier = 1.0;
    std::vector<std::size_t> epoch_schedule;  // overrides the multiplier when set
    std::size_t seeds = 5;
    std::uint64_t seed_base = 0;
    std::vector<eval::Mode> modes{eval::Mode::union_all, eval::Mode::sequential, eval::Mode::progressive};
};

struct ForgettingSettings {
    nn::TrainConfig train;
    std::optional<std::size_t> eval_every;  // default: one epoch
};

/// Fully parsed experiment description.
struct ExperimentConfig {
    DatasetConfig dataset;
    pdd::PddConfig pdd;
    /// forgetting.json to drive curriculum distillation, relative to the output directory.
    std::optional<std::filesystem::path> curriculum;
    std::size_t bin_width = 3;
    EvalSettings eval;
    ForgettingSettings forgetting;
    std::size_t continual_phases = 1;
    std::filesystem::path output = "run";
    std::string digest;
};

/// Parses and validates a config document. All problems raise Errc::config;
/// unknown keys are reported with their full dotted path.
ExperimentConfig parse_config(const Json& document);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Output root: DISTILLA_WORKDIR when set, else the current directory, joined with config.output.
std::filesystem::path output_dir(const ExperimentConfig& config);

struct Datasets {
    LabeledDataset train;
    LabeledDataset test;
};
Datasets load_datasets(const DatasetConfig& config);

/// Model preset by name: "convnet" (the configured model), "convnet-bn" (same
/// with batch norm) or "mlp" (one hidden layer of 4 * width units).
nn::ModelSpec architecture_preset(const std::string& name, const nn::ModelSpec& base);

std::vector<std::size_t> eval_schedule(const ExperimentConfig& config);

}  // namespace distilla::cli
