// SPDX-License-Identifier: Apache-2.0
#include "distilla/core/synthetic.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "distilla/core/error.hpp"
#include "distilla/core/rng.hpp"

namespace distilla {

std::string_view to_string(InitMode mode) noexcept {
    return mode == InitMode::real_sample ? "real-sample" : "noise";
}

InitMode parse_init_mode(std::string_view text) {
    if (text == "real-sample") return InitMode::real_sample;
    if (text == "noise") return InitMode::noise;
    throw Error(Errc::invalid_argument, "unknown init mode '" + std::string(text) + "'");
}

double round_to_f32(double value) noexcept { return static_cast<double>(static_cast<float>(value)); }

bool SyntheticSet::is_label_balanced() const {
    std::map<std::int64_t, std::size_t> histogram;
    for (const auto label : labels) ++histogram[label];
    return std::all_of(histogram.begin(), histogram.end(),
                       [&](const auto& entry) { return entry.second == ipc; });
}

void SyntheticSet::finalize() {
    for (double& v : images) v = round_to_f32(std::clamp(v, 0.0, 1.0));
    if (learned_lr) learned_lr = round_to_f32(*learned_lr);
}

SyntheticSet init_synthetic_set(const LabeledDataset& dataset, std::size_t ipc, InitMode mode,
                                std::uint64_t seed, std::size_t stage_index) {
    require(ipc >= 1, Errc::invalid_argument, "ipc must be at least 1");
    require(stage_index >= 1, Errc::invalid_argument, "stage index starts at 1");
    const auto classes = dataset.present_classes();
    require(!classes.empty(), Errc::insufficient_data, "dataset has no examples");

    SyntheticSet set;
    set.shape = dataset.shape();
    set.class_count = dataset.class_count();
    set.ipc = ipc;
    set.stage_index = stage_index;
    set.init_mode = mode;
    set.images.reserve(classes.size() * ipc * set.shape.size());

    Rng rng(derive_seed(seed, stream::synth_init, stage_index));
    const auto by_class = dataset.indices_by_class();
    for (const auto c : classes) {
        const auto& pool = by_class[static_cast<std::size_t>(c)];
        if (mode == InitMode::real_sample) {
            require(pool.size() >= ipc, Errc::insufficient_data,
                    "class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                        " examples, fewer than ipc=" + std::to_string(ipc));
            std::vector<std::size_t> order = pool;
            // Partial Fisher-Yates: the first ipc slots are a uniform sample without replacement.
            for (std::size_t k = 0; k < ipc; ++k) {
                const std::size_t j = k + rng.below(order.size() - k);
                std::swap(order[k], order[j]);
                const auto img = dataset.image(order[k]);
                set.images.insert(set.images.end(), img.begin(), img.end());
                set.labels.push_back(c);
            }
        } else {
            for (std::size_t k = 0; k < ipc; ++k) {
                for (std::size_t p = 0; p < set.shape.size(); ++p) set.images.push_back(rng.uniform());
                set.labels.push_back(c);
            }
        }
    }
    return set;
}

void StageSequence::validate() const {
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& stage = stages[i];
        require(stage.stage_index == i + 1, Errc::consistency,
                "stage indices must run 1..P, found " + std::to_string(stage.stage_index) +
                    " at position " + std::to_string(i + 1));
        require(stage.shape == shape, Errc::shape_mismatch,
                "stage " + std::to_string(i + 1) + " image shape differs from the sequence");
        require(stage.class_count == class_count, Errc::consistency,
                "stage " + std::to_string(i + 1) + " class count differs from the sequence");
        require(stage.images.size() == stage.labels.size() * shape.size(), Errc::consistency,
                "stage " + std::to_string(i + 1) + " image/label counts disagree");
    }
}

TrainingData union_stages(const StageSequence& seq, std::size_t upto) {
    require(upto >= 1 && upto <= seq.stage_count(), Errc::out_of_range,
            "union upto=" + std::to_string(upto) + " outside [1, " +
                std::to_string(seq.stage_count()) + "]");
    TrainingData out;
    out.shape = seq.shape;
    for (std::size_t s = 0; s < upto; ++s) {
        const auto& stage = seq.stages[s];
        std::vector<SampleSource> sources(stage.size());
        for (std::size_t i = 0; i < stage.size(); ++i) sources[i] = {stage.stage_index, i};
        out.append(stage.view(), sources);
    }
    return out;
}

TrainingData as_training_data(const SyntheticSet& set) {
    TrainingData out;
    out.shape = set.shape;
    std::vector<SampleSource> sources(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) sources[i] = {set.stage_index, i};
    out.append(set.view(), sources);
    return out;
}

}  // namespace distilla
