// SPDX-License-Identifier: Apache-2.0
#include "distilla/curriculum/forgetting.hpp"

#include <string>

#include "distilla/core/error.hpp"
#include "distilla/core/persistence.hpp"

namespace distilla::curriculum {

void ForgettingRecord::validate() const {
    require(ever_learned.size() == counts.size(), Errc::consistency, "forgetting record fields differ in length");
    if (history.empty()) return;
    require(history.size() == counts.size(), Errc::consistency, "history does not cover every example");
    for (std::size_t i = 0; i < counts.size(); ++i)
        require(counts[i] <= history[i].size() / 2 + 1, Errc::consistency, "forgetting count exceeds its bound");
}

ForgettingTracker::ForgettingTracker(std::size_t examples, bool keep_history)
    : counts_(examples, 0), learned_(examples, false), previous_(examples, false),
      history_(keep_history ? examples : 0), keep_history_(keep_history) {}

void ForgettingTracker::observe(const std::vector<bool>& correct) {
    require(correct.size() == counts_.size(), Errc::consistency, "correctness vector has the wrong length");
    for (std::size_t i = 0; i < correct.size(); ++i) {
        if (evaluations_ > 0 && previous_[i] && !correct[i]) ++counts_[i];
        previous_[i] = correct[i];
        if (correct[i]) learned_[i] = true;
        if (keep_history_) history_[i].push_back(correct[i]);
    }
    ++evaluations_;
}

ForgettingRecord ForgettingTracker::record(std::size_t eval_every, std::uint64_t seed) && {
    ForgettingRecord r;
    r.history = std::move(history_);
    r.counts = std::move(counts_);
    r.ever_learned = std::move(learned_);
    r.eval_every = eval_every;
    r.seed = seed;
    return r;
}

std::size_t steps_per_epoch(std::size_t examples, std::size_t batch_size) {
    require(batch_size >= 1, Errc::invalid_argument, "batch size must be at least 1");
    return (examples + batch_size - 1) / batch_size;
}

ForgettingRecord compute_forgetting_scores(const nn::ModelSpec& spec, const LabeledDataset& data,
                                           const nn::TrainConfig& cfg, std::size_t eval_every) {
    require(eval_every >= 1, Errc::invalid_argument, "eval_every must be at least 1");
    require(!data.empty(), Errc::invalid_argument, "cannot score an empty dataset");
    ForgettingTracker tracker(data.size());
    std::vector<bool> correct(data.size());
    nn::TrainHooks hooks;
    hooks.on_step = [&](std::size_t step, const nn::ParameterVector& params) {
        if (step % eval_every != 0) return;
        const auto predictions = nn::predict(spec, params, data.view());
        for (std::size_t i = 0; i < data.size(); ++i) correct[i] = predictions[i] == data.labels()[i];
        tracker.observe(correct);
    };
    nn::train(spec, nn::init_params(spec, cfg.seed), data.view(), cfg, &hooks);
    return std::move(tracker).record(eval_every, cfg.seed);
}

Partition partition_by_forgetting(std::span<const std::size_t> counts, std::size_t stages, std::size_t bin_width) {
    require(stages >= 1, Errc::invalid_argument, "stages must be at least 1");
    require(bin_width >= 1, Errc::invalid_argument, "bin width must be at least 1");
    Partition p;
    p.bins.resize(stages);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const std::size_t bin = counts[i] / bin_width;
        if (bin < stages)
            p.bins[bin].push_back(i);
        else
            p.excluded.push_back(i);
    }
    p.used_fraction = counts.empty() ? 0.0
                                     : static_cast<double>(counts.size() - p.excluded.size()) /
                                           static_cast<double>(counts.size());
    return p;
}

Partition partition_by_forgetting(const ForgettingRecord& record, std::size_t stages, std::size_t bin_width) {
    return partition_by_forgetting(record.counts, stages, bin_width);
}

pdd::PddResult run_pdd_curriculum(const pdd::PddConfig& config, const LabeledDataset& data,
                                  const ForgettingRecord& record, std::size_t bin_width) {
    require(record.size() == data.size(), Errc::consistency, "forgetting record does not match the dataset");
    const auto partition = partition_by_forgetting(record, config.stages, bin_width);
    std::vector<LabeledDataset> stage_data;
    for (std::size_t i = 0; i < partition.bins.size(); ++i) {
        require(!partition.bins[i].empty(), Errc::empty_bin,
                "stage " + std::to_string(i + 1) + " has no examples with forgetting count in [" +
                    std::to_string(bin_width * i) + ", " + std::to_string(bin_width * (i + 1)) + ")");
        stage_data.push_back(data.subset(partition.bins[i], data.name() + "-bin" + std::to_string(i + 1)));
    }
    return pdd::run_pdd(
        config, [&](std::size_t stage) -> const LabeledDataset& { return stage_data[stage - 1]; }, data);
}

void save_forgetting(const ForgettingRecord& record, const std::filesystem::path& path) {
    record.validate();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::vector<int> learned(record.ever_learned.begin(), record.ever_learned.end());
    write_json(path, {{"version", 1},
                      {"eval_every", record.eval_every},
                      {"seed", record.seed},
                      {"counts", record.counts},
                      {"ever_learned", learned}});
}

ForgettingRecord load_forgetting(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), Errc::io, "missing forgetting record " + path.string());
    const Json j = read_json(path);
    ForgettingRecord r;
    try {
        require(j.at("version").get<int>() == 1, Errc::format, "unsupported forgetting record version");
        r.eval_every = j.at("eval_every").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.counts = j.at("counts").get<std::vector<std::size_t>>();
        for (const int v : j.at("ever_learned").get<std::vector<int>>()) r.ever_learned.push_back(v != 0);
    } catch (const Json::exception& e) {
        throw Error(Errc::format, std::string("malformed forgetting record: ") + e.what());
    }
    r.validate();
    return r;
}

}  // namespace distilla::curriculum
