// SPDX-License-Identifier: Apache-2.0
#include "distilla/continual/continual.hpp"

#include <algorithm>
#include <string>

#include "distilla/core/error.hpp"

namespace distilla::continual {

std::vector<std::vector<std::int64_t>> split_class_phases(std::size_t classes, std::size_t phases) {
    require(phases >= 1, Errc::invalid_argument, "need at least one phase");
    require(phases <= classes, Errc::invalid_argument,
            std::to_string(phases) + " phases cannot split " + std::to_string(classes) + " classes");
    const std::size_t width = classes / phases;
    std::vector<std::vector<std::int64_t>> out(phases);
    for (std::size_t c = 0; c < classes; ++c)
        out[std::min(c / width, phases - 1)].push_back(static_cast<std::int64_t>(c));
    return out;
}

LabeledDataset restrict_classes(const LabeledDataset& data, const std::vector<std::int64_t>& classes) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (std::find(classes.begin(), classes.end(), data.labels()[i]) != classes.end()) keep.push_back(i);
    require(!keep.empty(), Errc::insufficient_data, "no examples of the requested classes");
    return data.subset(keep, data.name());
}

StageSequence merge_sequences(const std::vector<StageSequence>& parts) {
    require(!parts.empty(), Errc::invalid_argument, "nothing to merge");
    StageSequence out = parts.front();
    for (std::size_t p = 1; p < parts.size(); ++p) {
        const auto& part = parts[p];
        require(part.stage_count() == out.stage_count() && part.shape == out.shape &&
                    part.class_count == out.class_count,
                Errc::shape_mismatch, "sequences differ in stage count or image shape");
        for (std::size_t i = 0; i < out.stage_count(); ++i) {
            auto& dst = out.stages[i];
            const auto& src = part.stages[i];
            dst.images.insert(dst.images.end(), src.images.begin(), src.images.end());
            dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
            if (src.learned_lr) dst.learned_lr = src.learned_lr;
        }
    }
    out.validate();
    return out;
}

std::vector<PhaseResult> run_continual(const ContinualConfig& config, const LabeledDataset& train,
                                       const LabeledDataset& test) {
    const auto phases = split_class_phases(train.class_count(), config.phases);
    std::vector<StageSequence> memory;
    std::vector<std::int64_t> seen;
    std::vector<PhaseResult> results;
    for (std::size_t p = 1; p <= phases.size(); ++p) {
        const auto& classes = phases[p - 1];
        pdd::PddConfig cfg = config.pdd;
        cfg.distill_seed = config.pdd.distill_seed + (p - 1);
        memory.push_back(pdd::run_pdd(cfg, restrict_classes(train, classes)).sequence);
        seen.insert(seen.end(), classes.begin(), classes.end());

        const auto merged = merge_sequences(memory);
        const eval::Mode modes[] = {eval::Mode::progressive};
        auto reports = eval::evaluate_sequence(merged, config.pdd.spec, config.eval, modes, config.eval_seeds,
                                               config.epoch_schedule, restrict_classes(test, seen), config.jobs);
        results.push_back({p, seen, union_stages(merged, merged.stage_count()).size(), std::move(reports.front())});
    }
    return results;
}

}  // namespace distilla::continual
