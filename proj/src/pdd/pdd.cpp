// SPDX-License-Identifier: Apache-2.0
#include "distilla/pdd/pdd.hpp"

#include <cmath>

#include "distilla/core/error.hpp"
#include "distilla/core/parallel.hpp"
#include "distilla/core/persistence.hpp"
#include "distilla/core/rng.hpp"
#include "distilla/distill/gradmatch.hpp"
#include "distilla/distill/trajectory.hpp"

namespace distilla::pdd {

namespace fs = std::filesystem;

std::string_view to_string(BaseMethod base) noexcept {
    switch (base) {
        case BaseMethod::gradmatch_synthetic: return "gradmatch-synthetic";
        case BaseMethod::gradmatch_real: return "gradmatch-real";
        case BaseMethod::mtt: return "mtt";
    }
    return "gradmatch-real";
}

BaseMethod parse_base_method(std::string_view text) {
    if (text == "gradmatch-synthetic") return BaseMethod::gradmatch_synthetic;
    if (text == "gradmatch-real") return BaseMethod::gradmatch_real;
    if (text == "mtt") return BaseMethod::mtt;
    throw Error(Errc::invalid_argument, "unknown base method '" + std::string(text) + "'");
}

void PddConfig::validate() const {
    require(stages >= 1, Errc::invalid_argument, "stages must be at least 1");
    require(per_stage_ipc >= 1, Errc::invalid_argument, "per_stage_ipc must be at least 1");
    require(!seeds.empty(), Errc::invalid_argument, "at least one checkpoint seed is required");
    require(jobs >= 1, Errc::invalid_argument, "jobs must be at least 1");
    spec.validate();
    budget.validate();
    transition.validate();
    if (base == BaseMethod::mtt) {
        expert.validate();
        require(expert_snapshot_every >= 1, Errc::invalid_argument, "expert_snapshot_every must be at least 1");
    }
}

std::size_t schedule_stage_epochs(std::size_t stages, double multiplier) {
    require(stages >= 1, Errc::invalid_argument, "stages must be at least 1");
    require(std::isfinite(multiplier) && multiplier > 0.0, Errc::invalid_argument, "epoch multiplier must be positive");
    const std::size_t base = 2000 / (stages + 1);
    if (multiplier == 1.0) return base;
    const auto scaled = static_cast<std::size_t>(std::floor(static_cast<double>(base) * multiplier));
    return std::max<std::size_t>(1, scaled);
}

std::uint64_t total_training_iterations(std::uint64_t stages, std::uint64_t n, std::uint64_t batch) {
    require(stages >= 1 && n >= 1 && batch >= 1, Errc::invalid_argument, "arguments must be positive");
    return 1000 * stages * n / batch;
}

nn::ParameterVector transition_train(const nn::ModelSpec& spec, const nn::ParameterVector& theta_prev,
                                     const DataView& union_so_far, const nn::TrainConfig& cfg) {
    if (union_so_far.empty()) return theta_prev;
    return nn::train(spec, theta_prev, union_so_far, cfg).params;
}

nn::TrainConfig transition_config(const nn::TrainConfig& base, const SyntheticSet& stage, std::size_t stage_index,
                                  std::size_t checkpoint) {
    nn::TrainConfig cfg = base;
    cfg.seed = derive_seed(base.seed, stage_index, checkpoint);
    cfg.snapshot_every = 0;
    if (stage.learned_lr) cfg.lr = *stage.learned_lr;
    return cfg;
}

PddResult run_pdd(const PddConfig& config, const LabeledDataset& data) {
    return run_pdd(config, [&](std::size_t) -> const LabeledDataset& { return data; }, data);
}

PddResult run_pdd(const PddConfig& config, const StageData& stage_data, const LabeledDataset& reference) {
    config.validate();
    require(config.spec.input == reference.shape() && config.spec.class_count == reference.class_count(),
            Errc::shape_mismatch, "model does not fit the dataset");
    const std::size_t E = config.seeds.size();
    distill::DistillBudget budget = config.budget;
    budget.ipc = config.per_stage_ipc;

    std::vector<nn::ParameterVector> fresh;
    for (const auto seed : config.seeds) {
        fresh.push_back(nn::init_params(config.spec, seed));
        fresh.back().round_to_f32();
    }

    PddResult result;
    StageSequence& seq = result.sequence;
    seq.dataset_name = reference.name();
    seq.class_count = reference.class_count();
    seq.shape = reference.shape();
    seq.config_digest = config.config_digest;
    std::vector<nn::ParameterVector> checkpoints = fresh;

    for (std::size_t i = 1; i <= config.stages; ++i) {
        result.starts.push_back(checkpoints);
        const LabeledDataset& data = stage_data(i);
        TrainingData frozen;
        if (!config.no_conditioning && i > 1) frozen = union_stages(seq, i - 1);

        distill::StageResult stage;
        if (config.base == BaseMethod::mtt) {
            const auto origin = (i == 1 || config.no_transition) ? distill::ExpertOrigin::fresh_init
                                                                   : distill::ExpertOrigin::transition_checkpoint;
            const auto store = distill::generate_expert_trajectories(config.spec, data, checkpoints, config.expert, E,
                                                                     config.expert_snapshot_every, i, origin,
                                                                     config.jobs);
            stage = distill::distill_stage_mtt(config.spec, store, data, frozen.view(), budget, config.distill_seed, i);
        } else {
            const auto mode = config.base == BaseMethod::gradmatch_real ? distill::StudentMode::real_traj
                                                                        : distill::StudentMode::synthetic_traj;
            stage = distill::distill_stage_gradmatch(config.spec, checkpoints, data, frozen.view(), budget, mode,
                                                     config.distill_seed, i);
        }
        stage.set.finalize();
        seq.stages.push_back(std::move(stage.set));

        if (config.no_transition) continue;
        const auto union_so_far = union_stages(seq, i);
        parallel_for(E, config.jobs, [&](std::size_t k) {
            const auto cfg = transition_config(config.transition, seq.stages.back(), i, k);
            checkpoints[k] = transition_train(config.spec, checkpoints[k], union_so_far.view(), cfg);
            checkpoints[k].round_to_f32();
        });
    }
    result.starts.push_back(checkpoints);
    seq.validate();
    return result;
}

void save_checkpoints(const PddResult& result, const fs::path& dir) {
    require(!result.starts.empty(), Errc::invalid_argument, "no checkpoints to save");
    const fs::path root = dir / "checkpoints";
    fs::create_directories(root);
    for (std::size_t i = 0; i < result.starts.size(); ++i)
        for (std::size_t k = 0; k < result.starts[i].size(); ++k)
            write_f32(root / ("stage_" + std::to_string(i + 1) + "_seed_" + std::to_string(k) + ".f32"),
                      result.starts[i][k].values);
    write_json(root / "manifest.json", {{"version", 1},
                                        {"stage_count", result.starts.size()},
                                        {"seed_count", result.starts.front().size()},
                                        {"layout", nn::to_json(result.starts.front().front().layout)}});
}

std::vector<std::vector<nn::ParameterVector>> load_checkpoints(const fs::path& dir) {
    const fs::path root = dir / "checkpoints";
    require(fs::exists(root / "manifest.json"), Errc::io, "no checkpoint manifest under " + root.string());
    const Json manifest = read_json(root / "manifest.json");
    std::vector<std::vector<nn::ParameterVector>> out;
    try {
        const auto layout = nn::layer_map_from_json(manifest.at("layout"));
        const auto stages = manifest.at("stage_count").get<std::size_t>();
        const auto seeds = manifest.at("seed_count").get<std::size_t>();
        for (std::size_t i = 1; i <= stages; ++i) {
            auto& row = out.emplace_back();
            for (std::size_t k = 0; k < seeds; ++k) {
                const fs::path file = root / ("stage_" + std::to_string(i) + "_seed_" + std::to_string(k) + ".f32");
                require(fs::exists(file), Errc::missing_stage, "missing checkpoint " + file.string());
                row.emplace_back(read_f32(file), layout);
            }
        }
    } catch (const Json::exception& e) {
        throw Error(Errc::format, std::string("malformed checkpoint manifest: ") + e.what());
    }
    return out;
}

}  // namespace distilla::pdd
