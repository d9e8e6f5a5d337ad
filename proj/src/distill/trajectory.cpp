// SPDX-License-Identifier: Apache-2.0
#include "distilla/distill/trajectory.hpp"

#include <algorithm>
#include <string>

#include "distilla/core/error.hpp"
#include "distilla/core/parallel.hpp"
#include "distilla/core/persistence.hpp"
#include "distilla/core/rng.hpp"
#include "distilla/nn/network.hpp"

namespace distilla::distill {

namespace fs = std::filesystem;

double trajectory_match_loss(const nn::ParameterVector& student_end, const nn::ParameterVector& student_start,
                             const nn::ParameterVector& expert_end) {
    const double den = nn::param_distance_sq(student_start, expert_end);
    require(den >= kDegenerateTolerance, Errc::degenerate_trajectory,
            "expert end coincides with the student start");
    return nn::param_distance_sq(student_end, expert_end) / den;
}

std::string_view to_string(ExpertOrigin origin) noexcept {
    return origin == ExpertOrigin::transition_checkpoint ? "transition-checkpoint" : "fresh-init";
}

ExpertOrigin parse_expert_origin(std::string_view text) {
    if (text == "fresh-init") return ExpertOrigin::fresh_init;
    if (text == "transition-checkpoint") return ExpertOrigin::transition_checkpoint;
    throw Error(Errc::format, "unknown expert origin '" + std::string(text) + "'");
}

void ExpertTrajectoryStore::validate() const {
    require(!experts.empty(), Errc::invalid_argument, "expert store is empty");
    const auto layout = nn::layer_map(spec);
    for (std::size_t k = 0; k < experts.size(); ++k) {
        const auto& snaps = experts[k].snapshots;
        require(snaps.size() >= 2, Errc::invalid_argument,
                "expert " + std::to_string(k) + " has fewer than two snapshots");
        for (std::size_t i = 0; i < snaps.size(); ++i) {
            require(snaps[i].params.layout == layout, Errc::layout_mismatch,
                    "expert " + std::to_string(k) + " snapshot layout differs from the model");
            require(i == 0 || snaps[i].step > snaps[i - 1].step, Errc::invalid_argument,
                    "expert " + std::to_string(k) + " snapshot steps must strictly increase");
        }
    }
}

ExpertTrajectoryStore generate_expert_trajectories(const nn::ModelSpec& spec, const LabeledDataset& data,
                                                   std::span<const nn::ParameterVector> starts,
                                                   const nn::TrainConfig& cfg, std::size_t n_experts,
                                                   std::size_t snapshot_every, std::size_t stage_index,
                                                   ExpertOrigin origin, std::size_t jobs) {
    require(n_experts >= 1, Errc::invalid_argument, "need at least one expert");
    require(starts.size() == n_experts, Errc::invalid_argument, "one start parameter vector per expert is required");
    require(snapshot_every >= 1, Errc::invalid_argument, "snapshot_every must be at least 1");
    ExpertTrajectoryStore store;
    store.spec = spec;
    store.stage_index = stage_index;
    store.origin = origin;
    store.experts.resize(n_experts);
    parallel_for(n_experts, jobs, [&](std::size_t k) {
        nn::TrainConfig c = cfg;
        c.seed = derive_seed(cfg.seed, stream::expert, k);
        c.snapshot_every = snapshot_every;
        auto run = nn::train(spec, starts[k], data.view(), c);
        for (auto& snap : run.snapshots) snap.params.round_to_f32();
        store.experts[k] = {c.seed, std::move(run.snapshots)};
    });
    store.validate();
    return store;
}

inline constexpr int kExpertStoreVersion = 1;

void save_expert_store(const ExpertTrajectoryStore& store, const fs::path& dir) {
    store.validate();
    const fs::path root = dir / "experts";
    fs::create_directories(root);
    Json experts = Json::array();
    for (std::size_t k = 0; k < store.experts.size(); ++k) {
        const auto& e = store.experts[k];
        const fs::path edir = root / ("e" + std::to_string(k));
        fs::create_directories(edir);
        Json steps = Json::array();
        for (const auto& snap : e.snapshots) {
            steps.push_back(snap.step);
            write_f32(edir / ("step_" + std::to_string(snap.step) + ".f32"), snap.params.values);
        }
        experts.push_back({{"seed", e.seed}, {"steps", steps}});
    }
    write_json(root / "manifest.json", {{"version", kExpertStoreVersion},
                                        {"spec", nn::to_json(store.spec)},
                                        {"stage_index", store.stage_index},
                                        {"origin", std::string(to_string(store.origin))},
                                        {"layout", nn::to_json(nn::layer_map(store.spec))},
                                        {"experts", experts}});
}

ExpertTrajectoryStore load_expert_store(const fs::path& dir) {
    const fs::path root = dir / "experts";
    require(fs::exists(root / "manifest.json"), Errc::io, "no expert manifest under " + root.string());
    const Json manifest = read_json(root / "manifest.json");
    ExpertTrajectoryStore store;
    try {
        require(manifest.at("version").get<int>() == kExpertStoreVersion, Errc::format,
                "unsupported expert store version");
        store.spec = nn::model_spec_from_json(manifest.at("spec"));
        store.stage_index = manifest.at("stage_index").get<std::size_t>();
        store.origin = parse_expert_origin(manifest.at("origin").get<std::string>());
        const auto layout = nn::layer_map_from_json(manifest.at("layout"));
        require(layout == nn::layer_map(store.spec), Errc::layout_mismatch, "manifest layout does not match its spec");
        const auto& experts = manifest.at("experts");
        for (std::size_t k = 0; k < experts.size(); ++k) {
            ExpertTrajectory e;
            e.seed = experts[k].at("seed").get<std::uint64_t>();
            const fs::path edir = root / ("e" + std::to_string(k));
            for (const auto& step : experts[k].at("steps")) {
                const auto s = step.get<std::size_t>();
                auto values = read_f32(edir / ("step_" + std::to_string(s) + ".f32"));
                require(values.size() == nn::parameter_count(store.spec), Errc::shape_mismatch,
                        "snapshot size does not match the model");
                e.snapshots.push_back({s, nn::ParameterVector(std::move(values), layout)});
            }
            store.experts.push_back(std::move(e));
        }
    } catch (const Json::exception& e) {
        throw Error(Errc::format, std::string("malformed expert manifest: ") + e.what());
    }
    store.validate();
    return store;
}

UnrolledMatch unrolled_trajectory_match(const nn::ModelSpec& spec, const nn::ParameterVector& start,
                                        const nn::ParameterVector& expert_end, const DataView& frozen,
                                        const DataView& current, double lr, std::size_t steps,
                                        const AugmentTransform* augment) {
    require(steps >= 1, Errc::invalid_argument, "need at least one student step");
    require(!current.empty(), Errc::invalid_argument, "no learnable images");
    const double den = nn::param_distance_sq(start, expert_end);
    require(den >= kDegenerateTolerance, Errc::degenerate_trajectory, "expert end coincides with the student start");

    TrainingData batch;
    batch.shape = current.shape;
    if (!frozen.empty()) batch.append(frozen);
    batch.append(current);
    if (augment != nullptr) batch.images = apply_transform(*augment, batch.shape, batch.images);
    const DataView x = batch.view();

    std::vector<nn::ParameterVector> thetas{start};
    thetas.reserve(steps + 1);
    for (std::size_t k = 0; k < steps; ++k) {
        const auto g = nn::loss_and_grad(spec, thetas.back(), x).grad;
        auto next = thetas.back();
        for (std::size_t i = 0; i < next.size(); ++i) next.values[i] -= lr * g.values[i];
        thetas.push_back(std::move(next));
    }

    UnrolledMatch out;
    const auto& end = thetas.back();
    out.loss = nn::param_distance_sq(end, expert_end) / den;

    // Reverse pass: a holds d loss / d theta_{k+1}.
    std::vector<double> a(end.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = 2.0 * (end.values[i] - expert_end.values[i]) / den;
    std::vector<double> pixel(batch.images.size(), 0.0);
    for (std::size_t k = steps; k-- > 0;) {
        const auto dd = nn::directional_derivatives(spec, thetas[k], x, a);
        double dot = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * dd.grad[i];
        out.lr_grad -= dot;
        for (std::size_t i = 0; i < pixel.size(); ++i) pixel[i] -= lr * dd.input_vjp[i];
        for (std::size_t i = 0; i < a.size(); ++i) a[i] -= lr * dd.hvp[i];
    }
    if (augment != nullptr) pixel = transform_adjoint(*augment, batch.shape, pixel);
    const std::size_t offset = frozen.images.size();
    out.pixel_grad.assign(pixel.begin() + static_cast<long>(offset), pixel.end());
    return out;
}

StageResult distill_stage_mtt(const nn::ModelSpec& spec, const ExpertTrajectoryStore& experts,
                              const LabeledDataset& data, const DataView& frozen, const DistillBudget& budget,
                              std::uint64_t seed, std::size_t stage_index) {
    budget.validate();
    experts.validate();
    require(experts.spec == spec, Errc::layout_mismatch, "expert store was trained for a different model");

    StageResult result;
    result.set = init_synthetic_set(data, budget.ipc, budget.init_mode, seed, stage_index);
    SyntheticSet& set = result.set;
    Rng rng(derive_seed(seed, stream::distill, stage_index));
    double lr = budget.initial_student_lr;

    for (std::size_t it = 0; it < budget.outer_iterations; ++it) {
        const auto& snaps = experts.experts[rng.below(experts.experts.size())].snapshots;
        std::vector<std::pair<std::size_t, std::size_t>> anchors;  // (start, target) snapshot indices
        for (std::size_t i = 0; i < snaps.size(); ++i) {
            if (budget.max_anchor_step != 0 && snaps[i].step > budget.max_anchor_step) break;
            for (std::size_t j = i + 1; j < snaps.size(); ++j) {
                if (snaps[j].step == snaps[i].step + budget.expert_span) anchors.emplace_back(i, j);
                if (snaps[j].step >= snaps[i].step + budget.expert_span) break;
            }
        }
        require(!anchors.empty(), Errc::anchor_span,
                "no snapshot pair is " + std::to_string(budget.expert_span) + " steps apart");
        const auto [from, to] = anchors[rng.below(anchors.size())];
        const auto transform = sample_transform(budget.augment, data.shape(), rng);
        const auto match = unrolled_trajectory_match(spec, snaps[from].params, snaps[to].params, frozen, set.view(),
                                                     lr, budget.inner_steps, &transform);
        result.loss_history.push_back(match.loss);
        for (std::size_t i = 0; i < set.images.size(); ++i) set.images[i] -= budget.outer_lr * match.pixel_grad[i];
        if (budget.learn_lr) lr = std::max(0.0, lr - budget.lr_lr * match.lr_grad);  // projected onto lr >= 0
    }
    set.learned_lr = lr;
    return result;
}

}  // namespace distilla::distill
