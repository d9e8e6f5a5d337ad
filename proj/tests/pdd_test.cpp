// SPDX-License-Identifier: Apache-2.0
#include <numeric>

#include "doctest.h"

#include "distilla/core/error.hpp"
#include "distilla/distill/gradmatch.hpp"
#include "distilla/nn/network.hpp"
#include "distilla/pdd/pdd.hpp"
#include "support/temp_dir.hpp"

using namespace distilla;
using namespace distilla::pdd;

namespace {

PddConfig small_config(const LabeledDataset& data, std::size_t stages, BaseMethod base = BaseMethod::gradmatch_real) {
    PddConfig cfg;
    cfg.stages = stages;
    cfg.per_stage_ipc = 2;
    cfg.base = base;
    cfg.spec = nn::ModelSpec{nn::Family::convnet, 1, 4, nn::Norm::instance, data.shape(), data.class_count()};
    cfg.budget.outer_iterations = 2;
    cfg.budget.inner_steps = 2;
    cfg.budget.real_batch_per_class = 8;
    cfg.budget.real_batch = 16;
    cfg.budget.expert_span = 2;
    cfg.transition.epochs = 3;
    cfg.transition.batch_size = 4;
    cfg.transition.lr = 0.02;
    cfg.expert.epochs = 1;
    cfg.expert.batch_size = 8;
    cfg.expert_snapshot_every = 2;
    cfg.seeds = {3, 4};
    cfg.distill_seed = 17;
    return cfg;
}

std::vector<std::vector<double>> stage_bytes(const StageSequence& seq) {
    std::vector<std::vector<double>> out;
    for (const auto& s : seq.stages) out.push_back(s.images);
    return out;
}

}  // namespace

TEST_CASE("schedule_stage_epochs") {
    CHECK(schedule_stage_epochs(1) == 1000);
    CHECK(schedule_stage_epochs(3) == 500);
    CHECK(schedule_stage_epochs(4) == 400);
    CHECK(schedule_stage_epochs(2) == 666);
    CHECK(schedule_stage_epochs(3, 0.01) == 5);
    CHECK(schedule_stage_epochs(3, 1e-6) == 1);
    CHECK_THROWS_AS(schedule_stage_epochs(0), Error);
}

TEST_CASE("total_training_iterations: instances and brute-force phase sum") {
    CHECK(total_training_iterations(5, 100, 100) == 5000);
    CHECK(total_training_iterations(1, 64, 64) == 1000);
    // Sum over phases of i * (2000 / (P + 1)) * (n / B), kept as an exact fraction.
    for (std::uint64_t P = 1; P <= 8; ++P) {
        for (const auto [n, B] : std::vector<std::pair<std::uint64_t, std::uint64_t>>{{100, 100}, {500, 256}, {40, 7}}) {
            std::uint64_t num = 0;
            const std::uint64_t den = (P + 1) * B;
            for (std::uint64_t i = 1; i <= P; ++i) num += i * 2000 * n;
            const std::uint64_t g = std::gcd(num, den);
            CHECK(total_training_iterations(P, n, B) == (num / g) / (den / g));
        }
    }
}

TEST_CASE("transition_train") {
    const auto data = make_blobs_dataset(2, 3, 10, 6, 0.2);
    const auto spec = nn::ModelSpec{nn::Family::convnet, 1, 4, nn::Norm::instance, data.shape(), 3};
    const auto theta = nn::init_params(spec, 1);
    nn::TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 6;
    cfg.lr = 0.05;
    CHECK(transition_train(spec, theta, DataView{data.shape(), {}, {}}, cfg).values == theta.values);
    cfg.epochs = 0;
    CHECK(transition_train(spec, theta, data.view(), cfg).values == theta.values);
    cfg.epochs = 5;
    const auto next = transition_train(spec, theta, data.view(), cfg);
    CHECK(nn::loss(spec, next, data.view()) <= nn::loss(spec, theta, data.view()));
}

TEST_CASE("run_pdd: cardinality, freeze and checkpoint lineage") {
    const auto data = make_blobs_dataset(5, 3, 20, 6, 0.2);
    const auto cfg = small_config(data, 3);
    const auto out = run_pdd(cfg, data);
    const auto& seq = out.sequence;
    REQUIRE(seq.stage_count() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(seq.stages[i].size() == 2 * 3);
        CHECK(seq.stages[i].is_label_balanced());
        CHECK(seq.stages[i].stage_index == i + 1);
        CHECK(union_stages(seq, i + 1).size() == (i + 1) * 2 * 3);
    }
    REQUIRE(out.starts.size() == 4);

    // Stage bytes are fixed once the stage is produced.
    const auto prefix1 = run_pdd(small_config(data, 1), data);
    const auto prefix2 = run_pdd(small_config(data, 2), data);
    CHECK(prefix1.sequence.stages[0].images == seq.stages[0].images);
    CHECK(prefix2.sequence.stages[0].images == seq.stages[0].images);
    CHECK(prefix2.sequence.stages[1].images == seq.stages[1].images);

    for (std::size_t i = 1; i <= 3; ++i) {
        const auto union_i = union_stages(seq, i);
        for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
            auto replay = transition_train(cfg.spec, out.starts[i - 1][k], union_i.view(),
                                           transition_config(cfg.transition, seq.stages[i - 1], i, k));
            replay.round_to_f32();
            CHECK(replay.values == out.starts[i][k].values);
        }
    }
    CHECK(run_pdd(cfg, data).sequence.stages.back().images == seq.stages.back().images);
}

TEST_CASE("run_pdd: single stage is one base-distiller run from fresh inits") {
    const auto data = make_blobs_dataset(6, 2, 15, 6, 0.2);
    for (const auto base : {BaseMethod::gradmatch_real, BaseMethod::gradmatch_synthetic}) {
        const auto cfg = small_config(data, 1, base);
        const auto out = run_pdd(cfg, data);
        std::vector<nn::ParameterVector> fresh;
        for (const auto s : cfg.seeds) {
            fresh.push_back(nn::init_params(cfg.spec, s));
            fresh.back().round_to_f32();
        }
        CHECK(out.starts[0][0].values == fresh[0].values);
        auto budget = cfg.budget;
        budget.ipc = cfg.per_stage_ipc;
        const auto mode = base == BaseMethod::gradmatch_real ? distill::StudentMode::real_traj
                                                             : distill::StudentMode::synthetic_traj;
        auto direct = distill::distill_stage_gradmatch(cfg.spec, fresh, data, {}, budget, mode, cfg.distill_seed, 1);
        direct.set.finalize();
        CHECK(direct.set.images == out.sequence.stages[0].images);
    }
}

TEST_CASE("run_pdd: ablations") {
    const auto data = make_blobs_dataset(7, 2, 15, 6, 0.2);
    auto cfg = small_config(data, 3);
    cfg.no_transition = true;
    const auto frozen_starts = run_pdd(cfg, data);
    for (const auto& row : frozen_starts.starts)
        for (std::size_t k = 0; k < row.size(); ++k) CHECK(row[k].values == frozen_starts.starts[0][k].values);

    cfg.no_conditioning = true;
    const auto independent = run_pdd(cfg, data);
    const auto& fresh = independent.starts[0];
    auto budget = cfg.budget;
    budget.ipc = cfg.per_stage_ipc;
    for (std::size_t i = 1; i <= 3; ++i) {
        auto direct = distill::distill_stage_gradmatch(cfg.spec, fresh, data, {}, budget,
                                                       distill::StudentMode::real_traj, cfg.distill_seed, i);
        direct.set.finalize();
        CHECK(direct.set.images == independent.sequence.stages[i - 1].images);
    }
    CHECK(independent.sequence.stages[0].images != independent.sequence.stages[1].images);

    cfg.no_transition = false;
    const auto transitioned = run_pdd(cfg, data);
    CHECK(transitioned.starts[1][0].values != transitioned.starts[0][0].values);
    CHECK(stage_bytes(transitioned.sequence)[0] == stage_bytes(independent.sequence)[0]);
}

TEST_CASE("run_pdd: trajectory-matching base carries learned rates through transitions") {
    const auto data = make_blobs_dataset(8, 2, 12, 4, 0.2);
    auto cfg = small_config(data, 2, BaseMethod::mtt);
    cfg.spec = nn::ModelSpec{nn::Family::mlp, 1, 4, nn::Norm::none, data.shape(), 2};
    cfg.budget.learn_lr = true;
    cfg.budget.lr_lr = 1e-4;
    const auto out = run_pdd(cfg, data);
    for (const auto& stage : out.sequence.stages) REQUIRE(stage.learned_lr.has_value());
    const auto cfg2 = transition_config(cfg.transition, out.sequence.stages[1], 2, 0);
    CHECK(cfg2.lr == *out.sequence.stages[1].learned_lr);
    auto replay = transition_train(cfg.spec, out.starts[1][0], union_stages(out.sequence, 2).view(), cfg2);
    replay.round_to_f32();
    CHECK(replay.values == out.starts[2][0].values);
}

TEST_CASE("run_pdd: configuration errors") {
    const auto data = make_blobs_dataset(9, 2, 10, 6, 0.2);
    auto cfg = small_config(data, 2);
    cfg.stages = 0;
    CHECK_THROWS_AS(run_pdd(cfg, data), Error);
    cfg = small_config(data, 2);
    cfg.seeds.clear();
    CHECK_THROWS_AS(run_pdd(cfg, data), Error);
    cfg = small_config(data, 2);
    cfg.spec.class_count = 3;
    CHECK_THROWS_AS(run_pdd(cfg, data), Error);
    cfg = small_config(data, 2);
    cfg.per_stage_ipc = 11;
    CHECK_THROWS_AS(run_pdd(cfg, data), Error);
}

TEST_CASE("checkpoint persistence") {
    const auto data = make_blobs_dataset(10, 2, 10, 6, 0.2);
    const auto out = run_pdd(small_config(data, 2), data);
    distilla::testing::TempDir dir;
    save_checkpoints(out, dir / "a");
    CHECK(std::filesystem::exists(dir / "a" / "checkpoints" / "stage_2_seed_1.f32"));
    const auto loaded = load_checkpoints(dir / "a");
    REQUIRE(loaded.size() == out.starts.size());
    for (std::size_t i = 0; i < loaded.size(); ++i)
        for (std::size_t k = 0; k < loaded[i].size(); ++k) CHECK(loaded[i][k].values == out.starts[i][k].values);
    std::filesystem::remove(dir / "a" / "checkpoints" / "stage_3_seed_0.f32");
    CHECK_THROWS_AS(load_checkpoints(dir / "a"), Error);
}
