// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails. Criteria can be selected by number on the command
// line (e.g. `acceptance 1 2 9`).
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "distilla/core/persistence.hpp"
#include "distilla/core/rng.hpp"
#include "distilla/curriculum/forgetting.hpp"
#include "distilla/distill/gradmatch.hpp"
#include "distilla/distill/trajectory.hpp"
#include "distilla/eval/eval.hpp"
#include "distilla/nn/network.hpp"
#include "distilla/pdd/pdd.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace distilla;
using distilla::testing::all_coords;
using distilla::testing::central_differences;
using distilla::testing::max_relative_error;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& text) { detail += (detail.empty() ? "" : "; ") + text; }
};

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo, double hi) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

struct Batch {
    std::vector<double> images;
    std::vector<std::int64_t> labels;
    [[nodiscard]] DataView view(ImageShape s) const { return {s, images, labels}; }
};

Batch random_batch(ImageShape s, std::vector<std::int64_t> labels, std::uint64_t seed) {
    return {random_values(labels.size() * s.size(), seed, 0.0, 1.0), std::move(labels)};
}

// 1. Analytic derivatives against central differences, 64-bit, <= 200 parameters.
Outcome gradient_oracles() {
    Outcome o;
    const std::vector<nn::ModelSpec> specs{
        {nn::Family::mlp, 1, 4, nn::Norm::none, {1, 3, 3}, 2},
        {nn::Family::convnet, 1, 2, nn::Norm::instance, {1, 4, 4}, 2},
        {nn::Family::convnet, 1, 3, nn::Norm::batch, {1, 4, 4}, 3},
    };
    double worst_ce = 0.0, worst_gm = 0.0;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        const auto& spec = specs[k];
        const auto s = spec.input;
        o.check(nn::parameter_count(spec) <= 200, spec.name() + " has at most 200 parameters");
        const auto params = nn::init_params(spec, 10 + k);
        std::vector<std::int64_t> labels;
        for (std::size_t i = 0; i < 6; ++i) labels.push_back(static_cast<std::int64_t>(i % spec.class_count));
        const auto batch = random_batch(s, labels, 20 + k);

        const auto analytic = nn::loss_and_grad(spec, params, batch.view(s));
        const auto numeric = central_differences(
            [&](std::span<const double> x) {
                return nn::loss(spec, nn::ParameterVector({x.begin(), x.end()}, params.layout), batch.view(s));
            },
            params.values, all_coords(params.size()));
        worst_ce = std::max(worst_ce, max_relative_error(analytic.grad.values, numeric));

        const auto frozen = random_batch(s, {0, 1}, 30 + k);
        const auto current = random_batch(s, {1, 0, 0, 1}, 40 + k);
        const auto real = batch;
        for (const auto metric : {distill::MatchMetric::layerwise_cosine, distill::MatchMetric::l2}) {
            const auto r =
                distill::gradient_match_loss(spec, params, frozen.view(s), current.view(s), real.view(s), metric);
            const auto fd = central_differences(
                [&](std::span<const double> x) {
                    return distill::gradient_match_loss(spec, params, frozen.view(s), DataView{s, x, current.labels},
                                                        real.view(s), metric)
                        .loss;
                },
                current.images, all_coords(current.images.size()));
            worst_gm = std::max(worst_gm, max_relative_error(r.pixel_grad, fd));
        }
    }
    o.check(worst_ce <= 1e-4, "cross-entropy gradient");
    o.check(worst_gm <= 1e-4, "gradient-match pixel gradient");

    // Trajectory matching through N = 2 unrolled student steps.
    const nn::ModelSpec spec{nn::Family::mlp, 1, 4, nn::Norm::none, {1, 2, 2}, 2};
    const ImageShape s = spec.input;
    const auto start = nn::init_params(spec, 3);
    auto expert = start;
    const auto push = random_values(start.size(), 9, -0.5, 0.5);
    for (std::size_t i = 0; i < expert.size(); ++i) expert.values[i] += push[i];
    const auto frozen = random_batch(s, {1}, 21);
    const auto current = random_batch(s, {0, 1}, 22);
    const double lr = 0.4;
    const auto r = distill::unrolled_trajectory_match(spec, start, expert, frozen.view(s), current.view(s), lr, 2);
    const auto fd_x = central_differences(
        [&](std::span<const double> x) {
            return distill::unrolled_trajectory_match(spec, start, expert, frozen.view(s),
                                                      DataView{s, x, current.labels}, lr, 2)
                .loss;
        },
        current.images, all_coords(current.images.size()));
    const auto fd_lr = central_differences(
        [&](std::span<const double> v) {
            return distill::unrolled_trajectory_match(spec, start, expert, frozen.view(s), current.view(s), v[0], 2)
                .loss;
        },
        std::vector<double>{lr}, all_coords(1));
    const double err_x = max_relative_error(r.pixel_grad, fd_x);
    const double err_lr = max_relative_error(std::vector<double>{r.lr_grad}, fd_lr);
    o.check(err_x <= 1e-4, "unrolled pixel gradient");
    o.check(err_lr <= 1e-3, "unrolled lr gradient");
    o.note("max rel err: ce " + fmt("%.1e", worst_ce) + ", match " + fmt("%.1e", worst_gm) + ", unrolled pixels " +
           fmt("%.1e", err_x) + ", unrolled lr " + fmt("%.1e", err_lr));
    return o;
}

// 2. Trajectory-loss anchors and rotation invariance.
Outcome trajectory_anchors() {
    Outcome o;
    const std::size_t n = 12;
    const nn::LayerMap flat{{"w", 0, {n}}};
    auto pv = [&](std::vector<double> v) { return nn::ParameterVector(std::move(v), flat); };
    auto reflect = [](std::vector<double> x, const std::vector<double>& h) {
        double hh = 0.0, hx = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            hh += h[i] * h[i];
            hx += h[i] * x[i];
        }
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= 2.0 * hx / hh * h[i];
        return x;
    };
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto end = random_values(n, seed, -1, 1);
        const auto start = random_values(n, seed + 100, -1, 1);
        const auto expert = random_values(n, seed + 200, -1, 1);
        o.check(distill::trajectory_match_loss(pv(expert), pv(start), pv(expert)) == 0.0, "exact 0 anchor");
        o.check(distill::trajectory_match_loss(pv(start), pv(start), pv(expert)) == 1.0, "exact 1 anchor");
        // A rotation: product of four Householder reflections (determinant +1).
        std::vector<std::vector<double>> hs;
        for (std::uint64_t r = 0; r < 4; ++r) hs.push_back(random_values(n, seed + 300 + 100 * r, -1, 1));
        auto q = [&](std::vector<double> x) {
            for (const auto& h : hs) x = reflect(std::move(x), h);
            return pv(std::move(x));
        };
        const double plain = distill::trajectory_match_loss(pv(end), pv(start), pv(expert));
        const double rotated = distill::trajectory_match_loss(q(end), q(start), q(expert));
        worst = std::max(worst, std::abs(plain - rotated));
    }
    o.check(worst <= 1e-10, "rotation invariance");
    o.note("50 instances, max rotation deviation " + fmt("%.1e", worst));
    return o;
}

// 3. Epoch schedule and iteration-count identities.
Outcome schedule_identities() {
    Outcome o;
    o.check(pdd::schedule_stage_epochs(1) == 1000, "P=1 -> 1000");
    o.check(pdd::schedule_stage_epochs(3) == 500, "P=3 -> 500");
    o.check(pdd::schedule_stage_epochs(4) == 400, "P=4 -> 400");
    std::size_t cases = 0;
    for (std::uint64_t P = 1; P <= 8; ++P) {
        for (const auto [n, B] : std::vector<std::pair<std::uint64_t, std::uint64_t>>{
                 {100, 100}, {500, 256}, {50000, 256}, {40, 7}, {1, 3}, {2000, 64}}) {
            // Phase i trains on i/P of the budget for 2000/(P+1) epochs of n/B steps;
            // accumulate the exact rational sum and floor it once.
            std::uint64_t num = 0;
            const std::uint64_t den = (P + 1) * B;
            for (std::uint64_t i = 1; i <= P; ++i) num += i * 2000 * n;
            o.check(pdd::total_training_iterations(P, n, B) == num / den,
                    "phase sum P=" + std::to_string(P) + " n=" + std::to_string(n) + " B=" + std::to_string(B));
            ++cases;
        }
    }
    o.note(std::to_string(cases) + " brute-force phase sums");
    return o;
}

pdd::PddConfig lineage_config(const LabeledDataset& data, std::size_t stages) {
    pdd::PddConfig cfg;
    cfg.stages = stages;
    cfg.per_stage_ipc = 2;
    cfg.spec = nn::ModelSpec{nn::Family::convnet, 2, 4, nn::Norm::instance, data.shape(), data.class_count()};
    cfg.budget.outer_iterations = 5;
    cfg.budget.inner_steps = 3;
    cfg.budget.real_batch_per_class = 16;
    cfg.budget.real_batch = 32;
    cfg.transition.epochs = 5;
    cfg.transition.batch_size = 8;
    cfg.seeds = {0, 1};
    cfg.distill_seed = 11;
    return cfg;
}

std::string stage_bytes(const StageSequence& seq, std::size_t stage) {
    distilla::testing::TempDir dir;
    save_stage_sequence(seq, dir.path());
    return distilla::testing::tree_bytes(dir / ("stage_" + std::to_string(stage)));
}

// 4. Earlier stages are frozen by later ones and checkpoints replay exactly.
Outcome conditioning_freeze() {
    Outcome o;
    const auto data = make_blobs_dataset(40, 4, 40, 8, 0.3);
    const auto full = pdd::run_pdd(lineage_config(data, 3), data);
    const auto one = pdd::run_pdd(lineage_config(data, 1), data);
    const auto two = pdd::run_pdd(lineage_config(data, 2), data);
    o.check(stage_bytes(full.sequence, 1) == stage_bytes(one.sequence, 1), "stage 1 bytes unchanged by stages 2-3");
    o.check(stage_bytes(full.sequence, 1) == stage_bytes(two.sequence, 1), "stage 1 bytes unchanged by stage 3");
    o.check(stage_bytes(full.sequence, 2) == stage_bytes(two.sequence, 2), "stage 2 bytes unchanged by stage 3");

    distilla::testing::TempDir dir;
    pdd::save_checkpoints(full, dir.path());
    const auto stored = pdd::load_checkpoints(dir.path());
    const auto cfg = lineage_config(data, 3);
    std::size_t replays = 0;
    for (std::size_t i = 1; i <= 3; ++i) {
        const auto union_i = union_stages(full.sequence, i);
        for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
            auto replay = pdd::transition_train(cfg.spec, stored[i - 1][k], union_i.view(),
                                                pdd::transition_config(cfg.transition, full.sequence.stages[i - 1], i, k));
            replay.round_to_f32();
            o.check(replay.values == stored[i][k].values,
                    "replay of stage " + std::to_string(i + 1) + " start, checkpoint " + std::to_string(k));
            ++replays;
        }
    }
    o.note("P=3, IPC 2, " + std::to_string(replays) + " checkpoint replays byte-exact");
    return o;
}

// 5. With one stage the three pipelines train identical parameters.
Outcome pipeline_coincidence() {
    Outcome o;
    const auto data = make_blobs_dataset(50, 4, 30, 8, 0.3);
    StageSequence seq;
    seq.dataset_name = data.name();
    seq.class_count = 4;
    seq.shape = data.shape();
    auto stage = init_synthetic_set(data, 3, InitMode::real_sample, 5, 1);
    stage.finalize();
    seq.stages.push_back(stage);
    const nn::ModelSpec spec{nn::Family::convnet, 2, 4, nn::Norm::instance, data.shape(), 4};
    const std::vector<std::size_t> schedule{20};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        nn::TrainConfig cfg;
        cfg.batch_size = 5;
        cfg.seed = seed;
        const auto u = eval::train_phased(seq, spec, cfg, eval::Mode::union_all, schedule).params;
        const auto s = eval::train_phased(seq, spec, cfg, eval::Mode::sequential, schedule).params;
        const auto p = eval::train_phased(seq, spec, cfg, eval::Mode::progressive, schedule).params;
        o.check(u.values == p.values && s.values == p.values, "seed " + std::to_string(seed));
    }
    o.note("5 seeds, parameters identical");
    return o;
}

// 6. Desk-scale ordering on blobs.
struct DeskSetup {
    double noise = 0.5;
    std::size_t outer_iterations = 30;
    std::size_t inner_steps = 20;
    double outer_lr = 0.1;
    double student_lr = 0.05;
    std::size_t checkpoints = 10;
    std::size_t transition_epochs = 20;
};

Outcome desk_ordering() {
    Outcome o;
    const DeskSetup d;
    const auto train = make_blobs_dataset(100, 4, 500, 8, d.noise);
    const auto test = make_blobs_dataset(101, 4, 200, 8, d.noise);
    pdd::PddConfig cfg;
    cfg.stages = 3;
    cfg.per_stage_ipc = 2;
    cfg.base = pdd::BaseMethod::gradmatch_real;
    cfg.spec = nn::ModelSpec{nn::Family::convnet, 2, 8, nn::Norm::instance, train.shape(), 4};
    cfg.budget.outer_iterations = d.outer_iterations;
    cfg.budget.inner_steps = d.inner_steps;
    cfg.budget.outer_lr = d.outer_lr;
    cfg.budget.student_lr = d.student_lr;
    cfg.transition.epochs = d.transition_epochs;
    cfg.transition.batch_size = 8;
    cfg.seeds = eval::seed_list(d.checkpoints);
    const auto result = pdd::run_pdd(cfg, train);

    nn::TrainConfig eval_cfg;  // lr 0.01, momentum 0.9, weight decay 5e-4
    const auto schedule = eval::default_schedule(cfg.stages);
    const auto seeds = eval::seed_list(5, 1000);
    const std::vector<eval::Mode> modes{eval::Mode::sequential, eval::Mode::progressive};
    const auto reports = eval::evaluate_sequence(result.sequence, cfg.spec, eval_cfg, modes, seeds, schedule, test);
    const auto random = eval::random_selection_baseline(train, cfg.stages * cfg.per_stage_ipc, cfg.spec, eval_cfg,
                                                        seeds, eval::union_epochs(schedule), test);
    const double s = 100.0 * reports[0].mean, p = 100.0 * reports[1].mean, r = 100.0 * random.mean;
    o.check(p >= s - 0.5, "(a) progressive >= sequential - 0.5");
    o.check(p - r >= 5.0, "(b) progressive beats random selection by 5 points");
    o.note("noise " + fmt("%.2f", d.noise) + ": P " + fmt("%.2f", p) + ", S " + fmt("%.2f", s) + ", R " +
           fmt("%.2f", r) + " (5 seeds)");
    return o;
}

// 7. Forgetting counts against a brute-force recount; partition properties.
Outcome forgetting_oracle() {
    Outcome o;
    std::size_t histories = 0;
    for (std::uint64_t seed = 0; histories < 1000; ++seed) {
        Rng rng(seed);
        const std::size_t examples = 40, length = 1 + seed % 60;
        const double bias = rng.uniform(0.2, 0.8);
        std::vector<std::vector<bool>> h(examples, std::vector<bool>(length));
        for (auto& row : h)
            for (std::size_t t = 0; t < length; ++t) row[t] = rng.uniform() < bias;
        curriculum::ForgettingTracker tracker(examples, false);
        std::vector<bool> column(examples);
        for (std::size_t t = 0; t < length; ++t) {
            for (std::size_t i = 0; i < examples; ++i) column[i] = h[i][t];
            tracker.observe(column);
        }
        for (std::size_t i = 0; i < examples; ++i) {
            std::size_t n = 0;
            for (std::size_t t = 1; t < length; ++t) n += (h[i][t - 1] && !h[i][t]) ? 1 : 0;
            if (tracker.counts()[i] != n) o.check(false, "count of history " + std::to_string(histories + i));
        }
        histories += examples;
    }

    Rng rng(77);
    std::vector<std::size_t> counts(600);
    for (auto& c : counts) c = rng.below(30);
    for (std::size_t P = 1; P <= 8; ++P) {
        const auto part = curriculum::partition_by_forgetting(counts, P);
        std::set<std::size_t> seen;
        std::size_t total = 0;
        for (std::size_t b = 0; b < P; ++b) {
            for (const auto i : part.bins[b]) {
                o.check(counts[i] >= 3 * b && counts[i] < 3 * (b + 1), "bin width 3");
                seen.insert(i);
            }
            total += part.bins[b].size();
        }
        std::set<std::size_t> expected_excluded;
        for (std::size_t i = 0; i < counts.size(); ++i)
            if (counts[i] >= 3 * P) expected_excluded.insert(i);
        o.check(std::set<std::size_t>(part.excluded.begin(), part.excluded.end()) == expected_excluded,
                "excluded are exactly count >= 3P");
        for (const auto i : part.excluded) seen.insert(i);
        o.check(seen.size() == total + part.excluded.size() && seen.size() == counts.size(), "disjoint cover");
    }
    o.note(std::to_string(histories) + " histories recounted, partitions for P=1..8");
    return o;
}

// 8. Save -> load -> save is byte-identical for stage sequences and expert stores.
Outcome serialization() {
    Outcome o;
    const auto data = make_blobs_dataset(60, 3, 20, 6, 0.3);
    StageSequence seq;
    seq.dataset_name = data.name();
    seq.class_count = 3;
    seq.shape = data.shape();
    seq.config_digest = "0123abcd";
    const double rates[] = {0.0123, 0.00731, 0.1};
    for (std::size_t i = 1; i <= 3; ++i) {
        auto s = init_synthetic_set(data, 2, i == 2 ? InitMode::noise : InitMode::real_sample, 9, i);
        s.learned_lr = rates[i - 1];
        s.finalize();
        seq.stages.push_back(std::move(s));
    }
    distilla::testing::TempDir dir;
    save_stage_sequence(seq, dir / "a");
    const auto loaded = load_stage_sequence(dir / "a");
    save_stage_sequence(loaded, dir / "b");
    o.check(distilla::testing::tree_bytes(dir / "a") == distilla::testing::tree_bytes(dir / "b"),
            "stage sequence bytes");
    for (std::size_t i = 0; i < 3; ++i)
        o.check(loaded.stages[i].learned_lr == seq.stages[i].learned_lr, "learned_lr of stage " + std::to_string(i + 1));

    const nn::ModelSpec spec{nn::Family::convnet, 1, 3, nn::Norm::instance, data.shape(), 3};
    const std::vector<nn::ParameterVector> starts{nn::init_params(spec, 1), nn::init_params(spec, 2)};
    nn::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 10;
    const auto store = distill::generate_expert_trajectories(spec, data, starts, cfg, 2, 2);
    distill::save_expert_store(store, dir / "c");
    const auto store_loaded = distill::load_expert_store(dir / "c");
    distill::save_expert_store(store_loaded, dir / "d");
    o.check(distilla::testing::tree_bytes(dir / "c") == distilla::testing::tree_bytes(dir / "d"),
            "expert store bytes");
    o.note("3 stages with learned rates, 2 experts x " + std::to_string(store.experts[0].snapshots.size()) +
           " snapshots");
    return o;
}

// 9. Instrumented batches: distinct synthetic images exposed per progressive phase.
Outcome exposure_accounting() {
    Outcome o;
    const auto data = make_blobs_dataset(70, 4, 20, 8, 0.3);
    const std::size_t P = 4, ipc = 3, C = 4;
    StageSequence seq;
    seq.dataset_name = data.name();
    seq.class_count = C;
    seq.shape = data.shape();
    for (std::size_t i = 1; i <= P; ++i) {
        auto s = init_synthetic_set(data, ipc, InitMode::real_sample, 3, i);
        s.finalize();
        seq.stages.push_back(std::move(s));
    }
    std::map<std::size_t, std::set<std::pair<std::size_t, std::size_t>>> seen;
    const eval::BatchObserver observer = [&](std::size_t phase, const TrainingData& batch_data,
                                             std::span<const std::size_t> batch) {
        for (const auto i : batch) seen[phase].insert({batch_data.sources[i].stage, batch_data.sources[i].index});
    };
    const nn::ModelSpec spec{nn::Family::convnet, 1, 3, nn::Norm::instance, data.shape(), C};
    nn::TrainConfig cfg;
    cfg.batch_size = 7;
    const std::vector<std::size_t> schedule(P, 2);
    const auto run = eval::train_phased(seq, spec, cfg, eval::Mode::progressive, schedule, &observer);
    for (std::size_t i = 1; i <= P; ++i) {
        o.check(seen[i].size() == i * ipc * C, "phase " + std::to_string(i) + " distinct images");
        o.check(run.phases[i - 1].images == i * ipc * C, "phase " + std::to_string(i) + " recorded size");
        for (const auto& [stage, index] : seen[i]) o.check(stage <= i, "phase " + std::to_string(i) + " stage bound");
    }
    o.check(seen[P].size() == P * ipc * C, "final interval exposes k = P*ipc*C");
    o.note("P=4, ipc 3, C=4: exposures 12/24/36/48");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient oracles", gradient_oracles},
        {"trajectory-loss anchors", trajectory_anchors},
        {"schedule identities", schedule_identities},
        {"conditioning freeze and lineage", conditioning_freeze},
        {"pipeline coincidence", pipeline_coincidence},
        {"desk-scale ordering", desk_ordering},
        {"forgetting oracle", forgetting_oracle},
        {"serialization", serialization},
        {"exposure accounting", exposure_accounting},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::stoul(argv[i])));

    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (!selected.empty() && !selected.contains(k + 1)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criteria[k].second();
        } catch (const std::exception& e) {
            outcome.check(false, std::string("exception: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += outcome.pass ? 0 : 1;
        std::printf("criterion %zu %s: %s (%s; %.1f s)\n", k + 1, criteria[k].first.c_str(),
                    outcome.pass ? "PASS" : "FAIL", outcome.detail.c_str(), seconds);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
