// SPDX-License-Identifier: Apache-2.0
#include "distilla/eval/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "distilla/core/error.hpp"
#include "distilla/core/parallel.hpp"
#include "distilla/core/rng.hpp"
#include "distilla/pdd/pdd.hpp"

namespace distilla::eval {

namespace fs = std::filesystem;

std::string_view to_string(Mode mode) noexcept {
    switch (mode) {
        case Mode::union_all: return "U";
        case Mode::sequential: return "S";
        case Mode::progressive: return "P";
    }
    return "P";
}

Mode parse_mode(std::string_view text) {
    if (text == "U") return Mode::union_all;
    if (text == "S") return Mode::sequential;
    if (text == "P") return Mode::progressive;
    throw Error(Errc::invalid_argument, "unknown evaluation mode '" + std::string(text) + "' (expected U, S or P)");
}

std::size_t union_epochs(std::span<const std::size_t> epoch_schedule) {
    require(!epoch_schedule.empty(), Errc::invalid_argument, "epoch schedule is empty");
    std::size_t weighted = 0;
    for (std::size_t i = 0; i < epoch_schedule.size(); ++i) weighted += (i + 1) * epoch_schedule[i];
    return weighted / epoch_schedule.size();
}

std::vector<std::size_t> default_schedule(std::size_t stages, double multiplier) {
    return std::vector<std::size_t>(stages, pdd::schedule_stage_epochs(stages, multiplier));
}

namespace {

using PhaseCallback = std::function<void(const PhaseRecord&, const nn::ParameterVector&)>;

struct Phase {
    TrainingData data;
    std::size_t epochs = 0;
    double lr = 0.0;
};

std::vector<Phase> plan_phases(const StageSequence& seq, const nn::TrainConfig& cfg, Mode mode,
                               std::span<const std::size_t> schedule, std::size_t union_total) {
    const std::size_t P = seq.stage_count();
    require(P >= 1, Errc::invalid_argument, "sequence has no stages");
    const auto lr_of = [&](std::size_t stage) { return seq.stages[stage - 1].learned_lr.value_or(cfg.lr); };
    std::vector<Phase> phases;
    if (mode == Mode::union_all) {
        phases.push_back({union_stages(seq, P), union_total, lr_of(P)});
        return phases;
    }
    require(schedule.size() == P, Errc::invalid_argument,
            "epoch schedule has " + std::to_string(schedule.size()) + " entries for " + std::to_string(P) + " stages");
    for (std::size_t i = 1; i <= P; ++i) {
        TrainingData data;
        if (mode == Mode::progressive) {
            data = union_stages(seq, i);
        } else {
            data = as_training_data(seq.stages[i - 1]);
            for (auto& src : data.sources) src.stage = i;
        }
        phases.push_back({std::move(data), schedule[i - 1], lr_of(i)});
    }
    return phases;
}

PhasedRun run_phases(const std::vector<Phase>& phases, const nn::ModelSpec& spec, const nn::TrainConfig& cfg,
                     const BatchObserver* observer, const PhaseCallback& after_phase) {
    PhasedRun run;
    run.params = nn::init_params(spec, cfg.seed);
    for (std::size_t p = 0; p < phases.size(); ++p) {
        const Phase& phase = phases[p];
        nn::TrainConfig c = cfg;
        c.epochs = phase.epochs;
        c.lr = phase.lr;
        c.seed = derive_seed(cfg.seed, stream::eval, p + 1);
        c.snapshot_every = 0;
        nn::TrainHooks hooks;
        if (observer != nullptr && *observer)
            hooks.on_batch = [&](std::size_t, std::span<const std::size_t> batch) { (*observer)(p + 1, phase.data, batch); };
        run.params = nn::train(spec, run.params, phase.data.view(), c, &hooks).params;
        run.phases.push_back({p + 1, phase.data.size(), phase.epochs, phase.lr});
        if (after_phase) after_phase(run.phases.back(), run.params);
    }
    return run;
}

std::size_t union_total_for(Mode mode, std::span<const std::size_t> schedule, std::size_t stages) {
    if (mode != Mode::union_all) return 0;
    require(schedule.size() == stages, Errc::invalid_argument, "epoch schedule length does not match the stage count");
    return union_epochs(schedule);
}

}  // namespace

PhasedRun train_phased(const StageSequence& seq, const nn::ModelSpec& spec, const nn::TrainConfig& cfg, Mode mode,
                       std::span<const std::size_t> epoch_schedule, const BatchObserver* observer) {
    const auto phases =
        plan_phases(seq, cfg, mode, epoch_schedule, union_total_for(mode, epoch_schedule, seq.stage_count()));
    return run_phases(phases, spec, cfg, observer, {});
}

nn::ParameterVector train_progressive(const StageSequence& seq, const nn::ModelSpec& spec,
                                      const nn::TrainConfig& cfg, std::span<const std::size_t> epoch_schedule) {
    return train_phased(seq, spec, cfg, Mode::progressive, epoch_schedule).params;
}

nn::ParameterVector train_sequential(const StageSequence& seq, const nn::ModelSpec& spec,
                                     const nn::TrainConfig& cfg, std::span<const std::size_t> epoch_schedule) {
    return train_phased(seq, spec, cfg, Mode::sequential, epoch_schedule).params;
}

nn::ParameterVector train_union(const StageSequence& seq, const nn::ModelSpec& spec, const nn::TrainConfig& cfg,
                                std::size_t total_epochs) {
    return run_phases(plan_phases(seq, cfg, Mode::union_all, {}, total_epochs), spec, cfg, nullptr, {}).params;
}

std::pair<double, double> summarize(std::span<const double> values) {
    require(!values.empty(), Errc::invalid_argument, "no values to summarize");
    double sum = 0.0;
    for (const double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (const double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

void EvalReport::validate() const {
    require(!seeds.empty() && seeds.size() == accuracies.size(), Errc::consistency,
            "report needs one accuracy per seed");
    const auto [m, s] = summarize(accuracies);
    require(m == mean && s == std, Errc::consistency, "report statistics do not match its accuracies");
}

Json to_json(const EvalReport& r) {
    Json phases = Json::array();
    for (const auto& p : r.phase_schedule)
        phases.push_back({{"phase", p.phase}, {"images", p.images}, {"epochs", p.epochs}, {"lr", p.lr}});
    return {{"mode", r.mode},       {"spec", r.spec_name}, {"seeds", r.seeds},
            {"accuracies", r.accuracies}, {"mean", r.mean}, {"std", r.std},
            {"phase_schedule", phases},   {"config_digest", r.config_digest}};
}

EvalReport report_from_json(const Json& j) {
    EvalReport r;
    try {
        r.mode = j.at("mode").get<std::string>();
        r.spec_name = j.at("spec").get<std::string>();
        r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        r.accuracies = j.at("accuracies").get<std::vector<double>>();
        r.mean = j.at("mean").get<double>();
        r.std = j.at("std").get<double>();
        r.config_digest = j.at("config_digest").get<std::string>();
        for (const auto& p : j.at("phase_schedule"))
            r.phase_schedule.push_back({p.at("phase").get<std::size_t>(), p.at("images").get<std::size_t>(),
                                        p.at("epochs").get<std::size_t>(), p.at("lr").get<double>()});
    } catch (const Json::exception& e) {
        throw Error(Errc::format, std::string("malformed report: ") + e.what());
    }
    r.validate();
    return r;
}

void write_reports(const fs::path& path, std::span<const EvalReport> reports, bool append) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
    require(static_cast<bool>(out), Errc::io, "cannot write " + path.string());
    for (const auto& r : reports) out << to_json(r).dump() << '\n';
}

std::vector<EvalReport> read_reports(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::io, "cannot read " + path.string());
    std::vector<EvalReport> out;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        try {
            out.push_back(report_from_json(Json::parse(line)));
        } catch (const Json::parse_error& e) {
            throw Error(Errc::format, std::string("malformed report line: ") + e.what());
        }
    }
    return out;
}

std::vector<std::uint64_t> seed_list(std::size_t n, std::uint64_t base) {
    std::vector<std::uint64_t> seeds(n);
    std::iota(seeds.begin(), seeds.end(), base);
    return seeds;
}

namespace {

EvalReport finish_report(std::string mode, const nn::ModelSpec& spec, std::span<const std::uint64_t> seeds,
                         std::vector<double> accuracies, std::vector<PhaseRecord> phases, std::string digest) {
    EvalReport r;
    r.mode = std::move(mode);
    r.spec_name = spec.name();
    r.seeds.assign(seeds.begin(), seeds.end());
    r.accuracies = std::move(accuracies);
    std::tie(r.mean, r.std) = summarize(r.accuracies);
    r.phase_schedule = std::move(phases);
    r.config_digest = std::move(digest);
    return r;
}

void require_fit(const StageSequence& seq, const nn::ModelSpec& spec) {
    require(spec.input == seq.shape && spec.class_count == seq.class_count, Errc::shape_mismatch,
            "model " + spec.name() + " does not fit the sequence images");
}

}  // namespace

std::vector<EvalReport> evaluate_sequence(const StageSequence& seq, const nn::ModelSpec& spec,
                                          const nn::TrainConfig& cfg, std::span<const Mode> modes,
                                          std::span<const std::uint64_t> seeds,
                                          std::span<const std::size_t> epoch_schedule, const LabeledDataset& test,
                                          std::size_t jobs) {
    require(!seeds.empty(), Errc::invalid_argument, "at least one evaluation seed is required");
    require_fit(seq, spec);
    std::vector<EvalReport> reports;
    for (const Mode mode : modes) {
        const auto phases =
            plan_phases(seq, cfg, mode, epoch_schedule, union_total_for(mode, epoch_schedule, seq.stage_count()));
        std::vector<double> acc(seeds.size());
        std::vector<PhaseRecord> records;
        parallel_for(seeds.size(), jobs, [&](std::size_t s) {
            nn::TrainConfig c = cfg;
            c.seed = seeds[s];
            const auto run = run_phases(phases, spec, c, nullptr, {});
            acc[s] = nn::evaluate_accuracy(spec, run.params, test.view());
            if (s == 0) records = run.phases;
        });
        reports.push_back(finish_report(std::string(to_string(mode)), spec, seeds, std::move(acc), std::move(records),
                                        seq.config_digest));
    }
    return reports;
}

EvalReport cross_arch_eval(const StageSequence& seq, const nn::ModelSpec& alt_spec, const nn::TrainConfig& cfg,
                           std::span<const std::uint64_t> seeds, std::span<const std::size_t> epoch_schedule,
                           const LabeledDataset& test, std::size_t jobs) {
    const Mode modes[] = {Mode::progressive};
    return evaluate_sequence(seq, alt_spec, cfg, modes, seeds, epoch_schedule, test, jobs).front();
}

EvalReport random_selection_baseline(const LabeledDataset& train, std::size_t ipc, const nn::ModelSpec& spec,
                                     const nn::TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                                     std::size_t epochs, const LabeledDataset& test, std::size_t jobs) {
    require(!seeds.empty(), Errc::invalid_argument, "at least one evaluation seed is required");
    std::vector<double> acc(seeds.size());
    std::size_t images = 0;
    parallel_for(seeds.size(), jobs, [&](std::size_t s) {
        const auto pick = init_synthetic_set(train, ipc, InitMode::real_sample, derive_seed(seeds[s], stream::eval), 1);
        nn::TrainConfig c = cfg;
        c.seed = derive_seed(seeds[s], stream::eval, 1);
        c.epochs = epochs;
        c.snapshot_every = 0;
        const auto params = nn::train(spec, nn::init_params(spec, seeds[s]), pick.view(), c).params;
        acc[s] = nn::evaluate_accuracy(spec, params, test.view());
        if (s == 0) images = pick.size();
    });
    return finish_report("R", spec, seeds, std::move(acc), {{1, images, epochs, cfg.lr}}, {});
}

std::vector<CurvePoint> accuracy_curve(const StageSequence& seq, const nn::ModelSpec& spec, const nn::TrainConfig& cfg,
                                       Mode mode, std::span<const std::uint64_t> seeds,
                                       std::span<const std::size_t> epoch_schedule, const LabeledDataset& test,
                                       std::size_t jobs) {
    require(!seeds.empty(), Errc::invalid_argument, "at least one evaluation seed is required");
    require_fit(seq, spec);
    const auto phases =
        plan_phases(seq, cfg, mode, epoch_schedule, union_total_for(mode, epoch_schedule, seq.stage_count()));
    std::vector<std::vector<double>> acc(phases.size(), std::vector<double>(seeds.size()));
    parallel_for(seeds.size(), jobs, [&](std::size_t s) {
        nn::TrainConfig c = cfg;
        c.seed = seeds[s];
        run_phases(phases, spec, c, nullptr, [&](const PhaseRecord& rec, const nn::ParameterVector& params) {
            acc[rec.phase - 1][s] = nn::evaluate_accuracy(spec, params, test.view());
        });
    });
    std::vector<CurvePoint> curve;
    for (std::size_t p = 0; p < phases.size(); ++p) {
        const auto [mean, sd] = summarize(acc[p]);
        curve.push_back({p + 1, phases[p].data.size(), mean, sd});
    }
    return curve;
}

void write_curve_csv(const fs::path& path, Mode mode, std::span<const CurvePoint> curve) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), Errc::io, "cannot write " + path.string());
    out << "mode,phase,images,mean,std\n";
    char line[128];
    for (const auto& p : curve) {
        std::snprintf(line, sizeof line, "%s,%zu,%zu,%.6f,%.6f\n", std::string(to_string(mode)).c_str(), p.phase,
                      p.images, p.mean, p.std);
        out << line;
    }
}

}  // namespace distilla::eval
