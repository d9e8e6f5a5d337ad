// SPDX-License-Identifier: Apache-2.0
#include "distilla/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "distilla/continual/continual.hpp"
#include "distilla/core/error.hpp"
#include "distilla/curriculum/forgetting.hpp"
#include "distilla/distill/trajectory.hpp"

namespace fs = std::filesystem;

namespace distilla::cli {
namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::size_t jobs_of(const ExperimentConfig& config, const CliOptions& options) {
    const std::size_t jobs = options.jobs.value_or(config.pdd.jobs);
    require(jobs >= 1, Errc::config, "--jobs must be at least 1");
    return jobs;
}

nn::ModelSpec eval_spec(const ExperimentConfig& config, const CliOptions& options) {
    return options.arch ? architecture_preset(*options.arch, config.pdd.spec) : config.pdd.spec;
}

std::vector<std::uint64_t> eval_seeds(const ExperimentConfig& config, const CliOptions& options) {
    const std::size_t n = options.seeds.value_or(config.eval.seeds);
    require(n >= 1, Errc::config, "--seeds must be at least 1");
    return eval::seed_list(n, config.eval.seed_base);
}

fs::path sequence_dir(const ExperimentConfig& config, const CliOptions& options) {
    return options.seq.value_or(output_dir(config) / "sequence");
}

void print_report(std::ostream& out, const eval::EvalReport& r) {
    out << r.mode << " " << r.spec_name << ": " << fixed(100.0 * r.mean, 2) << " +- " << fixed(100.0 * r.std, 2)
        << " over " << r.seeds.size() << " seeds\n";
}

}  // namespace

void run_distill(const ExperimentConfig& config, const CliOptions& options, std::ostream& out) {
    const auto data = load_datasets(config.dataset);
    auto pdd_config = config.pdd;
    pdd_config.jobs = jobs_of(config, options);
    const auto dir = output_dir(config);

    pdd::PddResult result;
    if (config.curriculum) {
        const auto path = config.curriculum->is_absolute() ? *config.curriculum : dir / *config.curriculum;
        const auto record = curriculum::load_forgetting(path);
        require(record.size() == data.train.size(), Errc::consistency,
                "forgetting record does not match the training set size");
        const auto part = curriculum::partition_by_forgetting(record, pdd_config.stages, config.bin_width);
        out << "curriculum: " << fixed(100.0 * part.used_fraction, 1) << "% of the training set in "
            << pdd_config.stages << " bins\n";
        result = curriculum::run_pdd_curriculum(pdd_config, data.train, record, config.bin_width);
    } else {
        result = pdd::run_pdd(pdd_config, data.train);
    }
    result.sequence.config_digest = config.digest;
    save_stage_sequence(result.sequence, dir / "sequence");
    pdd::save_checkpoints(result, dir);
    for (const auto& stage : result.sequence.stages) {
        out << "stage " << stage.stage_index << ": " << stage.size() << " images";
        if (stage.learned_lr) out << ", learned lr " << fixed(*stage.learned_lr, 6);
        out << "\n";
    }
    out << "wrote " << (dir / "sequence").string() << "\n";
}

void run_experts(const ExperimentConfig& config, const CliOptions& options, std::ostream& out) {
    const auto data = load_datasets(config.dataset);
    std::vector<nn::ParameterVector> starts;
    for (const auto seed : config.pdd.seeds) {
        starts.push_back(nn::init_params(config.pdd.spec, seed));
        starts.back().round_to_f32();
    }
    config.pdd.expert.validate();
    const auto store = distill::generate_expert_trajectories(
        config.pdd.spec, data.train, starts, config.pdd.expert, starts.size(), config.pdd.expert_snapshot_every, 1,
        distill::ExpertOrigin::fresh_init, jobs_of(config, options));
    const auto dir = output_dir(config);
    save_expert_store(store, dir);
    out << "wrote " << store.experts.size() << " expert trajectories with "
        << store.experts.front().snapshots.size() << " snapshots each to " << (dir / "experts").string() << "\n";
}

void run_eval(const ExperimentConfig& config, const CliOptions& options, std::ostream& out) {
    const auto seq = load_stage_sequence(sequence_dir(config, options));
    const auto data = load_datasets(config.dataset);
    const auto spec = eval_spec(config, options);
    std::vector<eval::Mode> modes = config.eval.modes;
    if (options.mode) modes = {*options.mode};
    const auto schedule = eval_schedule(config);
    require(schedule.size() == seq.stage_count(), Errc::consistency,
            "sequence has " + std::to_string(seq.stage_count()) + " stages but the schedule has " +
                std::to_string(schedule.size()));
    const auto reports = eval::evaluate_sequence(seq, spec, config.eval.train, modes, eval_seeds(config, options),
                                                 schedule, data.test, jobs_of(config, options));
    eval::write_reports(output_dir(config) / "reports.jsonl", reports, true);
    for (const auto& r : reports) print_report(out, r);
}

void run_forgetting(const ExperimentConfig& config, const CliOptions& options, std::ostream& out) {
    (void)options;
    const auto data = load_datasets(config.dataset);
    const auto& train_cfg = config.forgetting.train;
    const std::size_t every =
        config.forgetting.eval_every.value_or(curriculum::steps_per_epoch(data.train.size(), train_cfg.batch_size));
    const auto record = curriculum::compute_forgetting_scores(config.pdd.spec, data.train, train_cfg, every);
    const auto path = output_dir(config) / "forgetting.json";
    curriculum::save_forgetting(record, path);
    const auto part = curriculum::partition_by_forgetting(record, config.pdd.stages, config.bin_width);
    std::size_t never = 0;
    for (const bool learned : record.ever_learned) never += learned ? 0 : 1;
    out << record.size() << " examples, " << never << " never learned\n";
    for (std::size_t b = 0; b < part.bins.size(); ++b)
        out << "bin " << b + 1 << ": " << part.bins[b].size() << " examples\n";
    out << "excluded: " << part.excluded.size() << "\nwrote " << path.string() << "\n";
}

void run_continual_cmd(const ExperimentConfig& config, const CliOptions& options, std::ostream& out) {
    const auto data = load_datasets(config.dataset);
    continual::ContinualConfig cc;
    cc.pdd = config.pdd;
    cc.pdd.jobs = jobs_of(config, options);
    cc.phases = config.continual_phases;
    cc.eval = config.eval.train;
    cc.epoch_schedule = eval_schedule(config);
    cc.eval_seeds = eval_seeds(config, options);
    cc.jobs = cc.pdd.jobs;
    const auto results = continual::run_continual(cc, data.train, data.test);

    const auto path = output_dir(config) / "continual.jsonl";
    fs::create_directories(path.parent_path());
    std::ofstream file(path, std::ios::binary | std::ios::app);
    require(static_cast<bool>(file), Errc::io, "cannot write " + path.string());
    for (const auto& r : results) {
        const Json line{{"phase", r.phase},
                        {"classes_seen", r.classes_seen},
                        {"memory_images", r.memory_images},
                        {"report", eval::to_json(r.report)}};
        file << line.dump() << '\n';
        out << "phase " << r.phase << ": " << r.classes_seen.size() << " classes, " << r.memory_images
            << " images, accuracy " << fixed(100.0 * r.report.mean, 2) << " +- " << fixed(100.0 * r.report.std, 2)
            << "\n";
    }
    out << "wrote " << path.string() << "\n";
}

void run_plot(const ExperimentConfig& config, const CliOptions& options, std::ostream& out) {
    const auto seq = load_stage_sequence(sequence_dir(config, options));
    const auto data = load_datasets(config.dataset);
    const auto mode = options.mode.value_or(eval::Mode::progressive);
    const auto curve = eval::accuracy_curve(seq, eval_spec(config, options), config.eval.train, mode,
                                            eval_seeds(config, options), eval_schedule(config), data.test,
                                            jobs_of(config, options));
    const auto path = output_dir(config) / "curve.csv";
    eval::write_curve_csv(path, mode, curve);
    for (const auto& p : curve)
        out << "phase " << p.phase << " (" << p.images << " images): " << fixed(100.0 * p.mean, 2) << "\n";
    out << "wrote " << path.string() << "\n";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Progressive dataset distillation", "distilla"};
    app.require_subcommand(1);
    std::string config_path;
    CliOptions options;
    std::string seq, mode, arch;
    std::size_t seeds = 0, jobs = 0;

    using Runner = void (*)(const ExperimentConfig&, const CliOptions&, std::ostream&);
    struct Command {
        const char* name;
        const char* help;
        Runner run;
    };
    const Command commands[] = {
        {"distill", "distill a stage sequence", run_distill},
        {"experts", "generate expert trajectories from fresh initializations", run_experts},
        {"eval", "evaluate a stage sequence (appends to reports.jsonl)", run_eval},
        {"forgetting", "compute forgetting scores", run_forgetting},
        {"continual", "class-incremental continual learning (appends to continual.jsonl)", run_continual_cmd},
        {"plot", "accuracy after every phase (curve.csv)", run_plot},
    };
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--jobs", jobs, "worker threads");
        const std::string name = c.name;
        if (name == "eval" || name == "plot") {
            sub->add_option("--seq", seq, "stage sequence directory");
            sub->add_option("--mode", mode, "U, S or P");
            sub->add_option("--arch", arch, "convnet, convnet-bn or mlp");
        }
        if (name == "eval" || name == "plot" || name == "continual")
            sub->add_option("--seeds", seeds, "number of evaluation seeds");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    const Command* chosen = nullptr;
    for (const auto& c : commands)
        if (app.got_subcommand(c.name)) chosen = &c;

    try {
        if (!seq.empty()) options.seq = seq;
        if (!arch.empty()) options.arch = arch;
        if (!mode.empty()) {
            try {
                options.mode = eval::parse_mode(mode);
            } catch (const Error&) {
                throw Error(Errc::config, "--mode must be U, S or P");
            }
        }
        const auto* sub = app.get_subcommand(chosen->name);
        const auto given = [&](const char* flag) {
            const auto* opt = sub->get_option_no_throw(flag);
            return opt != nullptr && opt->count() > 0;
        };
        if (given("--seeds")) options.seeds = seeds;
        if (given("--jobs")) options.jobs = jobs;
        require(options.seeds.value_or(1) >= 1, Errc::config, "--seeds must be at least 1");
        require(options.jobs.value_or(1) >= 1, Errc::config, "--jobs must be at least 1");
        const auto config = load_config(config_path);
        if (options.arch) architecture_preset(*options.arch, config.pdd.spec).validate();
        chosen->run(config, options, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.code() == Errc::config ? kExitConfig : kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace distilla::cli
