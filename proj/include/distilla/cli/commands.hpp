// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "distilla/cli/config.hpp"

namespace distilla::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Command-line overrides shared by the subcommands.
struct CliOptions {
    std::optional<std::filesystem::path> seq;  // stage sequence directory; default <output>/sequence
    std::optional<eval::Mode> mode;
    std::optional<std::string> arch;
    std::optional<std::size_t> seeds;
    std::optional<std::size_t> jobs;
};

// Each command writes its artifacts under output_dir(config) and a short log to `out`.
void run_distill(const ExperimentConfig& config, const CliOptions& options, std::ostream& out);
void run_experts(const ExperimentConfig& config, const CliOptions& options, std::ostream& out);
void run_eval(const ExperimentConfig& config, const CliOptions& options, std::ostream& out);
void run_forgetting(const ExperimentConfig& config, const CliOptions& options, std::ostream& out);
void run_continual_cmd(const ExperimentConfig& config, const CliOptions& options, std::ostream& out);
void run_plot(const ExperimentConfig& config, const CliOptions& options, std::ostream& out);

/// Entry point: args excludes the program name. Returns 0, kExitConfig for
/// usage and configuration problems, kExitRuntime for everything else.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace distilla::cli
