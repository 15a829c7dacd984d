// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "mopd/cli/run_config.hpp"

namespace mopd::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitPrecondition = 3,
    kExitBandUnreached = 4,
};

/// Files written under the output directory:
///   pretrain          checkpoint.bin, pretrain_metrics.csv, config.json
///   train             checkpoint.bin, metrics.csv, timings.csv, eval.csv,
///                     rollouts.jsonl (unless disabled), config.json
///   eval              eval.csv
///   analyze-signal    signal.csv, signal_scores.csv
///   analyze-diversity diversity.csv, diversity_summary.csv
/// Each returns an exit code; errors surface as ConfigError,
/// PreconditionError or CheckpointError.
int cmd_pretrain(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);
int cmd_train(const RunConfig& config, const std::filesystem::path& checkpoint,
              const std::filesystem::path& out, std::ostream& log);
int cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint,
             const std::filesystem::path& out, std::ostream& log);
int cmd_analyze_signal(const RunConfig& config, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& out, std::ostream& log);
int cmd_analyze_diversity(const RunConfig& config, const std::filesystem::path& checkpoint,
                          const std::filesystem::path& out, std::ostream& log);

struct CommandLine {
    std::string command;
    std::filesystem::path config;
    std::filesystem::path checkpoint;
    std::filesystem::path out; // empty: config out_dir
    std::optional<std::uint64_t> seed;
    std::optional<std::string> method;
};

/// Loads and overrides the config, dispatches, and maps exceptions to exit codes.
int run_command(const CommandLine& cl, std::ostream& log, std::ostream& err);

} // namespace mopd::cli
