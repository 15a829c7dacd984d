// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mopd/distill/train_step.hpp"
#include "mopd/model/policy_model.hpp"
#include "mopd/peercontext/peer_context.hpp"
#include "mopd/tasks/tasks.hpp"

namespace mopd::cli {

/// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inputs that do not meet a command's preconditions (exit code 3).
class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PretrainSettings {
    std::size_t max_steps = 2000;
    std::size_t batch_size = 32;
    double learning_rate = 3e-3;
    std::uint64_t warmup_steps = 20;
    std::size_t eval_every = 25;
    std::size_t eval_prompts = 128;
    double band_low = 0.3;
    double band_high = 0.6;
    /// Fraction of examples that carry a synthetic peer context.
    double context_fraction = 0.5;

    friend bool operator==(const PretrainSettings&, const PretrainSettings&) = default;
};

struct EvalSettings {
    std::size_t prompts = 128;
    std::size_t k = 8;
    double temperature = 1.0;
    std::size_t every = 0; // during training; 0 evaluates only at the end

    friend bool operator==(const EvalSettings&, const EvalSettings&) = default;
};

struct AnalysisSettings {
    std::size_t prompts = 200;
    std::vector<peercontext::AnalysisCondition> conditions{peercontext::kAnalysisConditions.begin(),
                                                           peercontext::kAnalysisConditions.end()};
    bool impute_zero = false;
    std::size_t diversity_prompts = 64;
    std::size_t diversity_samples = 8;

    friend bool operator==(const AnalysisSettings&, const AnalysisSettings&) = default;
};

struct RunConfig {
    tasks::TaskSpec task;
    model::ModelConfig model;
    std::optional<model::ModelConfig> teacher_model; // larger teacher for the TS methods
    std::string teacher_checkpoint;
    distill::TrainConfig train;
    std::size_t batch_size = 32;
    std::size_t steps = 300;
    std::size_t train_prompts = 256;
    bool log_rollouts = true;
    PretrainSettings pretrain;
    EvalSettings eval;
    AnalysisSettings analysis;
    std::uint64_t seed = 1;
    std::string out_dir = "runs/default";

    /// Checks value ranges and that prompt + context + response fit the
    /// model's max_seq_len. Throws ConfigError.
    void validate() const;
    std::size_t prompt_cap() const noexcept { return task.max_prompt_len(); }
    std::size_t response_cap() const noexcept { return train.sampling.max_response_len; }
    std::size_t context_cap() const noexcept { return train.effective_budget(); }

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Per-task divergence default: reverse KL for MOD_ADD, JS otherwise.
distill::DivergenceKind default_divergence(tasks::TaskKind kind) noexcept;

/// Parses JSON text; absent keys take their defaults. Throws ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical JSON form; parse_config(to_json(c)) == c.
std::string to_json(const RunConfig& config);

std::string model_config_json(const model::ModelConfig& config);
model::ModelConfig parse_model_config(const std::string& text);
std::string task_spec_json(const tasks::TaskSpec& task);
tasks::TaskSpec parse_task_spec(const std::string& text);

} // namespace mopd::cli
