// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mopd/model/policy_model.hpp"
#include "mopd/tasks/tasks.hpp"

namespace mopd::cli {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "MOPD", u32 version, u32 header length, header JSON text
/// (model config, task spec, step), then every parameter in
/// PolicyModel::parameters() order as little-endian float32. Integers are
/// little-endian. The header text is kept verbatim so load -> save is
/// byte-identical.
struct Checkpoint {
    std::string header;
    model::ModelConfig model_config;
    tasks::TaskSpec task;
    std::uint64_t step = 0;
    std::unique_ptr<model::PolicyModel> model;
};

std::string checkpoint_header(const model::ModelConfig& model, const tasks::TaskSpec& task,
                              std::uint64_t step);

/// Throws CheckpointError if a parameter is not exactly float32-representable.
std::string encode_checkpoint(const model::PolicyModel& model, std::string_view header);
std::string encode_checkpoint(const model::PolicyModel& model, const tasks::TaskSpec& task,
                              std::uint64_t step);
std::string encode_checkpoint(const Checkpoint& checkpoint);

Checkpoint decode_checkpoint(std::string_view bytes);

void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const std::filesystem::path& path, const model::PolicyModel& model,
                     const tasks::TaskSpec& task, std::uint64_t step);

} // namespace mopd::cli
