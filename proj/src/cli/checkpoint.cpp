// SPDX-License-Identifier: Apache-2.0
#include "mopd/cli/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mopd/cli/run_config.hpp"

namespace mopd::cli {

namespace {

using json = nlohmann::ordered_json;

constexpr std::string_view kMagic = "MOPD";

void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at)
{
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    }
    return v;
}

} // namespace

std::string checkpoint_header(const model::ModelConfig& model, const tasks::TaskSpec& task,
                              std::uint64_t step)
{
    json j;
    j["model"] = json::parse(model_config_json(model));
    j["task"] = json::parse(task_spec_json(task));
    j["step"] = step;
    return j.dump();
}

std::string encode_checkpoint(const model::PolicyModel& model, std::string_view header)
{
    std::string out;
    out.append(kMagic);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.append(header);
    for (const numerics::Tensor* p : model.parameters()) {
        for (double v : p->values()) {
            const float f = static_cast<float>(v);
            if (static_cast<double>(f) != v) {
                throw CheckpointError("parameter value is not float32-representable");
            }
            put_u32(out, std::bit_cast<std::uint32_t>(f));
        }
    }
    return out;
}

std::string encode_checkpoint(const model::PolicyModel& model, const tasks::TaskSpec& task,
                              std::uint64_t step)
{
    return encode_checkpoint(model, checkpoint_header(model.config(), task, step));
}

std::string encode_checkpoint(const Checkpoint& checkpoint)
{
    if (!checkpoint.model) {
        throw CheckpointError("checkpoint has no model");
    }
    return encode_checkpoint(*checkpoint.model, checkpoint.header);
}

Checkpoint decode_checkpoint(std::string_view bytes)
{
    if (bytes.size() < 12 || bytes.substr(0, 4) != kMagic) {
        throw CheckpointError("not a checkpoint file (bad magic)");
    }
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t length = get_u32(bytes, 8);
    if (bytes.size() < 12 + static_cast<std::size_t>(length)) {
        throw CheckpointError("truncated checkpoint header");
    }
    Checkpoint c;
    c.header = std::string(bytes.substr(12, length));
    try {
        const json j = json::parse(c.header);
        c.model_config = parse_model_config(j.at("model").dump());
        c.task = parse_task_spec(j.at("task").dump());
        c.step = j.at("step").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
    }
    try {
        c.model_config.validate();
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("bad checkpoint model config: ") + e.what());
    }
    c.model = std::make_unique<model::PolicyModel>(c.model_config);
    std::size_t at = 12 + length;
    const std::size_t expected = 4 * c.model->parameter_count();
    if (bytes.size() - at != expected) {
        throw CheckpointError("parameter blob has " + std::to_string(bytes.size() - at) +
                              " bytes, expected " + std::to_string(expected));
    }
    for (numerics::Tensor* p : c.model->parameters()) {
        for (double& v : p->values()) {
            const float f = std::bit_cast<float>(get_u32(bytes, at));
            if (!std::isfinite(f)) {
                throw CheckpointError("non-finite parameter in checkpoint");
            }
            v = static_cast<double>(f);
            at += 4;
        }
    }
    return c;
}

void write_file(const std::filesystem::path& path, std::string_view bytes)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::string bytes;
    try {
        bytes = read_file(path);
    } catch (const std::runtime_error& e) {
        throw CheckpointError(e.what());
    }
    return decode_checkpoint(bytes);
}

void save_checkpoint(const std::filesystem::path& path, const model::PolicyModel& model,
                     const tasks::TaskSpec& task, std::uint64_t step)
{
    write_file(path, encode_checkpoint(model, task, step));
}

} // namespace mopd::cli
