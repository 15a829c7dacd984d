// SPDX-License-Identifier: Apache-2.0
#include "mopd/cli/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mopd::cli {

namespace {

using json = nlohmann::ordered_json;
using peercontext::ContextVariant;

// Reads keys of one object, rejecting any key not consumed.
class Reader {
public:
    Reader(const json& j, std::string where)
        : j_(j), where_(std::move(where))
    {
        if (!j_.is_object()) {
            throw ConfigError(where_ + ": expected an object");
        }
    }
    Reader(const Reader&) = delete;
    Reader& operator=(const Reader&) = delete;

    ~Reader() noexcept(false)
    {
        if (std::uncaught_exceptions() > 0) {
            return;
        }
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
            }
        }
    }

    bool has(const std::string& key)
    {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    template <class T>
    void get(const std::string& key, T& out)
    {
        if (!has(key)) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    const json& child(const std::string& key)
    {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string path(const std::string& key) const { return where_ + "." + key; }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::string variant_name(const ContextVariant& v)
{
    switch (v.kind) {
    case ContextVariant::Kind::NoPeer:
        return "no_peer";
    case ContextVariant::Kind::PositiveOnly:
        return "positive_only";
    case ContextVariant::Kind::Contrastive:
        return "contrastive";
    case ContextVariant::Kind::Gated:
        return "gated";
    case ContextVariant::Kind::Analysis:
        return "analysis";
    }
    return "?";
}

ContextVariant parse_variant(const std::string& name, bool gate_success, bool gate_failure)
{
    if (name == "no_peer") {
        return ContextVariant::no_peer();
    }
    if (name == "positive_only") {
        return ContextVariant::positive_only();
    }
    if (name == "contrastive") {
        return ContextVariant::contrastive();
    }
    if (name == "gated") {
        return ContextVariant::gated(gate_success, gate_failure);
    }
    throw ConfigError("context.variant: unknown variant '" + name + "'");
}

peercontext::AnalysisCondition parse_condition(const std::string& name)
{
    for (auto c : peercontext::kAnalysisConditions) {
        if (name == peercontext::condition_name(c)) {
            return c;
        }
    }
    throw ConfigError("analysis.conditions: unknown condition '" + name + "'");
}

json model_to_json(const model::ModelConfig& m)
{
    return json{{"vocab_size", m.vocab_size}, {"width", m.width},
                {"layers", m.layers},         {"heads", m.heads},
                {"max_seq_len", m.max_seq_len}, {"seed", m.seed}};
}

model::ModelConfig model_from_json(const json& j, const std::string& where)
{
    model::ModelConfig m;
    Reader r(j, where);
    r.get("vocab_size", m.vocab_size);
    r.get("width", m.width);
    r.get("layers", m.layers);
    r.get("heads", m.heads);
    r.get("max_seq_len", m.max_seq_len);
    r.get("seed", m.seed);
    return m;
}

template <class F>
auto rethrow_as_config(const std::string& what, F&& f)
{
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

json task_to_json(const tasks::TaskSpec& t)
{
    return json{{"kind", std::string(tasks::task_name(t.kind))},
                {"modulus", t.modulus},
                {"list_length", t.list_length},
                {"operand_count", t.operand_count},
                {"allow_parens", t.allow_parens}};
}

tasks::TaskSpec task_from_json(const json& j)
{
    tasks::TaskSpec t;
    Reader r(j, "task");
    std::string kind = std::string(tasks::task_name(t.kind));
    r.get("kind", kind);
    t.kind = rethrow_as_config("task.kind", [&] { return tasks::parse_task_kind(kind); });
    r.get("modulus", t.modulus);
    r.get("list_length", t.list_length);
    r.get("operand_count", t.operand_count);
    r.get("allow_parens", t.allow_parens);
    return t;
}

} // namespace

distill::DivergenceKind default_divergence(tasks::TaskKind kind) noexcept
{
    return kind == tasks::TaskKind::ModAdd ? distill::DivergenceKind::ReverseKL
                                           : distill::DivergenceKind::JensenShannon;
}

void RunConfig::validate() const
{
    auto check = [](bool ok, const std::string& msg) {
        if (!ok) {
            throw ConfigError(msg);
        }
    };
    rethrow_as_config("task", [&] { task.validate(); return 0; });
    rethrow_as_config("model", [&] { model.validate(); return 0; });
    rethrow_as_config("train", [&] { train.validate(); return 0; });
    check(model.vocab_size == tok::kVocabSize, "model.vocab_size must equal the shared vocabulary size");
    check(train.variant.kind != peercontext::ContextVariant::Kind::Analysis,
          "context.variant: analysis conditions are not training variants");
    check(batch_size >= 1, "train.batch_size must be >= 1");
    check(train_prompts >= 1, "train.train_prompts must be >= 1");
    check(response_cap() >= task.canonical_response_cap(),
          "rollout.max_response_len is shorter than the task's canonical response");
    const std::size_t need = prompt_cap() + context_cap() + response_cap();
    check(need <= model.max_seq_len,
          "budgets exceed model.max_seq_len: prompt " + std::to_string(prompt_cap()) + " + context " +
              std::to_string(context_cap()) + " + response " + std::to_string(response_cap()) +
              " > " + std::to_string(model.max_seq_len));
    if (teacher_model) {
        rethrow_as_config("teacher_model", [&] { teacher_model->validate(); return 0; });
        check(need <= teacher_model->max_seq_len, "budgets exceed teacher_model.max_seq_len");
    }
    check(pretrain.batch_size >= 1, "pretrain.batch_size must be >= 1");
    check(pretrain.learning_rate > 0.0, "pretrain.learning_rate must be positive");
    check(pretrain.eval_every >= 1, "pretrain.eval_every must be >= 1");
    check(pretrain.eval_prompts >= 1, "pretrain.eval_prompts must be >= 1");
    check(pretrain.band_low >= 0.0 && pretrain.band_low <= pretrain.band_high && pretrain.band_high <= 1.0,
          "pretrain band must satisfy 0 <= band_low <= band_high <= 1");
    check(pretrain.context_fraction >= 0.0 && pretrain.context_fraction <= 1.0,
          "pretrain.context_fraction must lie in [0, 1]");
    check(eval.k >= 1, "eval.k must be >= 1");
    check(eval.prompts >= 1, "eval.prompts must be >= 1");
    check(eval.temperature >= 0.0, "eval.temperature must be >= 0");
    check(analysis.prompts >= 1, "analysis.prompts must be >= 1");
    check(!analysis.conditions.empty(), "analysis.conditions must be nonempty");
    check(analysis.diversity_samples >= 1, "analysis.diversity_samples must be >= 1");
}

std::string model_config_json(const model::ModelConfig& config)
{
    return model_to_json(config).dump();
}

std::string task_spec_json(const tasks::TaskSpec& task)
{
    return task_to_json(task).dump();
}

tasks::TaskSpec parse_task_spec(const std::string& text)
{
    try {
        return task_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("task spec: ") + e.what());
    }
}

model::ModelConfig parse_model_config(const std::string& text)
{
    try {
        return model_from_json(json::parse(text), "model");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

RunConfig parse_config(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    Reader r(root, "config");
    std::string method = std::string(distill::method_name(c.train.method));
    r.get("method", method);
    c.train.method = rethrow_as_config("method", [&] { return distill::parse_method(method); });
    r.get("seed", c.seed);
    r.get("out_dir", c.out_dir);

    if (r.has("task")) {
        c.task = task_from_json(r.child("task"));
    }
    if (r.has("model")) {
        c.model = model_from_json(r.child("model"), "model");
    }
    if (r.has("teacher_model")) {
        c.teacher_model = model_from_json(r.child("teacher_model"), "teacher_model");
    }
    r.get("teacher_checkpoint", c.teacher_checkpoint);

    if (r.has("rollout")) {
        Reader ro(r.child("rollout"), "rollout");
        ro.get("group_size", c.train.sampling.group_size);
        ro.get("temperature", c.train.sampling.temperature);
        ro.get("max_response_len", c.train.sampling.max_response_len);
        ro.get("tau", c.train.tau);
    }
    c.train.loss.kind = default_divergence(c.task.kind);
    if (r.has("distill")) {
        Reader d(r.child("distill"), "distill");
        if (d.has("divergence")) {
            std::string name;
            d.get("divergence", name);
            c.train.loss.kind =
                rethrow_as_config("distill.divergence", [&] { return distill::parse_divergence(name); });
        }
        d.get("top_k", c.train.loss.top_k);
        d.get("alpha", c.train.loss.alpha);
        d.get("teacher_refresh", c.train.teacher_refresh);
    }
    if (r.has("context")) {
        Reader x(r.child("context"), "context");
        std::string variant = variant_name(c.train.variant);
        bool gs = c.train.variant.gate_success, gf = c.train.variant.gate_failure;
        x.get("variant", variant);
        x.get("gate_success", gs);
        x.get("gate_failure", gf);
        c.train.variant = parse_variant(variant, gs, gf);
        x.get("success_count", c.train.selection.success_count);
        x.get("failure_count", c.train.selection.failure_count);
        std::string policy = "first_by_index";
        x.get("selection", policy);
        if (policy == "first_by_index") {
            c.train.selection.policy = peercontext::SelectionPolicy::FirstByIndex;
        } else if (policy == "uniform_random") {
            c.train.selection.policy = peercontext::SelectionPolicy::UniformRandom;
        } else {
            throw ConfigError("context.selection: unknown policy '" + policy + "'");
        }
        x.get("budget", c.train.context_budget);
    }
    if (r.has("optimizer")) {
        Reader o(r.child("optimizer"), "optimizer");
        o.get("learning_rate", c.train.adam.learning_rate);
        o.get("beta1", c.train.adam.beta1);
        o.get("beta2", c.train.adam.beta2);
        o.get("epsilon", c.train.adam.epsilon);
        o.get("warmup_steps", c.train.adam.warmup_steps);
    }
    if (r.has("train")) {
        Reader t(r.child("train"), "train");
        t.get("batch_size", c.batch_size);
        t.get("steps", c.steps);
        t.get("train_prompts", c.train_prompts);
        t.get("log_rollouts", c.log_rollouts);
    }
    if (r.has("pretrain")) {
        Reader p(r.child("pretrain"), "pretrain");
        p.get("max_steps", c.pretrain.max_steps);
        p.get("batch_size", c.pretrain.batch_size);
        p.get("learning_rate", c.pretrain.learning_rate);
        p.get("warmup_steps", c.pretrain.warmup_steps);
        p.get("eval_every", c.pretrain.eval_every);
        p.get("eval_prompts", c.pretrain.eval_prompts);
        p.get("band_low", c.pretrain.band_low);
        p.get("band_high", c.pretrain.band_high);
        p.get("context_fraction", c.pretrain.context_fraction);
    }
    if (r.has("eval")) {
        Reader e(r.child("eval"), "eval");
        e.get("prompts", c.eval.prompts);
        e.get("k", c.eval.k);
        e.get("temperature", c.eval.temperature);
        e.get("every", c.eval.every);
    }
    if (r.has("analysis")) {
        Reader a(r.child("analysis"), "analysis");
        a.get("prompts", c.analysis.prompts);
        if (a.has("conditions")) {
            std::vector<std::string> names;
            a.get("conditions", names);
            c.analysis.conditions.clear();
            for (const auto& n : names) {
                c.analysis.conditions.push_back(parse_condition(n));
            }
        }
        a.get("impute_zero", c.analysis.impute_zero);
        a.get("diversity_prompts", c.analysis.diversity_prompts);
        a.get("diversity_samples", c.analysis.diversity_samples);
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_json(const RunConfig& c)
{
    json j;
    j["method"] = std::string(distill::method_name(c.train.method));
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["task"] = task_to_json(c.task);
    j["model"] = model_to_json(c.model);
    j["teacher_model"] = c.teacher_model ? model_to_json(*c.teacher_model) : json(nullptr);
    j["teacher_checkpoint"] = c.teacher_checkpoint;
    j["rollout"] = json{{"group_size", c.train.sampling.group_size},
                        {"temperature", c.train.sampling.temperature},
                        {"max_response_len", c.train.sampling.max_response_len},
                        {"tau", c.train.tau}};
    j["distill"] = json{{"divergence", std::string(distill::divergence_name(c.train.loss.kind))},
                        {"top_k", c.train.loss.top_k},
                        {"alpha", c.train.loss.alpha},
                        {"teacher_refresh", c.train.teacher_refresh}};
    j["context"] = json{{"variant", variant_name(c.train.variant)},
                        {"gate_success", c.train.variant.gate_success},
                        {"gate_failure", c.train.variant.gate_failure},
                        {"success_count", c.train.selection.success_count},
                        {"failure_count", c.train.selection.failure_count},
                        {"selection", c.train.selection.policy == peercontext::SelectionPolicy::FirstByIndex
                                          ? "first_by_index"
                                          : "uniform_random"},
                        {"budget", c.train.context_budget}};
    j["optimizer"] = json{{"learning_rate", c.train.adam.learning_rate},
                          {"beta1", c.train.adam.beta1},
                          {"beta2", c.train.adam.beta2},
                          {"epsilon", c.train.adam.epsilon},
                          {"warmup_steps", c.train.adam.warmup_steps}};
    j["train"] = json{{"batch_size", c.batch_size},
                      {"steps", c.steps},
                      {"train_prompts", c.train_prompts},
                      {"log_rollouts", c.log_rollouts}};
    j["pretrain"] = json{{"max_steps", c.pretrain.max_steps},
                         {"batch_size", c.pretrain.batch_size},
                         {"learning_rate", c.pretrain.learning_rate},
                         {"warmup_steps", c.pretrain.warmup_steps},
                         {"eval_every", c.pretrain.eval_every},
                         {"eval_prompts", c.pretrain.eval_prompts},
                         {"band_low", c.pretrain.band_low},
                         {"band_high", c.pretrain.band_high},
                         {"context_fraction", c.pretrain.context_fraction}};
    j["eval"] = json{{"prompts", c.eval.prompts},
                     {"k", c.eval.k},
                     {"temperature", c.eval.temperature},
                     {"every", c.eval.every}};
    json conditions = json::array();
    for (auto cond : c.analysis.conditions) {
        conditions.push_back(std::string(peercontext::condition_name(cond)));
    }
    j["analysis"] = json{{"prompts", c.analysis.prompts},
                         {"conditions", conditions},
                         {"impute_zero", c.analysis.impute_zero},
                         {"diversity_prompts", c.analysis.diversity_prompts},
                         {"diversity_samples", c.analysis.diversity_samples}};
    return j.dump(2) + "\n";
}

} // namespace mopd::cli
