// SPDX-License-Identifier: Apache-2.0
#include "mopd/cli/commands.hpp"

#include <fstream>
#include <ostream>

#include <json.hpp>

#include "mopd/analysis/diversity.hpp"
#include "mopd/analysis/signal_metrics.hpp"
#include "mopd/cli/checkpoint.hpp"
#include "mopd/cli/csv.hpp"
#include "mopd/cli/evaluation.hpp"
#include "mopd/cli/pretrain.hpp"
#include "mopd/distill/train_step.hpp"

namespace mopd::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr std::uint64_t kEpochTag = 0x4550434BULL;
constexpr std::uint64_t kDiversityTag = 0x44495652ULL;

template <class T>
std::string str(T v)
{
    return std::to_string(v);
}
std::string pct(double fraction) { return format_double(100.0 * fraction); }

Checkpoint load_matching(const RunConfig& config, const fs::path& path)
{
    if (path.empty()) {
        throw PreconditionError("--checkpoint is required for this command");
    }
    Checkpoint c = load_checkpoint(path);
    if (!(c.model_config == config.model)) {
        throw PreconditionError("checkpoint model config does not match the run config: " +
                                model_config_json(c.model_config) + " vs " + model_config_json(config.model));
    }
    if (!(c.task == config.task)) {
        throw PreconditionError("checkpoint task " + task_spec_json(c.task) + " does not match the run config " +
                                task_spec_json(config.task));
    }
    return c;
}

EvalSettingsView eval_view(const RunConfig& c)
{
    return {c.eval.k, c.eval.temperature, c.response_cap(), c.train.tau};
}

std::vector<std::string> eval_header() { return {"step", "mean_at_k", "pass_at_k", "k", "prompts"}; }

std::vector<std::string> eval_row(std::uint64_t step, const EvalResult& r)
{
    return {str(step), pct(r.mean_at_k), pct(r.pass_at_k), str(r.k), str(r.prompts)};
}

void write_config(const RunConfig& config, const fs::path& out)
{
    write_file(out / "config.json", to_json(config));
}

std::string block_role(const peercontext::ContextBlock& b)
{
    if (b.rollout_index == static_cast<std::size_t>(-1)) {
        return "feedback";
    }
    switch (b.role) {
    case peercontext::TemplateKind::Primary:
        return "primary";
    case peercontext::TemplateKind::Success:
        return "success";
    case peercontext::TemplateKind::Failure:
        return "failure";
    }
    return "?";
}

void log_rollouts(std::ostream& out, std::uint64_t step, const distill::PreparedBatch& batch)
{
    for (std::size_t b = 0; b < batch.groups.size(); ++b) {
        const auto& g = batch.groups[b];
        for (std::size_t i = 0; i < g.size(); ++i) {
            json rec;
            rec["step"] = step;
            rec["prompt_id"] = g.prompt_id;
            rec["rollout"] = i;
            rec["tokens"] = g.rollouts[i].ids;
            rec["reward"] = g.rewards[i];
            rec["reason"] = std::string(tasks::failure_name(g.reasons[i]));
            json ctx = json::array();
            std::string rung = "no-peer";
            if (b < batch.contexts.size() && i < batch.contexts[b].size()) {
                const auto& pc = batch.contexts[b][i];
                rung = std::string(peercontext::rung_name(pc.rung));
                for (const auto& blk : pc.blocks) {
                    json e;
                    e["role"] = block_role(blk);
                    e["source"] = blk.rollout_index == static_cast<std::size_t>(-1) ? json(nullptr)
                                                                                     : json(blk.rollout_index);
                    ctx.push_back(e);
                }
            }
            rec["rung"] = rung;
            rec["context"] = ctx;
            rec["teacher_score"] = nullptr;
            out << rec.dump() << '\n';
        }
    }
}

/// Prompt order for epoch e: a Fisher-Yates shuffle keyed by (seed, e).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t n)
{
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    RngStream rng = RngStream::keyed({seed, kEpochTag, epoch});
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    return order;
}

} // namespace

int cmd_pretrain(const RunConfig& config, const fs::path& out, std::ostream& log)
{
    config.validate();
    write_config(config, out);
    CsvWriter csv(out / "pretrain_metrics.csv", {"step", "loss", "pass_at_1"});
    auto result = pretrain(config, [&](const PretrainRecord& r) {
        csv.row({str(r.step), format_double(r.loss), r.pass_at_1 ? pct(*r.pass_at_1) : std::string()});
        if (r.pass_at_1) {
            log << "pretrain step " << r.step << " loss " << r.loss << " pass@1 " << 100.0 * *r.pass_at_1
                << "%\n";
        }
    });
    csv.flush();
    save_checkpoint(out / "checkpoint.bin", *result.model, config.task, result.selected_step);
    log << "selected step " << result.selected_step << " pass@1 " << 100.0 * result.selected_pass_at_1 << "%"
        << (result.in_band ? "" : " (outside the target band)") << "\n";
    return result.in_band ? kExitOk : kExitBandUnreached;
}

int cmd_train(const RunConfig& config, const fs::path& checkpoint, const fs::path& out, std::ostream& log)
{
    config.validate();
    Checkpoint start = load_matching(config, checkpoint);

    model::FrozenModel external;
    const auto method = config.train.method;
    if (!config.teacher_checkpoint.empty()) {
        Checkpoint t = load_checkpoint(config.teacher_checkpoint);
        if (config.teacher_model && !(t.model_config == *config.teacher_model)) {
            throw PreconditionError("teacher checkpoint does not match teacher_model");
        }
        if (t.model_config.max_seq_len < config.prompt_cap() + config.context_cap() + config.response_cap()) {
            throw PreconditionError("teacher max_seq_len is shorter than the configured budgets");
        }
        external = std::shared_ptr<const model::PolicyModel>(std::move(t.model));
    } else if (distill::uses_external_teacher(method)) {
        throw PreconditionError(std::string(distill::method_name(method)) + " needs teacher_checkpoint");
    }

    write_config(config, out);
    model::PolicyModel& student = *start.model;
    distill::Trainer trainer(student, config.train, config.task, config.seed, external);

    const auto train_pool =
        tasks::make_pool(config.task, tasks::InstancePool::Train, config.seed, config.train_prompts);
    const auto validation =
        tasks::make_pool(config.task, tasks::InstancePool::Validation, config.seed, config.eval.prompts);

    CsvWriter metrics(out / "metrics.csv",
                      {"step", "objective", "distill", "policy", "nll", "rollouts", "response_tokens",
                       "mean_reward", "prompts_with_success", "ever_success", "rung_contrastive",
                       "rung_positive_only", "rung_failure_only", "rung_no_peer", "rung_feedback", "grad_norm",
                       "learning_rate"});
    CsvWriter timings(out / "timings.csv",
                      {"step", "generation_ms", "reward_ms", "advantage_ms", "update_ms", "total_ms"});
    CsvWriter evals(out / "eval.csv", eval_header());
    std::ofstream rollouts;
    if (config.log_rollouts) {
        rollouts.open(out / "rollouts.jsonl", std::ios::binary | std::ios::trunc);
    }

    auto run_eval = [&](std::uint64_t step) {
        const auto r = evaluate(student, config.task, validation, eval_view(config), config.seed);
        evals.row(eval_row(step, r));
        log << "eval step " << step << " mean@" << r.k << " " << 100.0 * r.mean_at_k << "% pass@" << r.k << " "
            << 100.0 * r.pass_at_k << "%\n";
    };
    if (config.eval.every > 0) {
        run_eval(0);
    }

    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::uint64_t epoch = 0;
    std::vector<tasks::ProblemInstance> batch;
    for (std::size_t s = 1; s <= config.steps; ++s) {
        batch.clear();
        while (batch.size() < config.batch_size) {
            if (cursor == order.size()) {
                order = epoch_order(config.seed, epoch++, train_pool.size());
                cursor = 0;
            }
            batch.push_back(train_pool[order[cursor++]]);
        }
        const distill::StepMetrics m = trainer.step(batch);
        const auto& o = m.objective;
        std::vector<std::string> row = {str(m.step),
                                        format_double(o.total),
                                        format_double(o.distill),
                                        format_double(o.policy),
                                        format_double(o.nll),
                                        str(o.rollouts),
                                        str(o.response_tokens),
                                        format_double(m.mean_reward),
                                        str(m.prompts_with_success),
                                        str(m.ever_success)};
        for (std::size_t r : m.rungs) {
            row.push_back(str(r));
        }
        row.push_back(format_double(m.grad_norm));
        row.push_back(format_double(m.learning_rate));
        metrics.row(row);
        timings.row({str(m.step), format_double(m.generation_ms), format_double(m.reward_ms),
                     format_double(m.advantage_ms), format_double(m.update_ms), format_double(m.total_ms)});
        if (rollouts.is_open()) {
            log_rollouts(rollouts, m.step, trainer.last_batch());
        }
        if (config.eval.every > 0 && s % config.eval.every == 0 && s != config.steps) {
            run_eval(m.step);
        }
    }
    run_eval(config.steps);
    save_checkpoint(out / "checkpoint.bin", student, config.task, start.step + config.steps);
    return kExitOk;
}

int cmd_eval(const RunConfig& config, const fs::path& checkpoint, const fs::path& out, std::ostream& log)
{
    config.validate();
    const Checkpoint c = load_matching(config, checkpoint);
    const auto validation =
        tasks::make_pool(config.task, tasks::InstancePool::Validation, config.seed, config.eval.prompts);
    const auto r = evaluate(*c.model, config.task, validation, eval_view(config), config.seed);
    CsvWriter csv(out / "eval.csv", eval_header());
    csv.row(eval_row(c.step, r));
    log << "mean@" << r.k << " " << 100.0 * r.mean_at_k << "% pass@" << r.k << " " << 100.0 * r.pass_at_k
        << "%\n";
    return kExitOk;
}

int cmd_analyze_signal(const RunConfig& config, const fs::path& checkpoint, const fs::path& out,
                       std::ostream& log)
{
    config.validate();
    const Checkpoint c = load_matching(config, checkpoint);
    const auto prompts =
        tasks::make_pool(config.task, tasks::InstancePool::Analysis, config.seed, config.analysis.prompts);
    analysis::SignalAnalysisConfig sc;
    sc.group_size = config.train.sampling.group_size;
    sc.temperature = config.train.sampling.temperature;
    sc.max_response_len = config.response_cap();
    sc.context_budget = config.context_cap();
    sc.tau = config.train.tau;
    sc.impute_zero = config.analysis.impute_zero;
    sc.conditions = config.analysis.conditions;
    const auto result = analysis::analyze_signal(*c.model, config.task, prompts, sc, config.seed);

    CsvWriter csv(out / "signal.csv", {"condition", "metric", "mean", "defined", "prompts"});
    for (const auto& rep : result.conditions) {
        for (auto m : analysis::kMetrics) {
            const auto& v = rep.metrics[static_cast<std::size_t>(m)];
            csv.row({std::string(peercontext::condition_name(rep.condition)), std::string(analysis::metric_name(m)),
                     format_optional(v.mean), str(v.defined), str(rep.prompts)});
        }
        const auto& pa = rep.metrics[static_cast<std::size_t>(analysis::Metric::PairwiseAccuracy)];
        log << peercontext::condition_name(rep.condition) << " pairwise_accuracy "
            << (pa.mean ? format_double(*pa.mean) : std::string("undefined")) << "\n";
    }
    CsvWriter scores(out / "signal_scores.csv", {"prompt_id", "rollout", "condition", "score", "reward"});
    for (const auto& r : result.records) {
        scores.row({str(r.prompt_id), str(r.rollout_index), std::string(peercontext::condition_name(r.condition)),
                    format_double(r.score), format_double(r.reward)});
    }
    return kExitOk;
}

int cmd_analyze_diversity(const RunConfig& config, const fs::path& checkpoint, const fs::path& out,
                          std::ostream& log)
{
    config.validate();
    const Checkpoint c = load_matching(config, checkpoint);
    const auto prompts = tasks::make_pool(config.task, tasks::InstancePool::Analysis, config.seed,
                                          config.analysis.diversity_prompts);
    CsvWriter csv(out / "diversity.csv",
                  {"prompt_id", "distinct_1", "distinct_2", "ast_jaccard", "parsed", "responses"});
    double d1 = 0.0, d2 = 0.0, ast = 0.0;
    std::size_t ast_prompts = 0;
    for (const auto& inst : prompts) {
        std::vector<std::vector<TokenId>> responses;
        for (std::size_t i = 0; i < config.analysis.diversity_samples; ++i) {
            RngStream rng = rollout::rollout_stream(config.seed, kDiversityTag, inst.id, i);
            responses.push_back(model::sample_rollout(*c.model, inst.prompt, config.response_cap(),
                                                      config.eval.temperature, rng));
        }
        const auto rep = analysis::diversity(responses);
        csv.row({str(inst.id), format_double(rep.distinct_1), format_double(rep.distinct_2),
                 format_optional(rep.ast_jaccard), str(rep.parsed), str(rep.responses)});
        d1 += rep.distinct_1;
        d2 += rep.distinct_2;
        if (rep.ast_jaccard) {
            ast += *rep.ast_jaccard;
            ++ast_prompts;
        }
    }
    const double n = static_cast<double>(prompts.size());
    CsvWriter summary(out / "diversity_summary.csv",
                      {"prompts", "distinct_1", "distinct_2", "ast_jaccard", "ast_prompts"});
    const std::optional<double> ast_mean =
        ast_prompts ? std::optional<double>(ast / static_cast<double>(ast_prompts)) : std::nullopt;
    summary.row({str(prompts.size()), format_double(d1 / n), format_double(d2 / n), format_optional(ast_mean),
                 str(ast_prompts)});
    log << "distinct-1 " << d1 / n << " distinct-2 " << d2 / n << " ast-jaccard "
        << (ast_mean ? format_double(*ast_mean) : std::string("n/a")) << " over " << ast_prompts << " prompts\n";
    return kExitOk;
}

int run_command(const CommandLine& cl, std::ostream& log, std::ostream& err)
{
    try {
        RunConfig config = cl.config.empty() ? RunConfig{} : load_config(cl.config);
        if (cl.seed) {
            config.seed = *cl.seed;
        }
        if (cl.method) {
            try {
                config.train.method = distill::parse_method(*cl.method);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("--method: ") + e.what());
            }
        }
        const fs::path out = cl.out.empty() ? fs::path(config.out_dir) : cl.out;
        config.validate();
        if (cl.command == "pretrain") {
            return cmd_pretrain(config, out, log);
        }
        if (cl.command == "train") {
            return cmd_train(config, cl.checkpoint, out, log);
        }
        if (cl.command == "eval") {
            return cmd_eval(config, cl.checkpoint, out, log);
        }
        if (cl.command == "analyze-signal") {
            return cmd_analyze_signal(config, cl.checkpoint, out, log);
        }
        if (cl.command == "analyze-diversity") {
            return cmd_analyze_diversity(config, cl.checkpoint, out, log);
        }
        err << "unknown command '" << cl.command << "'\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const PreconditionError& e) {
        err << "precondition failed: " << e.what() << "\n";
        return kExitPrecondition;
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << "\n";
        return kExitPrecondition;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

} // namespace mopd::cli
