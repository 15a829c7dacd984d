// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "mopd/cli/checkpoint.hpp"
#include "mopd/cli/commands.hpp"
#include "mopd/cli/csv.hpp"
#include "mopd/cli/evaluation.hpp"
#include "mopd/cli/pretrain.hpp"
#include "mopd/cli/run_config.hpp"

namespace {

namespace fs = std::filesystem;
using namespace mopd;
using namespace mopd::cli;

fs::path temp_dir(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("mopd_unit_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunConfig tiny()
{
    RunConfig c;
    c.task.kind = tasks::TaskKind::Sort;
    c.task.list_length = 3;
    c.model.width = 8;
    c.model.layers = 1;
    c.model.heads = 2;
    c.model.max_seq_len = 64;
    c.train.sampling.group_size = 2;
    c.train.sampling.max_response_len = 8;
    c.batch_size = 2;
    c.steps = 2;
    c.train_prompts = 4;
    c.pretrain.max_steps = 0;
    c.pretrain.eval_prompts = 4;
    c.eval.prompts = 4;
    c.eval.k = 2;
    c.analysis.prompts = 4;
    c.analysis.diversity_prompts = 2;
    c.analysis.diversity_samples = 2;
    return c;
}

TEST(RunConfig, JsonRoundTrip)
{
    RunConfig c = tiny();
    c.train.method = distill::Method::SDPOLike;
    c.train.loss.kind = distill::DivergenceKind::ForwardKL;
    c.train.variant = peercontext::ContextVariant::gated(true, false);
    c.train.selection.policy = peercontext::SelectionPolicy::UniformRandom;
    c.analysis.impute_zero = true;
    c.seed = 99;
    const RunConfig back = parse_config(to_json(c));
    EXPECT_EQ(back, c);
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(RunConfig, DefaultsFollowTheTask)
{
    const auto c = parse_config(R"({"task": {"kind": "MOD_ADD"}})");
    EXPECT_EQ(c.train.loss.kind, distill::DivergenceKind::ReverseKL);
    const auto s = parse_config(R"({"task": {"kind": "SORT"}})");
    EXPECT_EQ(s.train.loss.kind, distill::DivergenceKind::JensenShannon);
    EXPECT_EQ(s.train.sampling.group_size, 8u);
    EXPECT_EQ(s.train.loss.alpha, 0.5);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues)
{
    EXPECT_THROW(parse_config(R"({"trian": {}})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"rollout": {"group_sise": 4}})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"method": "PPO"})"), ConfigError);
    EXPECT_THROW(parse_config("{not json"), ConfigError);
    RunConfig c = tiny();
    c.model.max_seq_len = 10; // prompt + context + response cannot fit
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny();
    c.train.variant = peercontext::ContextVariant::analysis(peercontext::AnalysisCondition::OneSuccess);
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Checkpoint, EncodeDecodeIsByteIdentical)
{
    const RunConfig c = tiny();
    const model::PolicyModel m(c.model);
    const std::string bytes = encode_checkpoint(m, c.task, 17);
    EXPECT_EQ(bytes.substr(0, 4), "MOPD");
    const Checkpoint back = decode_checkpoint(bytes);
    EXPECT_EQ(back.step, 17u);
    EXPECT_EQ(back.task, c.task);
    EXPECT_EQ(back.model_config, c.model);
    EXPECT_TRUE(back.model->bit_equal(m));
    EXPECT_EQ(encode_checkpoint(back), bytes);

    const auto dir = temp_dir("checkpoint");
    save_checkpoint(dir / "c.bin", m, c.task, 17);
    EXPECT_EQ(read_file(dir / "c.bin"), bytes);
}

TEST(Checkpoint, RejectsDamage)
{
    const RunConfig c = tiny();
    model::PolicyModel m(c.model);
    const std::string bytes = encode_checkpoint(m, c.task, 0);
    EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), CheckpointError);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 4)), CheckpointError);
    std::string version = bytes;
    version[4] = 9;
    EXPECT_THROW(decode_checkpoint(version), CheckpointError);
    std::string nan = bytes;
    for (int i = 1; i <= 4; ++i) {
        nan[nan.size() - i] = static_cast<char>(0xFF);
    }
    EXPECT_THROW(decode_checkpoint(nan), CheckpointError);
    m.parameters()[0]->values()[0] = 0.1; // not a float32 value
    EXPECT_THROW(encode_checkpoint(m, c.task, 0), CheckpointError);
    EXPECT_THROW(load_checkpoint("/nonexistent/checkpoint.bin"), CheckpointError);
}

TEST(Csv, DoublesRoundTripAndRowsAreChecked)
{
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.0}) {
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
    EXPECT_EQ(format_optional(std::nullopt), "");
    const auto dir = temp_dir("csv");
    {
        CsvWriter w(dir / "t.csv", {"a", "b"});
        w.row({"1", "2"});
        EXPECT_THROW(w.row({"1"}), std::logic_error);
    }
    std::ifstream in(dir / "t.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), "a,b\n1,2\n");
}

TEST(Evaluation, SummarizeRewards)
{
    const std::vector<std::vector<double>> r{{1, 0, 0, 0}, {0, 0, 0, 0}, {1, 1, 1, 1}};
    const auto s = summarize_rewards(r, 0.5);
    EXPECT_DOUBLE_EQ(s.mean_at_k, (0.25 + 0.0 + 1.0) / 3.0);
    EXPECT_DOUBLE_EQ(s.pass_at_k, 2.0 / 3.0);
    EXPECT_EQ(s.k, 4u);
    EXPECT_EQ(s.prompts, 3u);
    const std::vector<std::vector<double>> ragged{{1, 0}, {1}};
    EXPECT_THROW(summarize_rewards(ragged, 0.5), std::invalid_argument);
    EXPECT_THROW(summarize_rewards(std::vector<std::vector<double>>{}, 0.5), std::invalid_argument);
}

TEST(Pretrain, CorruptionsFailAndContextsRender)
{
    tasks::TaskSpec spec;
    for (auto kind : {tasks::TaskKind::ModAdd, tasks::TaskKind::Sort, tasks::TaskKind::Expr}) {
        spec.kind = kind;
        RngStream rng(8);
        for (int i = 0; i < 300; ++i) {
            const auto inst = tasks::generate_instance(spec, rng);
            EXPECT_EQ(tasks::verify(spec, inst, corrupt_response(spec, inst, rng)).reward, 0.0);
            const auto ctx = synthetic_context(spec, inst, rng);
            ASSERT_FALSE(ctx.empty());
            EXPECT_EQ(ctx.back(), tok::kCtxEnd);
        }
    }
}

TEST(Pretrain, ZeroStepsEvaluatesTheInitialization)
{
    RunConfig c = tiny();
    c.pretrain.band_low = 0.0;
    const auto r = pretrain(c);
    ASSERT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.history[0].step, 0u);
    ASSERT_TRUE(r.history[0].pass_at_1);
    EXPECT_EQ(r.selected_step, 0u);
    EXPECT_TRUE(r.in_band);
    EXPECT_TRUE(r.model->bit_equal(model::PolicyModel(c.model)));
}

class Commands : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir = temp_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
        write(dir / "ok.json", to_json(tiny()));
    }
    static void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }
    int run(const std::string& command, const fs::path& config, const fs::path& checkpoint, const fs::path& out,
            std::optional<std::string> method = std::nullopt)
    {
        std::ostringstream log;
        err.str("");
        return run_command({command, config, checkpoint, out, std::nullopt, std::move(method)}, log, err);
    }
    fs::path dir;
    std::ostringstream err;
};

TEST_F(Commands, ExitCodes)
{
    write(dir / "bad.json", R"({"rollout": {"temperature": -1}})");
    EXPECT_EQ(run("train", dir / "bad.json", {}, dir / "x"), kExitConfig);
    EXPECT_EQ(run("train", dir / "ok.json", {}, dir / "x", "PPO"), kExitConfig);
    EXPECT_EQ(run("fly", dir / "ok.json", {}, dir / "x"), kExitConfig);
    EXPECT_EQ(run("train", dir / "ok.json", {}, dir / "x"), kExitPrecondition);
    EXPECT_EQ(run("eval", dir / "ok.json", dir / "missing.bin", dir / "x"), kExitPrecondition);

    // Band [0.99, 1.0] is out of reach for an untrained model.
    RunConfig hard = tiny();
    hard.pretrain.band_low = 0.99;
    hard.pretrain.band_high = 1.0;
    write(dir / "hard.json", to_json(hard));
    EXPECT_EQ(run("pretrain", dir / "hard.json", {}, dir / "hard"), kExitBandUnreached);
    EXPECT_TRUE(fs::exists(dir / "hard" / "checkpoint.bin"));

    // A checkpoint for another architecture is refused.
    RunConfig wide = tiny();
    wide.model.width = 16;
    write(dir / "wide.json", to_json(wide));
    RunConfig easy = wide;
    easy.pretrain.band_low = 0.0;
    write(dir / "easy.json", to_json(easy));
    ASSERT_EQ(run("pretrain", dir / "easy.json", {}, dir / "wide"), kExitOk) << err.str();
    EXPECT_EQ(run("train", dir / "ok.json", dir / "wide" / "checkpoint.bin", dir / "x"), kExitPrecondition);

    // The teacher-student methods need a separate teacher checkpoint.
    EXPECT_EQ(run("train", dir / "wide.json", dir / "wide" / "checkpoint.bin", dir / "x", "MOPD-TS"), kExitPrecondition);
    EXPECT_NE(err.str().find("teacher"), std::string::npos) << err.str();
}

TEST_F(Commands, EveryCommandWritesItsFiles)
{
    RunConfig c = tiny();
    c.pretrain.band_low = 0.0;
    write(dir / "c.json", to_json(c));
    ASSERT_EQ(run("pretrain", dir / "c.json", {}, dir / "pt"), kExitOk) << err.str();
    const auto ckpt = dir / "pt" / "checkpoint.bin";
    for (const char* f : {"checkpoint.bin", "pretrain_metrics.csv", "config.json"}) {
        EXPECT_TRUE(fs::exists(dir / "pt" / f)) << f;
    }
    for (const char* method : {"MOPD", "OPD-single", "SDPO-like", "GRPO", "GKD"}) {
        ASSERT_EQ(run("train", dir / "c.json", ckpt, dir / method, method), kExitOk) << method << " " << err.str();
        for (const char* f : {"checkpoint.bin", "metrics.csv", "timings.csv", "eval.csv", "rollouts.jsonl"}) {
            EXPECT_TRUE(fs::exists(dir / method / f)) << method << " " << f;
        }
        EXPECT_EQ(load_checkpoint(dir / method / "checkpoint.bin").step, 2u);
    }
    ASSERT_EQ(run("eval", dir / "c.json", ckpt, dir / "ev"), kExitOk) << err.str();
    EXPECT_TRUE(fs::exists(dir / "ev" / "eval.csv"));
    ASSERT_EQ(run("analyze-signal", dir / "c.json", ckpt, dir / "sig"), kExitOk) << err.str();
    EXPECT_TRUE(fs::exists(dir / "sig" / "signal.csv"));
    EXPECT_TRUE(fs::exists(dir / "sig" / "signal_scores.csv"));
    ASSERT_EQ(run("analyze-diversity", dir / "c.json", ckpt, dir / "div"), kExitOk) << err.str();
    EXPECT_TRUE(fs::exists(dir / "div" / "diversity.csv"));
    EXPECT_TRUE(fs::exists(dir / "div" / "diversity_summary.csv"));
}

} // namespace
