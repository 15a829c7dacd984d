// SPDX-License-Identifier: Apache-2.0
// mopd: pretrain, train, eval, analyze-signal, analyze-diversity.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mopd/cli/commands.hpp"

int main(int argc, char** argv)
{
    using mopd::cli::CommandLine;

    CLI::App app{"Multi-rollout on-policy distillation on toy reasoning tasks"};
    app.require_subcommand(1);

    CommandLine cl;
    std::string config, checkpoint, out, method;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
        sub->add_option("--config", config, "run config (JSON)")->check(CLI::ExistingFile);
        if (needs_checkpoint) {
            sub->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
        }
        sub->add_option("--out", out, "output directory (default: config out_dir)");
        sub->add_option("--seed", seed, "master seed, overrides the config");
        sub->add_option("--method", method, "method tag, overrides the config");
    };
    add_common(app.add_subcommand("pretrain", "supervised warm-up to the target pass@1 band"), false);
    add_common(app.add_subcommand("train", "run a training method from a checkpoint"), true);
    add_common(app.add_subcommand("eval", "mean@k and pass@k on validation prompts"), true);
    add_common(app.add_subcommand("analyze-signal", "self-teacher signal quality per context condition"), true);
    add_common(app.add_subcommand("analyze-diversity", "lexical and structural diversity of samples"), true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mopd::cli::kExitConfig;
    }

    CLI::App* sub = app.get_subcommands().front();
    cl.command = sub->get_name();
    cl.config = config;
    cl.checkpoint = checkpoint;
    cl.out = out;
    if (sub->count("--seed")) {
        cl.seed = seed;
    }
    if (sub->count("--method")) {
        cl.method = method;
    }
    return mopd::cli::run_command(cl, std::cout, std::cerr);
}
