// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "mopd/cli/run_config.hpp"
#include "mopd/model/policy_model.hpp"
#include "mopd/random.hpp"
#include "mopd/tasks/tasks.hpp"

namespace mopd::cli {

/// A response the verifier rejects: the canonical one with a digit or an
/// operator changed, or the answer to a different problem. Falls back to
/// dropping the closing fence.
std::vector<TokenId> corrupt_response(const tasks::TaskSpec& task, const tasks::ProblemInstance& instance,
                                      RngStream& rng);

/// Peer-style context for supervised warm-up: blocks built from the canonical
/// response and corrupted copies, in the templates the self-teacher later
/// sees. Contains at least one block.
std::vector<TokenId> synthetic_context(const tasks::TaskSpec& task, const tasks::ProblemInstance& instance,
                                       RngStream& rng);

struct PretrainRecord {
    std::uint64_t step = 0;
    double loss = 0.0; // mean per-token NLL over the batch
    std::optional<double> pass_at_1;
};

struct PretrainResult {
    std::unique_ptr<model::PolicyModel> model; // the selected checkpoint
    std::uint64_t selected_step = 0;
    double selected_pass_at_1 = 0.0;
    bool in_band = false;
    std::vector<PretrainRecord> history;
};

/// Supervised next-token training on canonical responses from the pretrain
/// pool. pass@1 is estimated on validation prompts every eval_every steps;
/// training stops at the first estimate inside the band. Without one, the
/// estimate closest to the band is selected and in_band is false.
PretrainResult pretrain(const RunConfig& config,
                        const std::function<void(const PretrainRecord&)>& on_record = {});

} // namespace mopd::cli
