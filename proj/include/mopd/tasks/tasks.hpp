// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mopd/random.hpp"
#include "mopd/tokens.hpp"

namespace mopd::tasks {

enum class TaskKind : std::uint8_t { ModAdd, Sort, Expr };

std::string_view task_name(TaskKind kind) noexcept;
/// Accepts "MOD_ADD", "SORT", "EXPR"; throws std::invalid_argument otherwise.
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
    TaskKind kind = TaskKind::ModAdd;
    std::uint32_t modulus = 31;      // MOD_ADD
    std::uint32_t list_length = 5;   // SORT
    std::uint32_t operand_count = 3; // EXPR
    bool allow_parens = true;        // EXPR canonical shapes

    void validate() const;
    /// Token count of the longest canonical response, fences and EOS included.
    std::size_t canonical_response_cap() const noexcept;
    /// Token count of the longest prompt this spec can generate.
    std::size_t max_prompt_len() const noexcept;
    friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct GroundTruth {
    std::vector<std::int64_t> operands; // MOD_ADD {a, b}; SORT the list; EXPR the digits
    std::int64_t target = 0;            // MOD_ADD sum mod m; EXPR value
    std::vector<std::int64_t> answer;   // canonical answer content as numbers
};

struct ProblemInstance {
    std::uint64_t id = 0;
    std::vector<TokenId> prompt;
    GroundTruth truth;                       // verifier-only
    std::vector<TokenId> canonical_response; // fences and EOS included
};

enum class FailureReason : std::uint8_t { None, NoAnswerBlock, ParseError, WrongValue };
std::string_view failure_name(FailureReason r) noexcept;

struct Verdict {
    double reward = 0.0;
    FailureReason reason = FailureReason::None;
};

ProblemInstance generate_instance(const TaskSpec& spec, RngStream& rng);

/// Total: any token sequence (including out-of-vocabulary ids) yields a verdict.
Verdict verify(const TaskSpec& spec, const ProblemInstance& instance,
               std::span<const TokenId> response);

/// Content of the last complete answer block, or nullopt when none exists.
std::optional<std::span<const TokenId>> find_answer_block(std::span<const TokenId> response);
/// Last block's content; the whole response (EOS stripped) when no block exists.
std::vector<TokenId> extract_answer_block(std::span<const TokenId> response);
/// Text form over the literal delimiters "⟨ans⟩" and "⟨/ans⟩".
std::string extract_answer_block(std::string_view response);

enum class InstancePool : std::uint8_t { Pretrain, Train, Validation, Analysis };
std::string_view pool_name(InstancePool pool) noexcept;

/// Pool membership is a pure function of the prompt tokens, so pools never
/// share a prompt.
InstancePool pool_of(std::span<const TokenId> prompt) noexcept;

/// Draws from `rng` until an instance falls in `pool` (bounded; throws
/// std::runtime_error if the pool cannot be reached).
ProblemInstance generate_pool_instance(const TaskSpec& spec, InstancePool pool, RngStream& rng);

/// Deterministic list of `count` instances of `pool` keyed by `seed`.
std::vector<ProblemInstance> make_pool(const TaskSpec& spec, InstancePool pool, std::uint64_t seed,
                                       std::size_t count);

} // namespace mopd::tasks
