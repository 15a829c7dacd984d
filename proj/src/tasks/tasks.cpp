// SPDX-License-Identifier: Apache-2.0
#include "mopd/tasks/tasks.hpp"

#include <algorithm>
#include <stdexcept>

#include "mopd/tasks/expression.hpp"

namespace mopd::tasks {

namespace {

constexpr std::string_view kOpenText = "⟨ans⟩";
constexpr std::string_view kCloseText = "⟨/ans⟩";
constexpr std::size_t kMaxAnswerDigits = 9;
constexpr int kPoolAttempts = 10000;

std::uint64_t fnv1a(std::span<const TokenId> ids) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (TokenId t : ids) {
        for (int b = 0; b < 4; ++b) {
            h ^= (t >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

void append_number(std::vector<TokenId>& out, std::int64_t v)
{
    const auto digits = number_tokens(static_cast<int>(v));
    out.insert(out.end(), digits.begin(), digits.end());
}

std::vector<TokenId> fence(std::vector<TokenId> content)
{
    std::vector<TokenId> out;
    out.reserve(content.size() + 3);
    out.push_back(tok::kAnsOpen);
    out.insert(out.end(), content.begin(), content.end());
    out.push_back(tok::kAnsClose);
    out.push_back(tok::kEos);
    return out;
}

// Digit-only content as one number; nullopt for empty, non-digit or overlong content.
std::optional<std::int64_t> parse_number(std::span<const TokenId> content)
{
    if (content.empty() || content.size() > kMaxAnswerDigits) {
        return std::nullopt;
    }
    std::int64_t v = 0;
    for (TokenId t : content) {
        if (!tok::is_digit(t)) {
            return std::nullopt;
        }
        v = v * 10 + tok::digit_value(t);
    }
    return v;
}

ProblemInstance make_mod_add(const TaskSpec& spec, RngStream& rng)
{
    const auto m = static_cast<std::int64_t>(spec.modulus);
    const auto a = static_cast<std::int64_t>(rng.below(spec.modulus));
    const auto b = static_cast<std::int64_t>(rng.below(spec.modulus));
    ProblemInstance inst;
    inst.prompt.push_back(tok::kBos);
    append_number(inst.prompt, a);
    inst.prompt.push_back(tok::kPlus);
    append_number(inst.prompt, b);
    inst.prompt.push_back(tok::kMod);
    append_number(inst.prompt, m);
    inst.prompt.push_back(tok::kEquals);
    inst.truth.operands = {a, b};
    inst.truth.target = (a + b) % m;
    inst.truth.answer = {inst.truth.target};
    inst.canonical_response = fence(number_tokens(static_cast<int>(inst.truth.target)));
    return inst;
}

ProblemInstance make_sort(const TaskSpec& spec, RngStream& rng)
{
    ProblemInstance inst;
    inst.prompt = {tok::kBos, tok::kSort};
    for (std::uint32_t i = 0; i < spec.list_length; ++i) {
        const auto d = static_cast<std::int64_t>(rng.below(10));
        inst.truth.operands.push_back(d);
        inst.prompt.push_back(tok::digit(static_cast<int>(d)));
    }
    inst.prompt.push_back(tok::kEquals);
    inst.truth.answer = inst.truth.operands;
    std::sort(inst.truth.answer.begin(), inst.truth.answer.end());
    std::vector<TokenId> content;
    for (auto d : inst.truth.answer) {
        content.push_back(tok::digit(static_cast<int>(d)));
    }
    inst.canonical_response = fence(std::move(content));
    return inst;
}

ProblemInstance make_expr(const TaskSpec& spec, RngStream& rng)
{
    const std::size_t n = spec.operand_count;
    std::vector<std::int64_t> operands(n);
    for (auto& d : operands) {
        d = 1 + static_cast<std::int64_t>(rng.below(9));
    }
    std::vector<TokenId> ops(n > 0 ? n - 1 : 0);
    for (auto& op : ops) {
        op = rng.below(2) ? tok::kTimes : tok::kPlus;
    }
    // Optionally parenthesize one contiguous proper run of operands.
    std::size_t open = n, close = n;
    if (spec.allow_parens && n >= 3 && rng.below(2)) {
        const std::size_t len = 2 + rng.below(n - 2); // [2, n-1]
        open = rng.below(n - len + 1);
        close = open + len - 1;
    }
    std::vector<TokenId> expr;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == open) {
            expr.push_back(tok::kLParen);
        }
        expr.push_back(tok::digit(static_cast<int>(operands[i])));
        if (i == close) {
            expr.push_back(tok::kRParen);
        }
        if (i + 1 < n) {
            expr.push_back(ops[i]);
        }
    }
    const auto ast = parse_expression(expr);
    if (!ast) {
        throw std::logic_error("make_expr: canonical expression failed to parse");
    }
    ProblemInstance inst;
    inst.truth.operands = operands;
    inst.truth.target = ast->evaluate();
    inst.truth.answer = {inst.truth.target};
    inst.prompt.push_back(tok::kBos);
    for (auto d : operands) {
        inst.prompt.push_back(tok::digit(static_cast<int>(d)));
    }
    inst.prompt.push_back(tok::kTarget);
    append_number(inst.prompt, inst.truth.target);
    inst.prompt.push_back(tok::kEquals);
    inst.canonical_response = fence(std::move(expr));
    return inst;
}

} // namespace

std::string_view task_name(TaskKind kind) noexcept
{
    switch (kind) {
    case TaskKind::ModAdd:
        return "MOD_ADD";
    case TaskKind::Sort:
        return "SORT";
    case TaskKind::Expr:
        return "EXPR";
    }
    return "?";
}

TaskKind parse_task_kind(std::string_view name)
{
    if (name == "MOD_ADD") {
        return TaskKind::ModAdd;
    }
    if (name == "SORT") {
        return TaskKind::Sort;
    }
    if (name == "EXPR") {
        return TaskKind::Expr;
    }
    throw std::invalid_argument("unknown task kind: " + std::string(name));
}

void TaskSpec::validate() const
{
    if (modulus < 2 || modulus > 10000) {
        throw std::invalid_argument("task: modulus must be in [2, 10000]");
    }
    if (list_length < 1 || list_length > 32) {
        throw std::invalid_argument("task: list_length must be in [1, 32]");
    }
    if (operand_count < 1 || operand_count > 8) {
        throw std::invalid_argument("task: operand_count must be in [1, 8]");
    }
}

std::size_t TaskSpec::canonical_response_cap() const noexcept
{
    std::size_t content = 0;
    switch (kind) {
    case TaskKind::ModAdd:
        content = std::to_string(modulus - 1).size();
        break;
    case TaskKind::Sort:
        content = list_length;
        break;
    case TaskKind::Expr:
        content = 2 * operand_count - 1 + (allow_parens && operand_count >= 3 ? 2 : 0);
        break;
    }
    return content + 3;
}

std::size_t TaskSpec::max_prompt_len() const noexcept
{
    switch (kind) {
    case TaskKind::ModAdd:
        // <bos> a + b mod m =
        return 4 + 2 * std::to_string(modulus - 1).size() + std::to_string(modulus).size();
    case TaskKind::Sort:
        return 3 + list_length;
    case TaskKind::Expr: {
        // Largest value is 9^n (all products); <bos> digits target value =
        std::uint64_t v = 1;
        for (std::uint32_t i = 0; i < operand_count; ++i) {
            v *= 9;
        }
        return 3 + operand_count + std::to_string(v).size();
    }
    }
    return 0;
}

std::string_view failure_name(FailureReason r) noexcept
{
    switch (r) {
    case FailureReason::None:
        return "none";
    case FailureReason::NoAnswerBlock:
        return "no-answer-block";
    case FailureReason::ParseError:
        return "parse-error";
    case FailureReason::WrongValue:
        return "wrong-value";
    }
    return "?";
}

ProblemInstance generate_instance(const TaskSpec& spec, RngStream& rng)
{
    spec.validate();
    ProblemInstance inst;
    switch (spec.kind) {
    case TaskKind::ModAdd:
        inst = make_mod_add(spec, rng);
        break;
    case TaskKind::Sort:
        inst = make_sort(spec, rng);
        break;
    case TaskKind::Expr:
        inst = make_expr(spec, rng);
        break;
    }
    inst.id = fnv1a(inst.prompt);
    return inst;
}

std::optional<std::span<const TokenId>> find_answer_block(std::span<const TokenId> response)
{
    std::optional<std::span<const TokenId>> last;
    std::optional<std::size_t> open;
    for (std::size_t i = 0; i < response.size(); ++i) {
        if (response[i] == tok::kAnsOpen) {
            open = i + 1;
        } else if (response[i] == tok::kAnsClose && open) {
            last = response.subspan(*open, i - *open);
            open.reset();
        }
    }
    return last;
}

std::vector<TokenId> extract_answer_block(std::span<const TokenId> response)
{
    if (const auto block = find_answer_block(response)) {
        return {block->begin(), block->end()};
    }
    const auto eos = std::find(response.begin(), response.end(), tok::kEos);
    return {response.begin(), eos};
}

std::string extract_answer_block(std::string_view response)
{
    const std::size_t close = response.rfind(kCloseText);
    if (close != std::string_view::npos) {
        const std::size_t open = response.rfind(kOpenText, close);
        if (open != std::string_view::npos && open + kOpenText.size() <= close) {
            const std::size_t begin = open + kOpenText.size();
            return std::string(response.substr(begin, close - begin));
        }
    }
    return std::string(response);
}

Verdict verify(const TaskSpec& spec, const ProblemInstance& instance,
               std::span<const TokenId> response)
{
    const auto block = find_answer_block(response);
    if (!block) {
        return {0.0, FailureReason::NoAnswerBlock};
    }
    const std::span<const TokenId> content = *block;
    const GroundTruth& truth = instance.truth;
    switch (spec.kind) {
    case TaskKind::ModAdd: {
        const auto v = parse_number(content);
        if (!v) {
            return {0.0, FailureReason::ParseError};
        }
        return *v == truth.target ? Verdict{1.0, FailureReason::None}
                                  : Verdict{0.0, FailureReason::WrongValue};
    }
    case TaskKind::Sort: {
        if (content.empty() ||
            !std::all_of(content.begin(), content.end(), [](TokenId t) { return tok::is_digit(t); })) {
            return {0.0, FailureReason::ParseError};
        }
        const bool same = content.size() == truth.answer.size() &&
                          std::equal(content.begin(), content.end(), truth.answer.begin(),
                                     [](TokenId t, std::int64_t d) { return tok::digit_value(t) == d; });
        return same ? Verdict{1.0, FailureReason::None} : Verdict{0.0, FailureReason::WrongValue};
    }
    case TaskKind::Expr: {
        const auto ast = parse_expression(content);
        if (!ast) {
            return {0.0, FailureReason::ParseError};
        }
        // Must use exactly the given digits, in the given order.
        if (ast->literals() != truth.operands || ast->evaluate() != truth.target) {
            return {0.0, FailureReason::WrongValue};
        }
        return {1.0, FailureReason::None};
    }
    }
    return {0.0, FailureReason::WrongValue};
}

std::string_view pool_name(InstancePool pool) noexcept
{
    switch (pool) {
    case InstancePool::Pretrain:
        return "pretrain";
    case InstancePool::Train:
        return "train";
    case InstancePool::Validation:
        return "validation";
    case InstancePool::Analysis:
        return "analysis";
    }
    return "?";
}

InstancePool pool_of(std::span<const TokenId> prompt) noexcept
{
    const std::uint64_t bucket = mix64(fnv1a(prompt)) % 20;
    if (bucket < 10) {
        return InstancePool::Pretrain;
    }
    if (bucket < 14) {
        return InstancePool::Train;
    }
    if (bucket < 17) {
        return InstancePool::Validation;
    }
    return InstancePool::Analysis;
}

ProblemInstance generate_pool_instance(const TaskSpec& spec, InstancePool pool, RngStream& rng)
{
    for (int attempt = 0; attempt < kPoolAttempts; ++attempt) {
        ProblemInstance inst = generate_instance(spec, rng);
        if (pool_of(inst.prompt) == pool) {
            return inst;
        }
    }
    throw std::runtime_error("generate_pool_instance: pool " + std::string(pool_name(pool)) +
                             " unreachable for task " + std::string(task_name(spec.kind)));
}

std::vector<ProblemInstance> make_pool(const TaskSpec& spec, InstancePool pool, std::uint64_t seed,
                                       std::size_t count)
{
    RngStream rng = RngStream::keyed({seed, 0x504F4F4CULL, static_cast<std::uint64_t>(pool)});
    std::vector<ProblemInstance> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(generate_pool_instance(spec, pool, rng));
    }
    return out;
}

} // namespace mopd::tasks
