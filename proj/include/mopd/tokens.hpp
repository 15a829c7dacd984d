// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mopd {

using TokenId = std::uint32_t;

/// Reserved and task vocabulary shared by every task, so a checkpoint is
/// usable across tasks. Context headers are single reserved tokens.
namespace tok {
inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kCtxPrimary = 2; // "reference solution"
inline constexpr TokenId kCtxSuccess = 3; // "another correct solution"
inline constexpr TokenId kCtxFailure = 4; // "failed attempt - avoid this mistake"
inline constexpr TokenId kCtxEnd = 5;     // block separator
inline constexpr TokenId kAnsOpen = 6;
inline constexpr TokenId kAnsClose = 7;
inline constexpr TokenId kFeedback = 8;
inline constexpr TokenId kFbCorrect = 9;
inline constexpr TokenId kFbNoAnswer = 10;
inline constexpr TokenId kFbParseError = 11;
inline constexpr TokenId kFbWrongValue = 12;
inline constexpr TokenId kMod = 13;
inline constexpr TokenId kSort = 14;
inline constexpr TokenId kTarget = 15;
inline constexpr TokenId kEquals = 16;
inline constexpr TokenId kPlus = 17;
inline constexpr TokenId kTimes = 18;
inline constexpr TokenId kLParen = 19;
inline constexpr TokenId kRParen = 20;
inline constexpr TokenId kDigit0 = 21;
inline constexpr TokenId kVocabSize = 31;

constexpr TokenId digit(int d) noexcept { return kDigit0 + static_cast<TokenId>(d); }
constexpr bool is_digit(TokenId t) noexcept { return t >= kDigit0 && t < kDigit0 + 10; }
constexpr int digit_value(TokenId t) noexcept { return static_cast<int>(t - kDigit0); }
} // namespace tok

enum class SequenceRole { Prompt, Context, Response };

/// Ordered token ids with a role tag.
struct TokenSequence {
    std::vector<TokenId> ids;
    SequenceRole role = SequenceRole::Response;

    std::size_t size() const noexcept { return ids.size(); }
    bool empty() const noexcept { return ids.empty(); }
    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

std::string_view token_name(TokenId id);
/// Space-separated token names, e.g. "<bos> 1 7 + 2 5 mod 3 1 =".
std::string render_tokens(std::span<const TokenId> ids);
/// Digits of a non-negative integer as tokens, most significant first.
std::vector<TokenId> number_tokens(int value);

} // namespace mopd
