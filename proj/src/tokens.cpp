// SPDX-License-Identifier: Apache-2.0
#include "mopd/tokens.hpp"

#include <array>
#include <stdexcept>

namespace mopd {

namespace {
constexpr std::array<std::string_view, tok::kVocabSize> kNames = {
    "<bos>", "<eos>", "<ref>", "<peer-ok>", "<avoid>", "<end-block>", "⟨ans⟩",
    "⟨/ans⟩", "<feedback>", "<fb:ok>", "<fb:no-answer>", "<fb:parse-error>",
    "<fb:wrong-value>", "mod", "sort", "target", "=", "+", "*", "(", ")",
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};
} // namespace

std::string_view token_name(TokenId id)
{
    if (id >= kNames.size()) {
        return "<unk>";
    }
    return kNames[id];
}

std::string render_tokens(std::span<const TokenId> ids)
{
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) {
            out += ' ';
        }
        out += token_name(ids[i]);
    }
    return out;
}

std::vector<TokenId> number_tokens(int value)
{
    if (value < 0) {
        throw std::invalid_argument("number_tokens: negative value");
    }
    const std::string s = std::to_string(value);
    std::vector<TokenId> out;
    out.reserve(s.size());
    for (char c : s) {
        out.push_back(tok::digit(c - '0'));
    }
    return out;
}

} // namespace mopd
