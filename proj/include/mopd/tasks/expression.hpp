// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mopd/tokens.hpp"

namespace mopd::tasks {

enum class AstNodeType : std::uint8_t { Num = 0, Add = 1, Mul = 2, Paren = 3 };
inline constexpr std::size_t kAstNodeTypes = 4;

/// Parse tree of Expr := Term ('+' Term)*, Term := Factor ('*' Factor)*,
/// Factor := Num | '(' Expr ')'. '+' and '*' chains are left-associative.
class ExpressionAst {
public:
    struct Node {
        AstNodeType type;
        std::int64_t number = 0; // Num only
        std::int32_t left = -1;  // Add/Mul/Paren child
        std::int32_t right = -1; // Add/Mul
    };

    /// Node-type multiset, indexed by AstNodeType.
    std::array<std::uint32_t, kAstNodeTypes> node_counts() const noexcept;
    std::uint32_t count(AstNodeType t) const noexcept
    {
        return node_counts()[static_cast<std::size_t>(t)];
    }
    /// Evaluates with saturating 64-bit arithmetic (total on any tree).
    std::int64_t evaluate() const noexcept;
    /// Number literals in left-to-right order.
    std::vector<std::int64_t> literals() const;

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::int32_t root() const noexcept { return root_; }

private:
    friend class ExpressionParser;
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

/// Parses a token span (digits, '+', '*', '(', ')'). Any other token, a
/// dangling operator or unbalanced parentheses is a parse failure.
std::optional<ExpressionAst> parse_expression(std::span<const TokenId> tokens);
/// Text form, e.g. "2+3*4"; whitespace is ignored.
std::optional<ExpressionAst> parse_expression(std::string_view text);

/// Maps expression text onto tokens; nullopt on a character outside the grammar.
std::optional<std::vector<TokenId>> expression_tokens(std::string_view text);

} // namespace mopd::tasks
