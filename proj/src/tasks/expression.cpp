// SPDX-License-Identifier: Apache-2.0
#include "mopd/tasks/expression.hpp"

#include <functional>
#include <limits>

namespace mopd::tasks {

namespace {

constexpr std::int64_t kMax = std::numeric_limits<std::int64_t>::max();
constexpr std::size_t kMaxLiteralDigits = 18;
constexpr std::size_t kMaxDepth = 256;

std::int64_t sat_add(std::int64_t a, std::int64_t b) noexcept
{
    std::int64_t r;
    return __builtin_add_overflow(a, b, &r) ? kMax : r;
}

std::int64_t sat_mul(std::int64_t a, std::int64_t b) noexcept
{
    std::int64_t r;
    return __builtin_mul_overflow(a, b, &r) ? kMax : r;
}

} // namespace

class ExpressionParser {
public:
    explicit ExpressionParser(std::span<const TokenId> tokens)
        : tokens_(tokens)
    {
    }

    std::optional<ExpressionAst> run()
    {
        if (tokens_.empty()) {
            return std::nullopt;
        }
        const std::int32_t root = expr(0);
        if (root < 0 || pos_ != tokens_.size()) {
            return std::nullopt;
        }
        ast_.root_ = root;
        return std::move(ast_);
    }

private:
    std::int32_t add(ExpressionAst::Node n)
    {
        ast_.nodes_.push_back(n);
        return static_cast<std::int32_t>(ast_.nodes_.size() - 1);
    }

    bool at(TokenId t) const { return pos_ < tokens_.size() && tokens_[pos_] == t; }

    std::int32_t expr(std::size_t depth)
    {
        std::int32_t lhs = term(depth);
        while (lhs >= 0 && at(tok::kPlus)) {
            ++pos_;
            const std::int32_t rhs = term(depth);
            if (rhs < 0) {
                return -1;
            }
            lhs = add({AstNodeType::Add, 0, lhs, rhs});
        }
        return lhs;
    }

    std::int32_t term(std::size_t depth)
    {
        std::int32_t lhs = factor(depth);
        while (lhs >= 0 && at(tok::kTimes)) {
            ++pos_;
            const std::int32_t rhs = factor(depth);
            if (rhs < 0) {
                return -1;
            }
            lhs = add({AstNodeType::Mul, 0, lhs, rhs});
        }
        return lhs;
    }

    std::int32_t factor(std::size_t depth)
    {
        if (depth > kMaxDepth || pos_ >= tokens_.size()) {
            return -1;
        }
        if (at(tok::kLParen)) {
            ++pos_;
            const std::int32_t inner = expr(depth + 1);
            if (inner < 0 || !at(tok::kRParen)) {
                return -1;
            }
            ++pos_;
            return add({AstNodeType::Paren, 0, inner, -1});
        }
        if (!tok::is_digit(tokens_[pos_])) {
            return -1;
        }
        std::int64_t value = 0;
        std::size_t digits = 0;
        while (pos_ < tokens_.size() && tok::is_digit(tokens_[pos_])) {
            if (++digits > kMaxLiteralDigits) {
                return -1;
            }
            value = value * 10 + tok::digit_value(tokens_[pos_]);
            ++pos_;
        }
        return add({AstNodeType::Num, value, -1, -1});
    }

    std::span<const TokenId> tokens_;
    std::size_t pos_ = 0;
    ExpressionAst ast_;
};

std::array<std::uint32_t, kAstNodeTypes> ExpressionAst::node_counts() const noexcept
{
    std::array<std::uint32_t, kAstNodeTypes> counts{};
    for (const Node& n : nodes_) {
        counts[static_cast<std::size_t>(n.type)] += 1;
    }
    return counts;
}

std::int64_t ExpressionAst::evaluate() const noexcept
{
    // Children always precede parents in nodes_, so one forward pass suffices.
    std::vector<std::int64_t> values(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        switch (n.type) {
        case AstNodeType::Num:
            values[i] = n.number;
            break;
        case AstNodeType::Add:
            values[i] = sat_add(values[n.left], values[n.right]);
            break;
        case AstNodeType::Mul:
            values[i] = sat_mul(values[n.left], values[n.right]);
            break;
        case AstNodeType::Paren:
            values[i] = values[n.left];
            break;
        }
    }
    return root_ < 0 ? 0 : values[root_];
}

std::vector<std::int64_t> ExpressionAst::literals() const
{
    std::vector<std::int64_t> out;
    std::function<void(std::int32_t)> walk = [&](std::int32_t i) {
        if (i < 0) {
            return;
        }
        const Node& n = nodes_[i];
        if (n.type == AstNodeType::Num) {
            out.push_back(n.number);
            return;
        }
        walk(n.left);
        walk(n.right);
    };
    walk(root_);
    return out;
}

std::optional<ExpressionAst> parse_expression(std::span<const TokenId> tokens)
{
    return ExpressionParser(tokens).run();
}

std::optional<std::vector<TokenId>> expression_tokens(std::string_view text)
{
    std::vector<TokenId> out;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            continue;
        }
        if (c >= '0' && c <= '9') {
            out.push_back(tok::digit(c - '0'));
        } else if (c == '+') {
            out.push_back(tok::kPlus);
        } else if (c == '*') {
            out.push_back(tok::kTimes);
        } else if (c == '(') {
            out.push_back(tok::kLParen);
        } else if (c == ')') {
            out.push_back(tok::kRParen);
        } else {
            return std::nullopt;
        }
    }
    return out;
}

std::optional<ExpressionAst> parse_expression(std::string_view text)
{
    const auto tokens = expression_tokens(text);
    if (!tokens) {
        return std::nullopt;
    }
    return parse_expression(*tokens);
}

} // namespace mopd::tasks
