// SPDX-License-Identifier: Apache-2.0
#include "mopd/model/policy_model.hpp"

#include <cmath>
#include <numeric>
#include <type_traits>

#include "mopd/numerics/kernels.hpp"

namespace mopd::model {

namespace kernels = numerics::kernels;

namespace {

constexpr double kNormEps = 1e-5;

Tensor random_tensor(numerics::Shape shape, double stddev, RngStream& rng)
{
    Tensor t(std::move(shape));
    for (double& v : t.values()) {
        v = static_cast<double>(static_cast<float>(stddev * rng.normal()));
    }
    return t;
}

} // namespace

void ModelConfig::validate() const
{
    if (vocab_size == 0 || width == 0 || layers == 0 || heads == 0 || max_seq_len == 0) {
        throw std::invalid_argument("model config: all extents must be positive");
    }
    if (width % heads != 0) {
        throw std::invalid_argument("model config: width " + std::to_string(width) +
                                    " is not divisible by head count " + std::to_string(heads));
    }
}

PolicyModel::PolicyModel(const ModelConfig& config)
    : config_(config)
{
    config_.validate();
    RngStream rng = RngStream::keyed({config.seed, 0x4D4F5044ULL});
    const std::size_t d = config.width;
    const std::size_t f = config.ffn_width();
    const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double ff_std = 1.0 / std::sqrt(static_cast<double>(f));
    const double resid = 1.0 / std::sqrt(2.0 * static_cast<double>(config.layers));

    token_embedding_ = random_tensor({config.vocab_size, d}, 0.5, rng);
    position_embedding_ = random_tensor({config.max_seq_len, d}, 0.5, rng);
    layers_.reserve(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
        Layer layer;
        layer.norm1 = Tensor({d}, 1.0);
        layer.wq = random_tensor({d, d}, in_std, rng);
        layer.wk = random_tensor({d, d}, in_std, rng);
        layer.wv = random_tensor({d, d}, in_std, rng);
        layer.wo = random_tensor({d, d}, in_std * resid, rng);
        layer.norm2 = Tensor({d}, 1.0);
        layer.w1 = random_tensor({d, f}, in_std, rng);
        layer.b1 = Tensor({f}, 0.0);
        layer.w2 = random_tensor({f, d}, ff_std * resid, rng);
        layer.b2 = Tensor({d}, 0.0);
        layers_.push_back(std::move(layer));
    }
    final_norm_ = Tensor({d}, 1.0);
    output_ = random_tensor({d, config.vocab_size}, in_std, rng);
}

std::vector<Tensor*> PolicyModel::parameters()
{
    std::vector<Tensor*> out{&token_embedding_, &position_embedding_};
    for (Layer& l : layers_) {
        for (Tensor* t : {&l.norm1, &l.wq, &l.wk, &l.wv, &l.wo, &l.norm2, &l.w1, &l.b1, &l.w2, &l.b2}) {
            out.push_back(t);
        }
    }
    out.push_back(&final_norm_);
    out.push_back(&output_);
    return out;
}

std::vector<const Tensor*> PolicyModel::parameters() const
{
    auto mut = const_cast<PolicyModel*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::size_t PolicyModel::parameter_count() const
{
    std::size_t n = 0;
    for (const Tensor* t : parameters()) {
        n += t->size();
    }
    return n;
}

void PolicyModel::zero_grad()
{
    for (Tensor* t : parameters()) {
        t->zero_grad();
    }
}

bool PolicyModel::bit_equal(const PolicyModel& other) const
{
    if (!(config_ == other.config_)) {
        return false;
    }
    const auto a = parameters();
    const auto b = other.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i]->same_values(*b[i])) {
            return false;
        }
    }
    return true;
}

template <class Self, class Leaf>
Var PolicyModel::forward_impl(Self& self, Tape& tape, std::span<const TokenId> tokens, Leaf&& leaf)
{
    const ModelConfig& cfg = self.config_;
    if (tokens.empty()) {
        throw std::invalid_argument("forward: empty token sequence");
    }
    if (tokens.size() > cfg.max_seq_len) {
        throw SequenceTooLong("forward: sequence of " + std::to_string(tokens.size()) +
                              " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    std::vector<std::size_t> ids(tokens.begin(), tokens.end());
    std::vector<std::size_t> pos(tokens.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});

    // Leaves are taken one statement at a time: the leaf-list overload
    // depends on parameters() order, and argument evaluation order is unspecified.
    const Var tok_emb = leaf(self.token_embedding_);
    const Var pos_emb = leaf(self.position_embedding_);
    Var x = tape.add(tape.gather_rows(tok_emb, ids), tape.gather_rows(pos_emb, pos));
    for (auto& layer : self.layers_) {
        const Var norm1 = leaf(layer.norm1);
        const Var wq = leaf(layer.wq);
        const Var wk = leaf(layer.wk);
        const Var wv = leaf(layer.wv);
        const Var wo = leaf(layer.wo);
        const Var norm2 = leaf(layer.norm2);
        const Var w1 = leaf(layer.w1);
        const Var b1 = leaf(layer.b1);
        const Var w2 = leaf(layer.w2);
        const Var b2 = leaf(layer.b2);
        Var h = tape.rmsnorm(x, norm1, kNormEps);
        Var a = tape.causal_attention(tape.matmul(h, wq), tape.matmul(h, wk), tape.matmul(h, wv), cfg.heads);
        x = tape.add(x, tape.matmul(a, wo));
        Var h2 = tape.rmsnorm(x, norm2, kNormEps);
        Var f = tape.gelu(tape.add_bias(tape.matmul(h2, w1), b1));
        f = tape.add_bias(tape.matmul(f, w2), b2);
        x = tape.add(x, f);
    }
    const Var final_norm = leaf(self.final_norm_);
    const Var output = leaf(self.output_);
    Var hf = tape.rmsnorm(x, final_norm, kNormEps);
    return tape.matmul(hf, output);
}

Var PolicyModel::forward(Tape& tape, std::span<const TokenId> tokens)
{
    return forward_impl(*this, tape, tokens, [&tape](Tensor& t) { return tape.parameter(t); });
}

Var PolicyModel::forward(Tape& tape, std::span<const TokenId> tokens) const
{
    return forward_impl(*this, tape, tokens,
                        [&tape](const Tensor& t) { return tape.constant_ref(t); });
}

Var PolicyModel::forward(Tape& tape, std::span<const TokenId> tokens,
                         std::span<const Var> leaves) const
{
    const std::size_t expected = 2 + 10 * layers_.size() + 2;
    if (leaves.size() != expected) {
        throw std::invalid_argument("forward: expected " + std::to_string(expected) +
                                    " parameter leaves, got " + std::to_string(leaves.size()));
    }
    // forward_impl touches parameters in checkpoint order.
    std::size_t next = 0;
    return forward_impl(*this, tape, tokens, [&](const Tensor&) { return leaves[next++]; });
}

FrozenModel clone_frozen(const PolicyModel& model)
{
    auto copy = std::make_shared<PolicyModel>(model);
    copy->zero_grad();
    for (Tensor* t : copy->parameters()) {
        t->drop_grad();
    }
    return copy;
}

DecodeSession::DecodeSession(const PolicyModel& model)
    : model_(model)
{
    const ModelConfig& cfg = model.config();
    const std::size_t d = cfg.width;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        keys_.emplace_back(numerics::Shape{cfg.max_seq_len, d});
        values_.emplace_back(numerics::Shape{cfg.max_seq_len, d});
    }
    x_.resize(d);
    h_.resize(d);
    q_.resize(d);
    attn_.resize(d);
    proj_.resize(d);
    ff_.resize(cfg.ffn_width());
    ffo_.resize(d);
    probs_.resize(cfg.max_seq_len);
    head_.resize(d / cfg.heads);
    logits_.resize(cfg.vocab_size);
}

std::span<const double> DecodeSession::push(TokenId token)
{
    const ModelConfig& cfg = model_.config();
    if (length_ >= cfg.max_seq_len) {
        throw SequenceTooLong("decode: sequence reached max_seq_len " +
                              std::to_string(cfg.max_seq_len));
    }
    if (token >= cfg.vocab_size) {
        throw std::out_of_range("decode: token id " + std::to_string(token) + " out of range");
    }
    const std::size_t d = cfg.width;
    const std::size_t hd = d / cfg.heads;
    const std::size_t pos = length_;
    const auto te = model_.token_embedding_.row(token);
    const auto pe = model_.position_embedding_.row(pos);
    for (std::size_t i = 0; i < d; ++i) {
        x_[i] = te[i] + pe[i];
    }
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const auto& layer = model_.layers_[l];
        kernels::rmsnorm(x_, layer.norm1.values(), kNormEps, h_);
        kernels::matvec(h_, layer.wq, q_);
        kernels::matvec(h_, layer.wk, keys_[l].row(pos));
        kernels::matvec(h_, layer.wv, values_[l].row(pos));
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            kernels::attention_head(q_, keys_[l].values().data(), values_[l].values().data(),
                                    pos + 1, d, h * hd, hd, probs_, head_);
            std::copy(head_.begin(), head_.end(), attn_.begin() + static_cast<std::ptrdiff_t>(h * hd));
        }
        kernels::matvec(attn_, layer.wo, proj_);
        for (std::size_t i = 0; i < d; ++i) {
            x_[i] = x_[i] + proj_[i];
        }
        kernels::rmsnorm(x_, layer.norm2.values(), kNormEps, h_);
        kernels::matvec(h_, layer.w1, ff_);
        for (std::size_t i = 0; i < ff_.size(); ++i) {
            ff_[i] = kernels::gelu(ff_[i] + layer.b1[i]);
        }
        kernels::matvec(ff_, layer.w2, ffo_);
        for (std::size_t i = 0; i < d; ++i) {
            x_[i] = x_[i] + (ffo_[i] + layer.b2[i]);
        }
    }
    kernels::rmsnorm(x_, model_.final_norm_.values(), kNormEps, h_);
    kernels::matvec(h_, model_.output_, logits_);
    length_ += 1;
    return logits_;
}

std::vector<double> next_token_logits(const PolicyModel& model, std::span<const TokenId> prefix)
{
    if (prefix.empty()) {
        throw std::invalid_argument("next_token_logits: empty prefix");
    }
    if (prefix.size() >= model.config().max_seq_len) {
        throw SequenceTooLong("next_token_logits: prefix of " + std::to_string(prefix.size()) +
                              " tokens leaves no room below max_seq_len " +
                              std::to_string(model.config().max_seq_len));
    }
    DecodeSession session(model);
    std::span<const double> logits;
    for (TokenId t : prefix) {
        logits = session.push(t);
    }
    return {logits.begin(), logits.end()};
}

Tensor target_log_distributions(const PolicyModel& model, std::span<const TokenId> conditioning,
                                std::span<const TokenId> target)
{
    if (target.empty()) {
        return Tensor();
    }
    if (conditioning.empty()) {
        throw std::invalid_argument("sequence_logprobs: conditioning must be nonempty");
    }
    if (conditioning.size() + target.size() > model.config().max_seq_len) {
        throw SequenceTooLong("sequence_logprobs: " + std::to_string(conditioning.size()) + " + " +
                              std::to_string(target.size()) + " tokens exceed max_seq_len " +
                              std::to_string(model.config().max_seq_len));
    }
    std::vector<TokenId> input(conditioning.begin(), conditioning.end());
    input.insert(input.end(), target.begin(), target.end() - 1);
    Tape tape(false);
    const Var logits = model.forward(tape, input);
    const Var rows = tape.slice_rows(logits, conditioning.size() - 1, target.size());
    const Var logp = tape.log_softmax_rows(rows);
    return tape.value(logp);
}

std::vector<double> sequence_logprobs(const PolicyModel& model,
                                      std::span<const TokenId> conditioning,
                                      std::span<const TokenId> target)
{
    const Tensor dists = target_log_distributions(model, conditioning, target);
    std::vector<double> out(target.size());
    for (std::size_t t = 0; t < target.size(); ++t) {
        if (target[t] >= model.config().vocab_size) {
            throw std::out_of_range("sequence_logprobs: target token out of range");
        }
        out[t] = dists.at(t, target[t]);
    }
    return out;
}

TokenId sample_token(std::span<const double> logits, double temperature, RngStream& rng)
{
    if (temperature < 0.0) {
        throw std::invalid_argument("sample_token: negative temperature");
    }
    if (temperature == 0.0) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.size(); ++i) {
            if (logits[i] > logits[best]) {
                best = i;
            }
        }
        return static_cast<TokenId>(best);
    }
    std::vector<double> scaled(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        scaled[i] = logits[i] / temperature;
    }
    kernels::log_softmax(scaled, scaled);
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        const double p = std::exp(scaled[i]);
        if (p > 0.0) {
            last = i;
        }
        cum += p;
        if (u < cum) {
            return static_cast<TokenId>(i);
        }
    }
    return static_cast<TokenId>(last);
}

std::vector<TokenId> sample_rollout(const PolicyModel& model, std::span<const TokenId> prompt,
                                    std::size_t max_response_len, double temperature,
                                    RngStream& rng)
{
    if (temperature < 0.0) {
        throw std::invalid_argument("sample_rollout: negative temperature");
    }
    if (prompt.empty()) {
        throw std::invalid_argument("sample_rollout: empty prompt");
    }
    if (prompt.size() + max_response_len > model.config().max_seq_len) {
        throw SequenceTooLong("sample_rollout: prompt of " + std::to_string(prompt.size()) +
                              " tokens plus response cap " + std::to_string(max_response_len) +
                              " exceeds max_seq_len");
    }
    DecodeSession session(model);
    std::span<const double> logits;
    for (TokenId t : prompt) {
        logits = session.push(t);
    }
    std::vector<TokenId> response;
    while (response.size() < max_response_len) {
        const TokenId next = sample_token(logits, temperature, rng);
        response.push_back(next);
        if (next == tok::kEos || response.size() == max_response_len) {
            break;
        }
        logits = session.push(next);
    }
    return response;
}

} // namespace mopd::model
