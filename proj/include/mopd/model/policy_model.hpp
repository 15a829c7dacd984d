// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "mopd/numerics/tape.hpp"
#include "mopd/numerics/tensor.hpp"
#include "mopd/random.hpp"
#include "mopd/tokens.hpp"

namespace mopd::model {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

struct ModelConfig {
    std::size_t vocab_size = tok::kVocabSize;
    std::size_t width = 64;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t max_seq_len = 512;
    std::uint64_t seed = 1;

    std::size_t ffn_width() const noexcept { return 4 * width; }
    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class SequenceTooLong : public std::length_error {
public:
    using std::length_error::length_error;
};

/// Small pre-norm causal transformer. The parameter order returned by
/// parameters() is the checkpoint order: token embedding, position
/// embedding, per layer (norm1, wq, wk, wv, wo, norm2, w1, b1, w2, b2),
/// final norm, output projection.
class PolicyModel {
public:
    explicit PolicyModel(const ModelConfig& config);

    const ModelConfig& config() const noexcept { return config_; }

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    std::size_t parameter_count() const;

    /// Logits [T, V] for every position. Trainable parameters are registered
    /// as tape leaves; gradients land in their gradient slots.
    Var forward(Tape& tape, std::span<const TokenId> tokens);
    /// Same computation with parameters held constant.
    Var forward(Tape& tape, std::span<const TokenId> tokens) const;
    /// Uses caller-supplied leaves, one per parameter in parameters() order.
    Var forward(Tape& tape, std::span<const TokenId> tokens, std::span<const Var> leaves) const;

    void zero_grad();
    bool bit_equal(const PolicyModel& other) const;

private:
    struct Layer {
        Tensor norm1, wq, wk, wv, wo, norm2, w1, b1, w2, b2;
    };
    friend class DecodeSession;

    template <class Self, class Leaf>
    static Var forward_impl(Self& self, Tape& tape, std::span<const TokenId> tokens, Leaf&& leaf);

    ModelConfig config_;
    Tensor token_embedding_;
    Tensor position_embedding_;
    std::vector<Layer> layers_;
    Tensor final_norm_;
    Tensor output_;
};

/// Read-only snapshot; shareable across readers.
using FrozenModel = std::shared_ptr<const PolicyModel>;

FrozenModel clone_frozen(const PolicyModel& model);

/// Incremental decoder with a key/value cache. Produces logits bit-identical
/// to PolicyModel::forward at the same positions.
class DecodeSession {
public:
    explicit DecodeSession(const PolicyModel& model);
    /// Appends a token and returns next-token logits.
    std::span<const double> push(TokenId token);
    std::size_t length() const noexcept { return length_; }

private:
    const PolicyModel& model_;
    std::size_t length_ = 0;
    std::vector<Tensor> keys_, values_;
    std::vector<double> x_, h_, q_, attn_, proj_, ff_, ffo_, probs_, head_, logits_;
};

/// Next-token logits after `prefix`; 1 <= |prefix| < max_seq_len.
std::vector<double> next_token_logits(const PolicyModel& model, std::span<const TokenId> prefix);

/// Entry t is log p(target[t] | conditioning, target[<t]). Requires a
/// nonempty conditioning and |conditioning| + |target| <= max_seq_len.
std::vector<double> sequence_logprobs(const PolicyModel& model,
                                      std::span<const TokenId> conditioning,
                                      std::span<const TokenId> target);

/// Full next-token log-distributions [|target|, V] at each target position.
Tensor target_log_distributions(const PolicyModel& model, std::span<const TokenId> conditioning,
                                std::span<const TokenId> target);

/// Samples a response after `prompt`, stopping after EOS or at
/// max_response_len tokens. Temperature 0 decodes greedily (lowest index on ties).
std::vector<TokenId> sample_rollout(const PolicyModel& model, std::span<const TokenId> prompt,
                                    std::size_t max_response_len, double temperature,
                                    RngStream& rng);

/// Draws one index from softmax(logits / temperature).
TokenId sample_token(std::span<const double> logits, double temperature, RngStream& rng);

} // namespace mopd::model
