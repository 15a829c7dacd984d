// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "mopd/distill/divergence.hpp"
#include "mopd/distill/losses.hpp"
#include "mopd/distill/train_step.hpp"

namespace {

using namespace mopd;
using namespace mopd::distill;

std::vector<double> logs(std::initializer_list<double> p)
{
    std::vector<double> out;
    for (double v : p) {
        out.push_back(std::log(v));
    }
    return out;
}

double kl(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] > 0 ? a[i] * std::log(a[i] / b[i]) : 0.0;
    }
    return s;
}

TEST(Divergence, HandComputedValues)
{
    const std::vector<double> p{0.5, 0.5}, q{0.9, 0.1}, m{0.7, 0.3};
    const auto lp = logs({0.5, 0.5}), lq = logs({0.9, 0.1});
    EXPECT_NEAR(full_support_divergence(DivergenceKind::ReverseKL, lp, lq).value, kl(p, q), 1e-14);
    EXPECT_NEAR(full_support_divergence(DivergenceKind::ForwardKL, lp, lq).value, kl(q, p), 1e-14);
    EXPECT_NEAR(full_support_divergence(DivergenceKind::JensenShannon, lp, lq).value,
                0.5 * (kl(p, m) + kl(q, m)), 1e-14);
}

TEST(Divergence, GradientMatchesFiniteDifferences)
{
    RngStream rng(4);
    for (auto kind : {DivergenceKind::ForwardKL, DivergenceKind::ReverseKL, DivergenceKind::JensenShannon}) {
        for (std::size_t k : {2ul, 4ul, 6ul}) {
            std::vector<double> s(6), t(6);
            for (std::size_t i = 0; i < 6; ++i) {
                s[i] = rng.normal();
                t[i] = rng.normal();
            }
            const auto d = divergence(kind, s, t, k);
            for (std::size_t i = 0; i < 6; ++i) {
                auto hi = s, lo = s;
                hi[i] += 1e-6;
                lo[i] -= 1e-6;
                const double fd = (divergence(kind, hi, t, k).value - divergence(kind, lo, t, k).value) / 2e-6;
                EXPECT_NEAR(d.grad[i], fd, 1e-7) << divergence_name(kind) << " k=" << k << " i=" << i;
            }
        }
    }
}

TEST(Divergence, TopKKeepsTeacherTopTokensPlusResidual)
{
    const auto lp = logs({0.1, 0.2, 0.3, 0.4});
    const auto lq = logs({0.4, 0.3, 0.2, 0.1});
    // Teacher top-2 is {0, 1}; residual buckets are 0.7 (student) and 0.3 (teacher).
    const std::vector<double> p{0.1, 0.2, 0.7}, q{0.4, 0.3, 0.3};
    EXPECT_NEAR(divergence(DivergenceKind::ReverseKL, lp, lq, 2).value, kl(p, q), 1e-14);
    const auto full = full_support_divergence(DivergenceKind::JensenShannon, lp, lq);
    const auto big = divergence(DivergenceKind::JensenShannon, lp, lq, 100);
    EXPECT_EQ(full.value, big.value);
    EXPECT_EQ(full.grad, big.grad);
}

TEST(Divergence, ZeroMassAndInvalidInputs)
{
    const double inf = std::numeric_limits<double>::infinity();
    const std::vector<double> s{std::log(0.5), std::log(0.5), -inf};
    const std::vector<double> t{std::log(0.25), std::log(0.25), std::log(0.5)};
    EXPECT_NEAR(divergence(DivergenceKind::ReverseKL, s, t, 3).value, std::log(2.0), 1e-14);
    EXPECT_EQ(divergence(DivergenceKind::JensenShannon, s, s, 3).value, 0.0);
    EXPECT_THROW(divergence(DivergenceKind::ReverseKL, std::vector<double>{0.0, NAN}, t, 3), std::invalid_argument);
    EXPECT_THROW(divergence(DivergenceKind::ReverseKL, std::vector<double>{0.0, inf, 0.0}, t, 3),
                 std::invalid_argument);
    EXPECT_THROW(parse_divergence("wasserstein"), std::invalid_argument);
    EXPECT_EQ(parse_divergence(divergence_name(DivergenceKind::JensenShannon)), DivergenceKind::JensenShannon);
}

TEST(Advantages, GroupRelative)
{
    const auto a = grpo_advantages(std::vector<double>{1, 0, 1, 0});
    EXPECT_EQ(a, (std::vector<double>{1, -1, 1, -1}));
    const auto b = grpo_advantages(std::vector<double>{1, 0, 0, 0});
    EXPECT_NEAR(b[0], std::sqrt(3.0), 1e-12);
    EXPECT_NEAR(b[1], -1.0 / std::sqrt(3.0), 1e-12);
    EXPECT_EQ(grpo_advantages(std::vector<double>{1, 1, 1}), (std::vector<double>{0, 0, 0}));
}

TEST(Methods, NamesRoundTrip)
{
    for (auto m : {Method::MOPD, Method::OPDSingle, Method::SDPOLike, Method::GRPO, Method::GKD, Method::OPDTS,
                   Method::MOPDTS}) {
        EXPECT_EQ(parse_method(method_name(m)), m);
    }
    EXPECT_TRUE(uses_external_teacher(Method::MOPDTS));
    EXPECT_FALSE(uses_external_teacher(Method::MOPD));
    EXPECT_THROW(parse_method("PPO"), std::invalid_argument);
}

struct Fixture {
    model::PolicyModel student;
    tasks::TaskSpec task;
    TrainConfig config;
    PreparedBatch batch;

    explicit Fixture(Method method)
        : student(model_config())
    {
        task.kind = tasks::TaskKind::Sort;
        task.list_length = 3;
        config.method = method;
        config.sampling.group_size = 4;
        config.sampling.max_response_len = 8;
        RngStream rng(7);
        for (int b = 0; b < 2; ++b) {
            auto inst = tasks::generate_instance(task, rng);
            rollout::RolloutGroup g;
            g.prompt_id = inst.id;
            for (int i = 0; i < 4; ++i) {
                auto resp = inst.canonical_response;
                if (i % 2 == 1) {
                    resp[1] = tok::kPlus;
                }
                g.rollouts.push_back(TokenSequence{resp});
            }
            rollout::score_and_partition(g, task, inst, 0.5);
            batch.instances.push_back(std::move(inst));
            batch.groups.push_back(std::move(g));
        }
        prepare_batch(batch, config, 1, 0);
    }

    static model::ModelConfig model_config()
    {
        model::ModelConfig c;
        c.width = 8;
        c.layers = 1;
        c.heads = 2;
        c.max_seq_len = 64;
        return c;
    }

    ObjectiveParts objective()
    {
        Tape tape(false);
        ObjectiveParts parts;
        batch_objective(tape, batch, trainable_forward(student), &student, config, &parts);
        return parts;
    }
};

TEST(BatchObjective, SingleRolloutSelfTeacherHasNoDistillationSignal)
{
    Fixture f(Method::OPDSingle);
    for (const auto& row : f.batch.contexts) {
        for (const auto& c : row) {
            EXPECT_TRUE(c.empty());
        }
    }
    EXPECT_NEAR(f.objective().distill, 0.0, 1e-12);
}

TEST(BatchObjective, PeerContextGivesPositiveDistillation)
{
    Fixture f(Method::MOPD);
    for (const auto& row : f.batch.contexts) {
        for (const auto& c : row) {
            EXPECT_EQ(c.rung, peercontext::Rung::Contrastive);
        }
    }
    const auto parts = f.objective();
    EXPECT_GT(parts.distill, 0.0);
    EXPECT_NEAR(parts.total, 0.5 * parts.distill + 0.5 * parts.policy, 1e-12);
    EXPECT_EQ(parts.rollouts, 8u);
}

TEST(BatchObjective, PerRolloutAccumulationMatchesOneTape)
{
    Fixture f(Method::MOPD);
    const model::PolicyModel teacher = f.student;
    auto params = f.student.parameters();
    numerics::zero_grads(params);
    {
        Tape tape;
        tape.backward(batch_objective(tape, f.batch, trainable_forward(f.student), &teacher, f.config));
    }
    std::vector<std::vector<double>> one;
    for (auto* p : params) {
        one.emplace_back(p->grad().begin(), p->grad().end());
    }
    numerics::zero_grads(params);
    accumulate_batch_gradients(f.batch, f.student, &teacher, f.config);
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < one[i].size(); ++j) {
            ASSERT_NEAR(params[i]->grad()[j], one[i][j], 1e-12);
        }
    }
}

TEST(BatchObjective, GrpoIgnoresUniformGroups)
{
    Fixture f(Method::GRPO);
    for (auto& g : f.batch.groups) {
        rollout::partition(g, std::vector<double>(g.size(), 1.0), 0.5);
    }
    prepare_batch(f.batch, f.config, 1, 0);
    EXPECT_EQ(f.objective().policy, 0.0);
}

TEST(Trainer, SameSeedSameWeights)
{
    auto run = [] {
        Fixture f(Method::MOPD);
        Trainer trainer(f.student, f.config, f.task, 3);
        for (int s = 0; s < 2; ++s) {
            trainer.step(f.batch.instances);
        }
        EXPECT_EQ(trainer.steps_done(), 2u);
        return f.student;
    };
    EXPECT_TRUE(run().bit_equal(run()));
}

TEST(TrainConfig, Validation)
{
    TrainConfig c;
    c.loss.alpha = 1.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.loss.top_k = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    EXPECT_EQ(c.effective_budget(), 2 * c.sampling.max_response_len);
}

} // namespace
