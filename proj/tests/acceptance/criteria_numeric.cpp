// SPDX-License-Identifier: Apache-2.0
// Gradient fidelity, divergence properties, metric oracles, loss recomputation.
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "mopd/analysis/signal_metrics.hpp"
#include "mopd/distill/divergence.hpp"
#include "mopd/distill/train_step.hpp"
#include "mopd/numerics/gradcheck.hpp"
#include "support.hpp"

namespace acceptance {

namespace {

using namespace mopd;
using distill::DivergenceKind;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::array<DivergenceKind, 3> kKinds = {DivergenceKind::ForwardKL, DivergenceKind::ReverseKL,
                                                  DivergenceKind::JensenShannon};

std::vector<TokenId> random_response(RngStream& gen, std::size_t max_len)
{
    std::vector<TokenId> out(1 + gen.below(max_len));
    for (auto& t : out) {
        t = static_cast<TokenId>(gen.below(tok::kVocabSize));
    }
    return out;
}

/// One scored group mixing canonical and random responses.
rollout::RolloutGroup random_group(const tasks::TaskSpec& task, const tasks::ProblemInstance& inst,
                                   std::size_t n, RngStream& gen)
{
    rollout::RolloutGroup g;
    g.prompt_id = inst.id;
    for (std::size_t i = 0; i < n; ++i) {
        TokenSequence seq;
        seq.ids = gen.below(2) == 0 ? inst.canonical_response : random_response(gen, 5);
        g.rollouts.push_back(seq);
    }
    rollout::score_and_partition(g, task, inst, 0.5);
    return g;
}

peercontext::ContextVariant random_variant(RngStream& gen)
{
    switch (gen.below(4)) {
    case 0:
        return peercontext::ContextVariant::contrastive();
    case 1:
        return peercontext::ContextVariant::positive_only();
    case 2:
        return peercontext::ContextVariant::gated(true, gen.below(2) == 0);
    default:
        return peercontext::ContextVariant::gated(false, true);
    }
}

Outcome gradient_fidelity()
{
    RngStream gen(0xC1);
    double worst = 0.0;
    std::size_t configs = 0, coordinates = 0, failed = 0;
    std::string first_failure;
    while (configs < 20) {
        model::ModelConfig mc;
        mc.width = gen.below(2) == 0 ? 4 : 8;
        mc.heads = mc.width == 4 ? 1 : 2;
        mc.layers = gen.below(4) == 0 ? 2 : 1;
        mc.max_seq_len = 40;
        mc.seed = gen.next_u64();
        model::PolicyModel student(mc);
        const model::PolicyModel teacher = student; // the self-teacher snapshot

        tasks::TaskSpec task;
        task.kind = gen.below(2) == 0 ? tasks::TaskKind::ModAdd : tasks::TaskKind::Sort;
        task.modulus = 7;
        task.list_length = 3;

        distill::TrainConfig cfg;
        cfg.method = distill::Method::MOPD;
        cfg.loss.kind = kKinds[gen.below(3)];
        const std::size_t topk[] = {2, 5, 31};
        cfg.loss.top_k = topk[gen.below(3)];
        cfg.loss.alpha = gen.uniform();
        cfg.variant = random_variant(gen);
        cfg.selection.success_count = 1 + gen.below(3);
        cfg.selection.failure_count = gen.below(3);
        cfg.selection.policy = gen.below(2) == 0 ? peercontext::SelectionPolicy::FirstByIndex
                                                 : peercontext::SelectionPolicy::UniformRandom;
        cfg.context_budget = 12 + gen.below(12);

        distill::PreparedBatch batch;
        const std::size_t prompts = 1 + gen.below(2);
        const std::size_t n = 2 + gen.below(3);
        for (std::size_t b = 0; b < prompts; ++b) {
            batch.instances.push_back(tasks::generate_instance(task, gen));
            batch.groups.push_back(random_group(task, batch.instances.back(), n, gen));
        }
        distill::prepare_batch(batch, cfg, gen.next_u64(), 0);
        bool has_context = false;
        for (const auto& row : batch.contexts) {
            for (const auto& c : row) {
                has_context = has_context || !c.empty();
            }
        }
        if (!has_context) {
            continue; // the criterion asks for the peer-context path
        }

        const numerics::LossBuilder build = [&](numerics::Tape& tape, std::span<const numerics::Var> leaves) {
            return distill::batch_objective(tape, batch, distill::leaf_forward(student, leaves), &teacher, cfg);
        };
        auto params = student.parameters();
        const auto report = numerics::gradcheck(build, params, 1e-6);
        ++configs;
        coordinates += report.coordinates;
        worst = std::max(worst, report.max_relative_error);
        if (!report.passed(1e-4)) {
            ++failed;
            if (first_failure.empty()) {
                first_failure = cat(" first failure: config ", configs, " err ", report.max_relative_error,
                                    " analytic ", report.worst_analytic, " numeric ", report.worst_numeric, " ",
                                    report.diagnostic);
            }
        }
    }
    return {failed == 0, cat(configs, " configs, ", coordinates, " coordinates, max rel err ", worst,
                             " (tol 1e-4)", first_failure)};
}

std::vector<double> random_log_distribution(RngStream& gen, std::size_t v, bool allow_zero)
{
    std::vector<double> logits(v);
    const double scale = 0.1 + 8.0 * gen.uniform();
    for (auto& x : logits) {
        x = scale * gen.normal();
    }
    if (allow_zero) {
        for (auto& x : logits) {
            if (gen.below(6) == 0) {
                x = kNegInf;
            }
        }
        logits[gen.below(v)] = scale * gen.normal(); // keep some mass
    }
    double mx = kNegInf;
    for (double x : logits) {
        mx = std::max(mx, x);
    }
    double z = 0.0;
    for (double x : logits) {
        z += std::exp(x - mx);
    }
    const double lse = mx + std::log(z);
    for (auto& x : logits) {
        x -= lse;
    }
    return logits;
}

bool bit_equal(const distill::DivergenceValue& a, const distill::DivergenceValue& b)
{
    auto same = [](double x, double y) { return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y); };
    if (!same(a.value, b.value) || a.grad.size() != b.grad.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.grad.size(); ++i) {
        if (!same(a.grad[i], b.grad[i])) {
            return false;
        }
    }
    return true;
}

Outcome divergence_properties()
{
    RngStream gen(0xC2);
    std::size_t negative = 0, self_nonzero = 0, asymmetric = 0, above_bound = 0, topk_mismatch = 0;
    double worst_self = 0.0, worst_sym = 0.0, max_js = 0.0;
    for (int pair = 0; pair < 10000; ++pair) {
        const std::size_t v = 2 + gen.below(39);
        const bool zeros = gen.below(4) == 0;
        const auto s = random_log_distribution(gen, v, zeros);
        const auto t = random_log_distribution(gen, v, zeros);
        const std::size_t k = 1 + gen.below(v);
        for (auto kind : kKinds) {
            const auto full = distill::full_support_divergence(kind, s, t);
            const auto restricted = distill::divergence(kind, s, t, k);
            if (!(full.value >= 0.0) || !(restricted.value >= 0.0)) {
                ++negative;
            }
            for (const auto& p : {s, t}) {
                const double a = distill::full_support_divergence(kind, p, p).value;
                const double b = distill::divergence(kind, p, p, k).value;
                worst_self = std::max({worst_self, std::abs(a), std::abs(b)});
                if (!(std::abs(a) <= 1e-9) || !(std::abs(b) <= 1e-9)) {
                    ++self_nonzero;
                }
            }
            if (!bit_equal(distill::divergence(kind, s, t, v), full) ||
                !bit_equal(distill::divergence(kind, s, t, v + 7), full)) {
                ++topk_mismatch;
            }
            if (kind == DivergenceKind::JensenShannon) {
                const double back = distill::full_support_divergence(kind, t, s).value;
                worst_sym = std::max(worst_sym, std::abs(full.value - back));
                max_js = std::max(max_js, full.value);
                if (!(std::abs(full.value - back) <= 1e-9)) {
                    ++asymmetric;
                }
                if (!(full.value <= std::numbers::ln2 + 1e-9) || !(restricted.value <= std::numbers::ln2 + 1e-9)) {
                    ++above_bound;
                }
            }
        }
    }
    const bool pass = negative == 0 && self_nonzero == 0 && asymmetric == 0 && above_bound == 0 && topk_mismatch == 0;
    return {pass, cat("10000 pairs x 3 kinds: negative ", negative, ", |D(p||p)| max ", worst_self,
                      ", JS asymmetry max ", worst_sym, ", JS max ", max_js, " (ln2 ", std::numbers::ln2,
                      "), top-k=|V| bit mismatches ", topk_mismatch)};
}

// Brute-force O(n^2) oracles.

double oracle_pearson(std::span<const double> x, std::span<const double> y, bool& defined)
{
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    defined = sxx > 0 && syy > 0;
    return defined ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0) : 0.0;
}

std::optional<double> opt(bool defined, double v)
{
    return defined ? std::optional<double>(v) : std::nullopt;
}

std::vector<double> oracle_ranks(std::span<const double> x)
{
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            less += x[j] < x[i];
            equal += x[j] == x[i];
        }
        r[i] = 1.0 + less + (equal - 1.0) / 2.0;
    }
    return r;
}

std::optional<double> oracle_spearman(std::span<const double> s, std::span<const double> r)
{
    const auto rs = oracle_ranks(s), rr = oracle_ranks(r);
    bool defined = false;
    const double v = oracle_pearson(rs, rr, defined);
    return opt(defined, v);
}

std::optional<double> oracle_kendall(std::span<const double> s, std::span<const double> r)
{
    double c = 0, d = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = i + 1; j < s.size(); ++j) {
            const double p = (s[i] - s[j]) * (r[i] - r[j]);
            c += p > 0;
            d += p < 0;
        }
    }
    return opt(c + d > 0, (c - d) / (c + d));
}

std::optional<double> oracle_pairwise(std::span<const double> s, std::span<const double> r)
{
    double good = 0, total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = i + 1; j < s.size(); ++j) {
            if (r[i] != r[j]) {
                total += 1;
                good += (s[i] - s[j]) * (r[i] - r[j]) > 0;
            }
        }
    }
    return opt(total > 0, good / total);
}

std::optional<double> oracle_auc(std::span<const double> s, std::span<const double> r)
{
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (r[i] >= 0.5 && r[j] < 0.5) {
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
    }
    return opt(pairs > 0, wins / pairs);
}

bool close(const std::optional<double>& a, const std::optional<double>& b, double tol, double& worst)
{
    if (a.has_value() != b.has_value()) {
        worst = INFINITY;
        return false;
    }
    if (!a) {
        return true;
    }
    worst = std::max(worst, std::abs(*a - *b));
    return std::abs(*a - *b) <= tol;
}

Outcome metric_oracles()
{
    RngStream gen(0xC3);
    std::size_t mismatches = 0, undefined = 0;
    double worst = 0.0;
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t n = 2 + gen.below(30);
        std::vector<double> s(n), r(n);
        const bool coarse = gen.below(2) == 0;
        const bool graded = gen.below(3) == 0;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = coarse ? static_cast<double>(gen.below(4)) - 1.5 : -3.0 * gen.uniform();
            r[i] = graded ? 0.5 * static_cast<double>(gen.below(3)) : static_cast<double>(gen.below(2));
        }
        if (!coarse && n > 3) {
            s[n - 1] = s[0]; // a tie even in continuous scores
        }
        std::vector<double> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = r[i] >= 0.5 ? 1.0 : 0.0;
        }
        bool pb_defined = false;
        const double pb = oracle_pearson(s, labels, pb_defined);
        double brier = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-s[i]));
            brier += (p - r[i]) * (p - r[i]);
        }
        brier /= static_cast<double>(n);

        const std::optional<double> got[] = {analysis::spearman(s, r), analysis::kendall(s, r),
                                             analysis::pairwise_accuracy(s, r), analysis::success_auc(s, r),
                                             analysis::point_biserial(s, labels), analysis::brier_sigmoid(s, r)};
        const std::optional<double> want[] = {oracle_spearman(s, r), oracle_kendall(s, r), oracle_pairwise(s, r),
                                              oracle_auc(s, r),      opt(pb_defined, pb),  brier};
        for (std::size_t m = 0; m < 6; ++m) {
            if (!close(got[m], want[m], 1e-12, worst)) {
                ++mismatches;
            }
            undefined += !want[m].has_value();
        }
    }
    return {mismatches == 0, cat("200 instances with ties, 6 metrics: ", mismatches, " mismatches, max |diff| ",
                                 worst, " (tol 1e-12), ", undefined, " undefined cells agreed")};
}

// Independent full-support divergence on probabilities.
double oracle_divergence(DivergenceKind kind, const std::vector<double>& p, const std::vector<double>& q)
{
    auto kl = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i] > 0) {
                s += a[i] * std::log(a[i] / b[i]);
            }
        }
        return s;
    };
    switch (kind) {
    case DivergenceKind::ReverseKL:
        return kl(p, q);
    case DivergenceKind::ForwardKL:
        return kl(q, p);
    case DivergenceKind::JensenShannon: {
        std::vector<double> m(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = 0.5 * (p[i] + q[i]);
        }
        return 0.5 * kl(p, m) + 0.5 * kl(q, m);
    }
    }
    return 0.0;
}

std::vector<double> softmax_of(std::span<const double> logits)
{
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (auto& x : p) {
        x /= z;
    }
    return p;
}

Outcome loss_recomputation()
{
    model::ModelConfig mc;
    mc.width = 16;
    mc.heads = 2;
    mc.layers = 1;
    mc.max_seq_len = 64;
    mc.seed = 44;
    model::PolicyModel student(mc);
    const model::PolicyModel teacher = student;
    tasks::TaskSpec task;
    task.kind = tasks::TaskKind::ModAdd;

    RngStream gen(0xC4);
    distill::PreparedBatch batch;
    const std::vector<std::vector<TokenId>> responses = {
        {tok::kAnsOpen, tok::digit(3), tok::kAnsClose},
        {tok::kAnsOpen, tok::digit(8), tok::kAnsClose},
        {tok::kAnsOpen, tok::digit(1), tok::kEos},
        {tok::digit(5), tok::kAnsClose, tok::kEos},
    };
    for (std::size_t b = 0; b < 2; ++b) {
        batch.instances.push_back(tasks::generate_instance(task, gen));
        rollout::RolloutGroup g;
        g.prompt_id = batch.instances.back().id;
        for (std::size_t i = 0; i < 2; ++i) {
            g.rollouts.push_back({responses[2 * b + i], SequenceRole::Response});
        }
        const std::vector<double> rewards = {1.0, 0.0}; // one success, one failure per prompt
        rollout::partition(g, rewards, 0.5);
        batch.groups.push_back(g);
    }

    double worst = 0.0;
    std::string detail;
    for (auto kind : kKinds) {
        distill::TrainConfig cfg;
        cfg.method = distill::Method::MOPD;
        cfg.loss.kind = kind;
        cfg.loss.alpha = 1.0;
        prepare_batch(batch, cfg, 9, 0);

        double oracle = 0.0;
        for (std::size_t b = 0; b < 2; ++b) {
            const auto& prompt = batch.instances[b].prompt;
            double group = 0.0;
            for (std::size_t i = 0; i < 2; ++i) {
                const auto& y = batch.groups[b].rollouts[i].ids;
                const auto& ctx = batch.contexts[b][i].tokens;
                for (std::size_t t = 0; t < y.size(); ++t) {
                    std::vector<TokenId> s_prefix(prompt.begin(), prompt.end());
                    s_prefix.insert(s_prefix.end(), y.begin(), y.begin() + static_cast<std::ptrdiff_t>(t));
                    std::vector<TokenId> t_prefix(prompt.begin(), prompt.end());
                    t_prefix.insert(t_prefix.end(), ctx.begin(), ctx.end());
                    t_prefix.insert(t_prefix.end(), y.begin(), y.begin() + static_cast<std::ptrdiff_t>(t));
                    const auto p = softmax_of(model::next_token_logits(student, s_prefix));
                    const auto q = softmax_of(model::next_token_logits(teacher, t_prefix));
                    group += oracle_divergence(kind, p, q);
                }
            }
            oracle += group / 2.0;
        }
        oracle /= 2.0;

        numerics::Tape tape(false);
        distill::ObjectiveParts parts;
        distill::batch_objective(tape, batch, distill::trainable_forward(student), &teacher, cfg, &parts);
        const auto stepped = distill::accumulate_batch_gradients(batch, student, &teacher, cfg);
        student.zero_grad();
        const double e = std::max(std::abs(parts.total - oracle), std::abs(stepped.total - oracle));
        worst = std::max(worst, e);
        detail += cat(distill::divergence_name(kind), " oracle ", oracle, " step ", stepped.total, "; ");
    }
    return {worst <= 1e-6, cat(detail, "max |diff| ", worst, " (tol 1e-6)")};
}

} // namespace

std::vector<Criterion> numeric_criteria()
{
    return {
        {1, "gradcheck over the full loss graph with peer context", 60.0, gradient_fidelity},
        {2, "divergence properties on 10,000 random pairs", 60.0, divergence_properties},
        {3, "rank and calibration metrics match brute-force oracles", 30.0, metric_oracles},
        {4, "micro-batch step loss equals the hand-recomputed average", 60.0, loss_recomputation},
    };
}

} // namespace acceptance
