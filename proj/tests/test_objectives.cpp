// Copyright 2026 Speech-Mamba C++ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "speechmamba/nn.hpp"
#include "speechmamba/objectives.hpp"
#include "test_util.hpp"

namespace {

using sm::IntTensor;
using sm::Tensor;

// Brute-force CTC oracle: enumerate every alignment path of length T over
// V+1 classes, collapse it (merge repeats, then drop blanks), and sum the
// probabilities of paths that collapse to the target.
double ctc_oracle(const std::vector<double>& log_probs, std::int64_t T, std::int64_t K,
                  const std::vector<std::int64_t>& target) {
    double total = 0.0;
    std::vector<std::int64_t> path(static_cast<std::size_t>(T), 0);
    std::int64_t n_paths = 1;
    for (std::int64_t t = 0; t < T; ++t) n_paths *= K;
    for (std::int64_t p = 0; p < n_paths; ++p) {
        std::int64_t rem = p;
        for (std::int64_t t = 0; t < T; ++t) {
            path[t] = rem % K;
            rem /= K;
        }
        std::vector<std::int64_t> collapsed;
        for (std::int64_t t = 0; t < T; ++t) {
            if (t > 0 && path[t] == path[t - 1]) continue;
            if (path[t] != 0) collapsed.push_back(path[t]);
        }
        if (collapsed != target) continue;
        double lp = 0.0;
        for (std::int64_t t = 0; t < T; ++t) lp += log_probs[t * K + path[t]];
        total += std::exp(lp);
    }
    return -std::log(total);
}

Tensor random_log_probs(std::int64_t B, std::int64_t T, std::int64_t K, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> logits(static_cast<std::size_t>(B * T * K));
    for (auto& v : logits) v = nd(rng);
    Tensor raw = Tensor::from_data({B, T, K}, std::move(logits));
    sm::NoGradGuard ng;
    return sm::log_softmax_lastdim(raw);
}

TEST(CtcLoss, SingleFrameSingleLabel) {
    // T'=1 with target [a]: only the one-symbol path exists, loss = -log p_1(a).
    std::mt19937_64 rng(11);
    Tensor lp = random_log_probs(1, 1, 4, rng);
    Tensor loss = sm::ctc_loss(lp, {{2}}, {1});
    EXPECT_NEAR(loss.item(), -lp.at({0, 0, 2}), 1e-12);
}

TEST(CtcLoss, SingleFrameTwoLabelsThrows) {
    std::mt19937_64 rng(12);
    Tensor lp = random_log_probs(1, 1, 4, rng);
    EXPECT_THROW(sm::ctc_loss(lp, {{1, 2}}, {1}), sm::ValueError);
}

TEST(CtcLoss, RepeatedLabelNeedsBlankFrame) {
    std::mt19937_64 rng(13);
    Tensor lp2 = random_log_probs(1, 2, 3, rng);
    EXPECT_THROW(sm::ctc_loss(lp2, {{1, 1}}, {2}), sm::ValueError);
    Tensor lp3 = random_log_probs(1, 3, 3, rng);
    EXPECT_NO_THROW(sm::ctc_loss(lp3, {{1, 1}}, {3}));
}

TEST(CtcLoss, FourFramesMatchesFullEnumeration) {
    // T'=4, V=2: all 3^4 = 81 paths enumerated by the oracle.
    std::mt19937_64 rng(14);
    Tensor lp = random_log_probs(1, 4, 3, rng);
    const std::vector<std::int64_t> tgt{1, 2};
    Tensor loss = sm::ctc_loss(lp, {tgt}, {4});
    const double want = ctc_oracle(lp.data(), 4, 3, tgt);
    EXPECT_NEAR(loss.item(), want, 1e-10);
}

TEST(CtcLoss, EmptyTargetIsAllBlanks) {
    std::mt19937_64 rng(15);
    Tensor lp = random_log_probs(1, 3, 3, rng);
    Tensor loss = sm::ctc_loss(lp, {{}}, {3});
    double want = 0.0;
    for (std::int64_t t = 0; t < 3; ++t) want -= lp.at({0, t, 0});
    EXPECT_NEAR(loss.item(), want, 1e-12);
}

TEST(CtcLoss, OracleEquivalenceRandomized) {
    // The acceptance gate reruns this sweep; 200+ random cases with
    // T' <= 6, V <= 3, |y| <= 3 must match enumeration within 1e-8.
    std::mt19937_64 rng(1234);
    std::uniform_int_distribution<std::int64_t> td(1, 6), vd(1, 3), ld(0, 3), id3(1, 3);
    int checked = 0;
    while (checked < 220) {
        const std::int64_t T = td(rng), V = vd(rng), K = V + 1;
        std::uniform_int_distribution<std::int64_t> idv(1, V);
        std::vector<std::int64_t> tgt(static_cast<std::size_t>(ld(rng)));
        for (auto& v : tgt) v = idv(rng);
        if (sm::detail::ctc_min_frames(tgt) > T) continue;
        Tensor lp = random_log_probs(1, T, K, rng);
        Tensor loss = sm::ctc_loss(lp, {tgt}, {T});
        const double want = ctc_oracle(lp.data(), T, K, tgt);
        ASSERT_NEAR(loss.item(), want, 1e-8)
            << "T=" << T << " V=" << V << " |y|=" << tgt.size();
        ++checked;
    }
}

TEST(CtcLoss, BatchIsMeanOverUtterances) {
    std::mt19937_64 rng(16);
    Tensor lp = random_log_probs(3, 5, 3, rng);
    const std::vector<std::vector<std::int64_t>> tgts{{1}, {2, 1}, {1, 2, 1}};
    const std::vector<std::int64_t> lens{3, 5, 4};
    Tensor batch = sm::ctc_loss(lp, tgts, lens);
    double mean = 0.0;
    for (std::int64_t b = 0; b < 3; ++b) {
        std::vector<double> one(static_cast<std::size_t>(lens[b] * 3));
        for (std::int64_t t = 0; t < lens[b]; ++t)
            for (std::int64_t k = 0; k < 3; ++k) one[t * 3 + k] = lp.at({b, t, k});
        Tensor single = Tensor::from_data({1, lens[b], 3}, std::move(one));
        mean += sm::ctc_loss(single, {tgts[b]}, {lens[b]}).item();
    }
    EXPECT_NEAR(batch.item(), mean / 3.0, 1e-12);
}

TEST(CtcLoss, IgnoresFramesPastInputLength) {
    std::mt19937_64 rng(17);
    Tensor lp = random_log_probs(1, 6, 3, rng);
    Tensor loss_a = sm::ctc_loss(lp, {{1, 2}}, {4});
    std::vector<double> mangled = lp.data();
    for (std::int64_t t = 4; t < 6; ++t)
        for (std::int64_t k = 0; k < 3; ++k) mangled[t * 3 + k] = 777.0;
    Tensor lp_b = Tensor::from_data({1, 6, 3}, std::move(mangled));
    Tensor loss_b = sm::ctc_loss(lp_b, {{1, 2}}, {4});
    EXPECT_EQ(loss_a.item(), loss_b.item());
}

TEST(CtcLoss, PermutationCovariance) {
    // Relabeling the non-blank classes and permuting the score columns to
    // match must leave the loss unchanged.
    std::mt19937_64 rng(18);
    const std::int64_t T = 5, V = 3, K = V + 1;
    Tensor lp = random_log_probs(1, T, K, rng);
    const std::vector<std::int64_t> tgt{2, 1, 3};
    const double base = sm::ctc_loss(lp, {tgt}, {T}).item();
    const std::vector<std::int64_t> perm{0, 3, 1, 2};  // id k -> perm[k], blank fixed
    std::vector<double> permuted(static_cast<std::size_t>(T * K));
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t k = 0; k < K; ++k) permuted[t * K + perm[k]] = lp.at({0, t, k});
    Tensor lp_p = Tensor::from_data({1, T, K}, std::move(permuted));
    std::vector<std::int64_t> tgt_p;
    for (auto id : tgt) tgt_p.push_back(perm[id]);
    const double relabeled = sm::ctc_loss(lp_p, {tgt_p}, {T}).item();
    EXPECT_NEAR(base, relabeled, 1e-12);
}

TEST(CtcLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(19);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> raw(static_cast<std::size_t>(2 * 4 * 3));
    for (auto& v : raw) v = nd(rng);
    Tensor logits = Tensor::from_data({2, 4, 3}, std::move(raw));
    const std::vector<std::vector<std::int64_t>> tgts{{1, 2}, {2}};
    const std::vector<std::int64_t> lens{4, 3};
    // Differentiates through log_softmax as in training.
    auto f = [&]() {
        return sm::ctc_loss(sm::log_softmax_lastdim(logits), tgts, lens);
    };
    smtest::expect_grads_match(f, {logits}, 1e-5, 1e-4, "ctc");
}

TEST(CtcLoss, GradientOnRawLogProbInputs) {
    // The analytic alpha-beta gradient holds for arbitrary (unnormalized)
    // inputs, which is exactly what coordinate-wise FD probes.
    std::mt19937_64 rng(20);
    Tensor lp = random_log_probs(1, 4, 3, rng);
    Tensor free = Tensor::from_data(lp.shape(), lp.data());
    auto f = [&]() { return sm::ctc_loss(free, {{1, 2}}, {4}); };
    smtest::expect_grads_match(f, {free}, 1e-6, 1e-6, "ctc_raw");
}

TEST(S2sLoss, PerfectPredictionNoSmoothing) {
    const std::int64_t B = 1, Ty = 3, V = 4;
    std::vector<double> logits(static_cast<std::size_t>(B * Ty * V), 0.0);
    IntTensor targets({B, Ty}, {2, 1, 4});
    for (std::int64_t t = 0; t < Ty; ++t)
        logits[t * V + (targets.data[t] - 1)] = 1000.0;
    Tensor loss = sm::s2s_loss(Tensor::from_data({B, Ty, V}, std::move(logits)), targets, 0.0);
    EXPECT_NEAR(loss.item(), 0.0, 1e-12);
}

TEST(S2sLoss, UniformPredictionIsLogV) {
    const std::int64_t V = 8;
    Tensor logits = Tensor::zeros({1, 2, V});
    IntTensor targets({1, 2}, {3, 7});
    Tensor loss = sm::s2s_loss(logits, targets, 0.0);
    EXPECT_NEAR(loss.item(), std::log(double(V)), 1e-12);
}

TEST(S2sLoss, SmoothedClosedForm) {
    // One confident position, smoothing 0.1, V=4: the loss is the dot
    // product of the smoothed target distribution with -log p.
    const std::int64_t V = 4;
    const double eps = 0.1;
    std::vector<double> raw{3.0, -1.0, 0.5, 0.25};
    Tensor logits = Tensor::from_data({1, 1, V}, std::vector<double>(raw));
    IntTensor targets({1, 1}, {1});
    double z = 0.0;
    for (double v : raw) z += std::exp(v);
    double want = 0.0;
    for (std::int64_t k = 0; k < V; ++k) {
        const double logp = raw[k] - std::log(z);
        const double q = (k == 0 ? 1.0 - eps + eps / V : eps / V);
        want -= q * logp;
    }
    Tensor loss = sm::s2s_loss(logits, targets, eps);
    EXPECT_NEAR(loss.item(), want, 1e-12);
}

TEST(S2sLoss, PadPositionsExcluded) {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> raw(static_cast<std::size_t>(1 * 4 * 3));
    for (auto& v : raw) v = nd(rng);
    Tensor logits4 = Tensor::from_data({1, 4, 3}, std::vector<double>(raw));
    IntTensor padded({1, 4}, {2, 1, 0, 0});
    Tensor with_pad = sm::s2s_loss(logits4, padded, 0.1);
    Tensor logits2 =
        Tensor::from_data({1, 2, 3}, std::vector<double>(raw.begin(), raw.begin() + 6));
    IntTensor trimmed({1, 2}, {2, 1});
    Tensor without = sm::s2s_loss(logits2, trimmed, 0.1);
    EXPECT_NEAR(with_pad.item(), without.item(), 1e-12);
}

TEST(S2sLoss, ErrorsOnBadInput) {
    Tensor logits = Tensor::zeros({1, 2, 3});
    EXPECT_THROW(sm::s2s_loss(logits, IntTensor({1, 2}, {4, 1}), 0.0), sm::ValueError);
    EXPECT_THROW(sm::s2s_loss(logits, IntTensor({1, 2}, {1, 2}), 1.0), sm::ValueError);
    EXPECT_THROW(sm::s2s_loss(logits, IntTensor({1, 2}, {0, 0}), 0.0), sm::ValueError);
}

TEST(S2sLoss, NonNegative) {
    std::mt19937_64 rng(22);
    std::normal_distribution<double> nd(0.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> raw(static_cast<std::size_t>(2 * 3 * 5));
        for (auto& v : raw) v = nd(rng);
        Tensor logits = Tensor::from_data({2, 3, 5}, std::move(raw));
        std::uniform_int_distribution<std::int64_t> idv(1, 5);
        std::vector<std::int64_t> ids(6);
        for (auto& v : ids) v = idv(rng);
        Tensor loss = sm::s2s_loss(logits, IntTensor({2, 3}, ids), 0.1);
        EXPECT_GE(loss.item(), 0.0);
    }
}

TEST(S2sLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> raw(static_cast<std::size_t>(2 * 2 * 4));
    for (auto& v : raw) v = nd(rng);
    Tensor logits = Tensor::from_data({2, 2, 4}, std::move(raw));
    IntTensor targets({2, 2}, {2, 4, 1, 0});
    auto f = [&]() { return sm::s2s_loss(logits, targets, 0.1); };
    smtest::expect_grads_match(f, {logits}, 1e-5, 1e-6, "s2s");
}

TEST(JointLoss, WeightedCombination) {
    EXPECT_NEAR(sm::joint_loss(2.0, 1.0, 0.3), 1.3, 1e-15);
    EXPECT_NEAR(sm::joint_loss(5.0, 3.0, 0.0), 3.0, 1e-15);
    EXPECT_NEAR(sm::joint_loss(5.0, 3.0, 1.0), 5.0, 1e-15);
    EXPECT_THROW(sm::joint_loss(1.0, 1.0, -0.1), sm::ValueError);
    EXPECT_THROW(sm::joint_loss(1.0, 1.0, 1.5), sm::ValueError);
}

TEST(JointLoss, SuperpositionOverComponents) {
    // joint(a+c, b+d) = joint(a,b) + joint(c,d) for a shared alpha.
    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> ud(0.1, 4.0);
    for (int i = 0; i < 50; ++i) {
        const double a = ud(rng), b = ud(rng), c = ud(rng), d = ud(rng);
        const double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        EXPECT_NEAR(sm::joint_loss(a + c, b + d, alpha),
                    sm::joint_loss(a, b, alpha) + sm::joint_loss(c, d, alpha), 1e-12);
    }
}

TEST(JointLoss, TensorFormBackpropagatesWeights) {
    Tensor ctc = Tensor::scalar(2.0);
    Tensor s2s = Tensor::scalar(1.0);
    ctc.set_requires_grad(true);
    s2s.set_requires_grad(true);
    Tensor j = sm::joint_loss(ctc, s2s, 0.3);
    EXPECT_NEAR(j.item(), 1.3, 1e-15);
    j.backward();
    EXPECT_NEAR(ctc.grad()[0], 0.3, 1e-15);
    EXPECT_NEAR(s2s.grad()[0], 0.7, 1e-15);
}

TEST(JointLoss, BreakdownInvariant) {
    sm::LossBreakdown lb = sm::make_loss_breakdown(2.25, 0.75, 0.3);
    EXPECT_NEAR(lb.combined, 0.3 * lb.ctc + 0.7 * lb.s2s, 1e-12);
    EXPECT_EQ(lb.alpha, 0.3);
}

}  // namespace
