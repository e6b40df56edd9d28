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

// Training objectives: CTC negative log-likelihood (forward algorithm over
// the extended label sequence, analytic alpha-beta gradient), label-smoothed
// cross-entropy for the decoder, and their alpha-weighted combination.

#ifndef SPEECHMAMBA_OBJECTIVES_HPP
#define SPEECHMAMBA_OBJECTIVES_HPP

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "speechmamba/nn.hpp"
#include "speechmamba/tensor.hpp"

namespace sm {

struct LossBreakdown {
    double ctc = 0.0;
    double s2s = 0.0;
    double combined = 0.0;
    double alpha = 0.0;
};

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logaddexp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Minimum number of frames an alignment needs: every label plus a mandatory
// blank between adjacent repeats.
inline std::int64_t ctc_min_frames(const std::vector<std::int64_t>& y) {
    std::int64_t n = static_cast<std::int64_t>(y.size());
    for (std::size_t i = 1; i < y.size(); ++i)
        if (y[i] == y[i - 1]) ++n;
    return n;
}

}  // namespace detail

// CTC loss, mean of per-utterance negative log-likelihoods.
//
// log_probs: [B, T', V+1] log-softmax outputs with class 0 = blank; targets
// are ragged id sequences with ids in [1, V]; input_lens gives the number of
// valid frames per utterance. A target that cannot fit its frames raises
// ValueError instead of feeding +inf to the optimizer.
inline Tensor ctc_loss(const Tensor& log_probs,
                       const std::vector<std::vector<std::int64_t>>& targets,
                       const std::vector<std::int64_t>& input_lens) {
    if (log_probs.rank() != 3)
        throw ShapeError("ctc_loss: log_probs must be [B,T,V+1], got " +
                         shape_str(log_probs.shape()));
    const std::int64_t B = log_probs.dim(0), T = log_probs.dim(1), K = log_probs.dim(2);
    if (static_cast<std::int64_t>(targets.size()) != B ||
        static_cast<std::int64_t>(input_lens.size()) != B)
        throw ShapeError("ctc_loss: batch size mismatch");
    const double NI = detail::kNegInf;
    const auto& lp = log_probs.data();

    // per-utterance alpha lattices kept for the backward pass
    std::vector<std::vector<double>> alphas(static_cast<std::size_t>(B));
    std::vector<double> losses(static_cast<std::size_t>(B));

    for (std::int64_t b = 0; b < B; ++b) {
        const auto& y = targets[b];
        const std::int64_t Tb = input_lens[b];
        if (Tb < 1 || Tb > T)
            throw ValueError("ctc_loss: input length " + std::to_string(Tb) + " outside [1," +
                             std::to_string(T) + "]");
        for (auto id : y)
            if (id < 1 || id >= K)
                throw ValueError("ctc_loss: target id " + std::to_string(id) +
                                 " outside [1," + std::to_string(K - 1) + "]");
        if (detail::ctc_min_frames(y) > Tb)
            throw ValueError("ctc_loss: impossible alignment, target needs " +
                             std::to_string(detail::ctc_min_frames(y)) + " frames but has " +
                             std::to_string(Tb));
        const std::int64_t L = static_cast<std::int64_t>(y.size());
        const std::int64_t S = 2 * L + 1;
        auto lab = [&](std::int64_t s) { return (s % 2 == 0) ? std::int64_t(0) : y[s / 2]; };
        std::vector<double>& a = alphas[b];
        a.assign(static_cast<std::size_t>(Tb * S), NI);
        const double* row0 = lp.data() + (b * T + 0) * K;
        a[0] = row0[0];
        if (S > 1) a[1] = row0[lab(1)];
        for (std::int64_t t = 1; t < Tb; ++t) {
            const double* row = lp.data() + (b * T + t) * K;
            for (std::int64_t s = 0; s < S; ++s) {
                double v = a[(t - 1) * S + s];
                if (s >= 1) v = detail::logaddexp(v, a[(t - 1) * S + s - 1]);
                if (s >= 2 && lab(s) != 0 && lab(s) != lab(s - 2))
                    v = detail::logaddexp(v, a[(t - 1) * S + s - 2]);
                a[t * S + s] = (v == NI) ? NI : v + row[lab(s)];
            }
        }
        double total = a[(Tb - 1) * S + (S - 1)];
        if (S > 1) total = detail::logaddexp(total, a[(Tb - 1) * S + (S - 2)]);
        if (!std::isfinite(total))
            throw ValueError("ctc_loss: non-finite path probability for utterance " +
                             std::to_string(b));
        losses[b] = -total;
    }

    double mean = 0.0;
    for (double l : losses) mean += l;
    mean /= double(B);

    Tensor tlp = log_probs;
    const auto tgt = targets;
    const auto lens = input_lens;
    return Tensor::make_op(
        {}, {mean}, {log_probs},
        [tlp, tgt, lens, alphas, losses, B, T, K](TensorNode& self) mutable {
            if (!tlp.requires_grad()) return;
            const double go = self.grad[0] / double(B);
            auto& g = tlp.grad();
            const auto& lp2 = tlp.data();
            const double NI2 = detail::kNegInf;
            for (std::int64_t b = 0; b < B; ++b) {
                const auto& y = tgt[b];
                const std::int64_t Tb = lens[b];
                const std::int64_t L = static_cast<std::int64_t>(y.size());
                const std::int64_t S = 2 * L + 1;
                auto lab = [&](std::int64_t s) {
                    return (s % 2 == 0) ? std::int64_t(0) : y[s / 2];
                };
                const auto& a = alphas[b];
                const double logP = -losses[b];
                // beta[t][s]: completion probability from state s after frame
                // t's emission, so sum_s exp(a + beta) == P at every t.
                std::vector<double> beta(static_cast<std::size_t>(S), NI2);
                std::vector<double> beta_next;
                beta[S - 1] = 0.0;
                if (S > 1) beta[S - 2] = 0.0;
                for (std::int64_t t = Tb - 1; t >= 0; --t) {
                    if (t < Tb - 1) {
                        const double* row = lp2.data() + (b * T + t + 1) * K;
                        std::vector<double>& bn = beta_next;
                        std::vector<double> cur(static_cast<std::size_t>(S), NI2);
                        for (std::int64_t s = 0; s < S; ++s) {
                            double v = (bn[s] == NI2) ? NI2 : bn[s] + row[lab(s)];
                            if (s + 1 < S && bn[s + 1] != NI2)
                                v = detail::logaddexp(v, bn[s + 1] + row[lab(s + 1)]);
                            if (s + 2 < S && lab(s + 2) != 0 && lab(s + 2) != lab(s) &&
                                bn[s + 2] != NI2)
                                v = detail::logaddexp(v, bn[s + 2] + row[lab(s + 2)]);
                            cur[s] = v;
                        }
                        beta = std::move(cur);
                    }
                    double* grow = g.data() + (b * T + t) * K;
                    for (std::int64_t s = 0; s < S; ++s) {
                        const double post = a[t * S + s] + beta[s] - logP;
                        if (post != NI2 && std::isfinite(post))
                            grow[lab(s)] -= go * std::exp(post);
                    }
                    beta_next = beta;
                }
            }
        });
}

// Label-smoothed cross-entropy, averaged over non-pad target positions.
//
// logits: [B, Ty, V] where column c scores token id c+1; targets: [B, Ty]
// ids in [1, V], with pad_id marking positions excluded from the mean.
inline Tensor s2s_loss(const Tensor& logits, const IntTensor& targets, double smoothing,
                       std::int64_t pad_id = 0) {
    if (logits.rank() != 3) throw ShapeError("s2s_loss: logits must be [B,Ty,V]");
    if (smoothing < 0.0 || smoothing >= 1.0)
        throw ValueError("s2s_loss: smoothing must lie in [0,1)");
    const std::int64_t B = logits.dim(0), Ty = logits.dim(1), V = logits.dim(2);
    if (targets.shape != Shape{B, Ty})
        throw ShapeError("s2s_loss: targets " + shape_str(targets.shape) + " vs logits " +
                         shape_str(logits.shape()));
    std::vector<double> onehot(static_cast<std::size_t>(B * Ty * V), 0.0);
    std::vector<double> keep(static_cast<std::size_t>(B * Ty), 0.0);
    std::int64_t n_tokens = 0;
    for (std::int64_t i = 0; i < B * Ty; ++i) {
        const std::int64_t id = targets.data[i];
        if (id == pad_id) continue;
        if (id < 1 || id > V)
            throw ValueError("s2s_loss: target id " + std::to_string(id) + " outside [1," +
                             std::to_string(V) + "]");
        onehot[i * V + (id - 1)] = 1.0;
        keep[i] = 1.0;
        ++n_tokens;
    }
    if (n_tokens == 0) throw ValueError("s2s_loss: no non-pad target tokens");
    Tensor logp = log_softmax_lastdim(logits);
    Tensor oh = Tensor::from_data({B, Ty, V}, std::move(onehot));
    Tensor kp = Tensor::from_data({B, Ty, 1}, std::move(keep));
    // q_true = 1 - eps + eps/V, q_other = eps/V
    Tensor per_pos = sum_axis(logp * oh, -1, true) * (1.0 - smoothing) +
                     sum_axis(logp, -1, true) * (smoothing / double(V));
    return neg(sum(per_pos * kp)) * (1.0 / double(n_tokens));
}

// Eq-style combination: alpha * ctc + (1 - alpha) * s2s.
inline double joint_loss(double ctc, double s2s, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ValueError("joint_loss: alpha must lie in [0,1]");
    return alpha * ctc + (1.0 - alpha) * s2s;
}

inline Tensor joint_loss(const Tensor& ctc, const Tensor& s2s, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ValueError("joint_loss: alpha must lie in [0,1]");
    return ctc * alpha + s2s * (1.0 - alpha);
}

inline LossBreakdown make_loss_breakdown(double ctc, double s2s, double alpha) {
    LossBreakdown lb;
    lb.ctc = ctc;
    lb.s2s = s2s;
    lb.alpha = alpha;
    lb.combined = joint_loss(ctc, s2s, alpha);
    return lb;
}

}  // namespace sm

#endif  // SPEECHMAMBA_OBJECTIVES_HPP
