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

// Inference: greedy CTC decoding, CTC prefix scoring, one-pass joint
// CTC/attention beam search with a pluggable LM hook, and WER scoring.

#ifndef SPEECHMAMBA_DECODING_HPP
#define SPEECHMAMBA_DECODING_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "speechmamba/model.hpp"
#include "speechmamba/objectives.hpp"
#include "speechmamba/tensor.hpp"

namespace sm {

// Scorer callback: token history (BOS-initiated) -> log-probs over ids 1..V
// as a vector of size V (index j scores id j+1).
using LmScorer = std::function<std::vector<double>(const std::vector<std::int64_t>&)>;

struct DecodeConfig {
    std::int64_t beam_width = 66;
    double ctc_weight = 0.4;
    double lm_weight = 0.6;
    double max_len_ratio = 1.0;
    bool length_normalize = false;
    LmScorer lm;

    void validate() const {
        if (beam_width < 1) throw ValueError("DecodeConfig: beam_width must be >= 1");
        if (ctc_weight < 0.0 || ctc_weight > 1.0)
            throw ValueError("DecodeConfig: ctc_weight must lie in [0,1]");
        if (max_len_ratio < 0.0) throw ValueError("DecodeConfig: max_len_ratio must be >= 0");
    }
};

// Best-path CTC decoding: argmax per frame, merge consecutive repeats, drop
// blanks. log_probs: [T', V+1] with class 0 = blank.
inline std::vector<std::int64_t> greedy_ctc_decode(const Tensor& log_probs) {
    if (log_probs.rank() != 2)
        throw ShapeError("greedy_ctc_decode: expected [T,V+1], got " +
                         shape_str(log_probs.shape()));
    const std::int64_t T = log_probs.dim(0), K = log_probs.dim(1);
    const auto& d = log_probs.data();
    std::vector<std::int64_t> out;
    std::int64_t prev = -1;
    for (std::int64_t t = 0; t < T; ++t) {
        const double* row = d.data() + t * K;
        std::int64_t best = 0;
        for (std::int64_t k = 1; k < K; ++k)
            if (row[k] > row[best]) best = k;
        if (best != prev && best != kBlankId) out.push_back(best);
        prev = best;
    }
    return out;
}

// ---------------------------------------------------------------------------
// CTC prefix scoring (blank-ending / non-blank-ending forward sums).
//
// For a prefix g the state holds log r_t^n(g) (paths emitting g whose last
// frame emits the final symbol of g) and log r_t^b(g) (paths emitting g whose
// last frame is blank), plus psi = log P(output begins with g).

struct CtcPrefixState {
    std::vector<double> rn, rb;
    double psi = 0.0;
    std::int64_t last = -1;  // final symbol of the prefix, -1 for empty
};

namespace detail {

inline CtcPrefixState ctc_prefix_init(const Tensor& log_probs) {
    const std::int64_t T = log_probs.dim(0), K = log_probs.dim(1);
    const auto& d = log_probs.data();
    CtcPrefixState st;
    st.rn.assign(static_cast<std::size_t>(T), kNegInf);
    st.rb.resize(static_cast<std::size_t>(T));
    double acc = 0.0;
    for (std::int64_t t = 0; t < T; ++t) {
        acc += d[t * K + kBlankId];
        st.rb[t] = acc;
    }
    st.psi = 0.0;
    return st;
}

// Extends prefix g by symbol c and returns the state for h = g + c.
inline CtcPrefixState ctc_prefix_extend(const Tensor& log_probs, const CtcPrefixState& g,
                                        std::int64_t c) {
    const std::int64_t T = log_probs.dim(0), K = log_probs.dim(1);
    const auto& d = log_probs.data();
    CtcPrefixState h;
    h.rn.assign(static_cast<std::size_t>(T), kNegInf);
    h.rb.assign(static_cast<std::size_t>(T), kNegInf);
    h.last = c;
    // phi_t: mass of g-paths a new emission of c at t+1 may follow
    auto phi = [&](std::int64_t t) {
        return (c != g.last) ? logaddexp(g.rb[t], g.rn[t]) : g.rb[t];
    };
    h.rn[0] = (g.last == -1) ? d[0 * K + c] : kNegInf;
    double psi = h.rn[0];
    for (std::int64_t t = 1; t < T; ++t) {
        const double new_emit = phi(t - 1) + d[t * K + c];
        h.rn[t] = logaddexp(h.rn[t - 1] + d[t * K + c], new_emit);
        h.rb[t] = logaddexp(h.rb[t - 1], h.rn[t - 1]) + d[t * K + kBlankId];
        psi = logaddexp(psi, new_emit);
    }
    h.psi = psi;
    return h;
}

// log P(output == g): the end-of-sequence score of a prefix.
inline double ctc_prefix_end(const CtcPrefixState& g) {
    return logaddexp(g.rn.back(), g.rb.back());
}

}  // namespace detail

// Log prefix probability of (prefix + next_token). next_token = kEosId asks
// for the probability that the output equals the prefix exactly; any other
// non-blank id extends the prefix. prefix must be blank-free.
inline double ctc_prefix_score(const Tensor& log_probs,
                               const std::vector<std::int64_t>& prefix,
                               std::int64_t next_token) {
    if (log_probs.rank() != 2)
        throw ShapeError("ctc_prefix_score: expected [T,V+1], got " +
                         shape_str(log_probs.shape()));
    const std::int64_t K = log_probs.dim(1);
    CtcPrefixState st = detail::ctc_prefix_init(log_probs);
    for (auto id : prefix) {
        if (id < 1 || id >= K)
            throw ValueError("ctc_prefix_score: prefix id " + std::to_string(id) +
                             " outside [1," + std::to_string(K - 1) + "]");
        st = detail::ctc_prefix_extend(log_probs, st, id);
    }
    if (next_token == kEosId) return detail::ctc_prefix_end(st);
    if (next_token < 1 || next_token >= K)
        throw ValueError("ctc_prefix_score: next token " + std::to_string(next_token) +
                         " outside [1," + std::to_string(K - 1) + "]");
    return detail::ctc_prefix_extend(log_probs, st, next_token).psi;
}

// ---------------------------------------------------------------------------
// Joint CTC/attention one-pass beam search.

struct Hypothesis {
    std::vector<std::int64_t> tokens;  // BOS-initiated; EOS appended when finished
    double att_score = 0.0;
    double ctc_score = 0.0;
    double lm_score = 0.0;
    bool finished = false;
    CtcPrefixState ctc_state;

    double total(const DecodeConfig& cfg) const {
        const double raw = (1.0 - cfg.ctc_weight) * att_score + cfg.ctc_weight * ctc_score +
                           cfg.lm_weight * lm_score;
        if (!cfg.length_normalize) return raw;
        const auto len = static_cast<double>(tokens.size());
        return raw / std::max(1.0, len - 1.0);
    }
};

namespace detail {

// Deterministic ordering: higher score first, lower token sequence on ties.
inline bool hyp_better(const Hypothesis& a, const Hypothesis& b, const DecodeConfig& cfg) {
    const double sa = a.total(cfg), sb = b.total(cfg);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
}

}  // namespace detail

// Decodes one utterance. features: [1, T, feat_dim]; returns the symbol id
// sequence of the best finished hypothesis (no BOS/EOS).
inline std::vector<std::int64_t> beam_search(const SpeechMambaModel& m, const Tensor& features,
                                             std::int64_t feat_len, const DecodeConfig& cfg) {
    cfg.validate();
    if (features.rank() != 3 || features.dim(0) != 1)
        throw ShapeError("beam_search: features must be [1,T,feat_dim]");
    NoGradGuard ng;
    std::vector<std::int64_t> enc_lens;
    const Tensor enc = encode(m, features, {feat_len}, enc_lens, false);
    const std::int64_t Tp = enc_lens[0];
    Tensor ctc_lp_full = log_softmax_lastdim(m.ctc_head(enc));
    // trim to the valid frames of this utterance
    Tensor ctc_lp = reshape(slice(ctc_lp_full, 1, 0, Tp), {Tp, m.cfg.vocab_size + 1});
    const std::int64_t V = m.cfg.vocab_size;
    const auto max_len =
        static_cast<std::int64_t>(std::floor(cfg.max_len_ratio * static_cast<double>(Tp)));

    Hypothesis root;
    root.tokens = {kBosId};
    root.ctc_state = detail::ctc_prefix_init(ctc_lp);
    std::vector<Hypothesis> live{root};
    std::vector<Hypothesis> done;

    for (std::int64_t step = 0; step < max_len && !live.empty(); ++step) {
        std::vector<Hypothesis> cand;
        for (const auto& hyp : live) {
            const auto Ty = static_cast<std::int64_t>(hyp.tokens.size());
            IntTensor toks({1, Ty}, hyp.tokens);
            const Tensor logits = decode_s2s(m, toks, enc, enc_lens, false);
            Tensor att_lp = log_softmax_lastdim(slice(logits, 1, Ty - 1, 1));
            const double* att = att_lp.data().data();  // length V, index j = id j+1
            std::vector<double> lm_lp;
            if (cfg.lm) {
                lm_lp = cfg.lm(hyp.tokens);
                if (static_cast<std::int64_t>(lm_lp.size()) != V)
                    throw ValueError("beam_search: LM scorer returned " +
                                     std::to_string(lm_lp.size()) + " scores, expected " +
                                     std::to_string(V));
            }
            // candidates: EOS plus every symbol id; BOS is never re-emitted.
            // EOS extensions compete for beam slots like any other token.
            for (std::int64_t id = kEosId; id <= V; ++id) {
                Hypothesis nh = hyp;
                nh.att_score += att[id - 1];
                if (cfg.lm) nh.lm_score += lm_lp[id - 1];
                if (id == kEosId) {
                    nh.ctc_score = detail::ctc_prefix_end(hyp.ctc_state);
                    nh.finished = true;
                } else {
                    nh.ctc_state = detail::ctc_prefix_extend(ctc_lp, hyp.ctc_state, id);
                    nh.ctc_score = nh.ctc_state.psi;
                }
                nh.tokens.push_back(id);
                cand.push_back(std::move(nh));
            }
        }
        std::sort(cand.begin(), cand.end(), [&](const Hypothesis& a, const Hypothesis& b) {
            return detail::hyp_better(a, b, cfg);
        });
        if (static_cast<std::int64_t>(cand.size()) > cfg.beam_width)
            cand.resize(static_cast<std::size_t>(cfg.beam_width));
        live.clear();
        for (auto& h : cand) {
            if (h.finished)
                done.push_back(std::move(h));
            else
                live.push_back(std::move(h));
        }
    }
    if (done.empty())
        throw ValueError("beam_search: no finished hypothesis within length bound " +
                         std::to_string(max_len));
    const Hypothesis* best = &done.front();
    for (const auto& h : done)
        if (detail::hyp_better(h, *best, cfg)) best = &h;
    // strip BOS and EOS
    return std::vector<std::int64_t>(best->tokens.begin() + 1, best->tokens.end() - 1);
}

// ---------------------------------------------------------------------------
// Word error rate.

struct WerCounts {
    std::int64_t substitutions = 0;
    std::int64_t insertions = 0;
    std::int64_t deletions = 0;
    std::int64_t ref_words = 0;

    std::int64_t edits() const { return substitutions + insertions + deletions; }
    double wer() const { return static_cast<double>(edits()) / static_cast<double>(ref_words); }
};

namespace detail {

inline void accumulate_wer(const std::vector<std::string>& ref,
                           const std::vector<std::string>& hyp, WerCounts& out) {
    const std::size_t R = ref.size(), H = hyp.size();
    std::vector<std::int64_t> dp((R + 1) * (H + 1));
    auto at = [&](std::size_t i, std::size_t j) -> std::int64_t& { return dp[i * (H + 1) + j]; };
    for (std::size_t i = 0; i <= R; ++i) at(i, 0) = static_cast<std::int64_t>(i);
    for (std::size_t j = 0; j <= H; ++j) at(0, j) = static_cast<std::int64_t>(j);
    for (std::size_t i = 1; i <= R; ++i)
        for (std::size_t j = 1; j <= H; ++j) {
            const std::int64_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
        }
    // backtrace, preferring match/substitution, then deletion, then insertion
    std::size_t i = R, j = H;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 &&
            at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
            if (ref[i - 1] != hyp[j - 1]) ++out.substitutions;
            --i;
            --j;
        } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
            ++out.deletions;
            --i;
        } else {
            ++out.insertions;
            --j;
        }
    }
    out.ref_words += static_cast<std::int64_t>(R);
}

}  // namespace detail

// Corpus-level WER: Levenshtein alignment per pair with unit costs,
// (S + I + D) / total reference words.
inline WerCounts word_error_rate(const std::vector<std::vector<std::string>>& refs,
                                 const std::vector<std::vector<std::string>>& hyps) {
    if (refs.size() != hyps.size())
        throw ShapeError("word_error_rate: " + std::to_string(refs.size()) + " refs vs " +
                         std::to_string(hyps.size()) + " hyps");
    if (refs.empty()) throw ValueError("word_error_rate: empty reference corpus");
    WerCounts out;
    for (std::size_t k = 0; k < refs.size(); ++k)
        detail::accumulate_wer(refs[k], hyps[k], out);
    if (out.ref_words == 0)
        throw ValueError("word_error_rate: reference corpus has no words");
    return out;
}

}  // namespace sm

#endif  // SPEECHMAMBA_DECODING_HPP
