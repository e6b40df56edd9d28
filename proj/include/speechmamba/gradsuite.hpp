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

// Finite-difference verification suite: every differentiable primitive is
// checked at a tight tolerance and every composite block (mamba block,
// encoder block, decoder block, full joint loss) at a looser one.

#ifndef SPEECHMAMBA_GRADSUITE_HPP
#define SPEECHMAMBA_GRADSUITE_HPP

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "speechmamba/model.hpp"
#include "speechmamba/objectives.hpp"

namespace sm {

struct SuiteEntry {
    GradCheckResult result;
    double tol = 0.0;
};

inline constexpr double kGradSuiteEps = 1e-5;
inline constexpr double kPrimitiveTol = 1e-6;
inline constexpr double kCompositeTol = 1e-4;

namespace detail {

// Scalarizes an arbitrary tensor with fixed random weights so every output
// element contributes a distinct cogradient.
inline Tensor weighted_sum(const Tensor& out, const Tensor& w) { return sum(out * w); }

inline Tensor fixed_weights(const Shape& shape, std::uint64_t salt) {
    std::mt19937_64 rng(0x9e3779b97f4a7c15ull ^ salt);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = d(rng);
    return Tensor::from_data(shape, std::move(v));
}

// Residual output projections are zero at init, which would leave upstream
// gradients identically zero and make the comparison vacuous; overwrite every
// parameter with nonzero values so all paths carry signal.
inline void randomize_params(ParamRegistry& reg, double lo = -0.6, double hi = 0.6) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (const auto& [name, t] : reg.items()) {
        Tensor shared = t;
        for (auto& v : shared.data()) v = d(global_rng());
    }
}

}  // namespace detail

inline std::vector<SuiteEntry> run_grad_suite(std::ostream* os = nullptr) {
    std::vector<SuiteEntry> entries;
    auto run = [&](const std::string& name, const std::function<Tensor()>& f,
                   std::vector<std::pair<std::string, Tensor>> params, double tol) {
        GradCheckResult r = grad_check(name, f, std::move(params), kGradSuiteEps, tol);
        entries.push_back({r, tol});
        if (os)
            *os << (r.ok ? "  ok   " : "  FAIL ") << name << "  max_rel_err=" << r.max_rel_err
                 << " (tol " << tol << ", worst " << r.worst_param << ")\n";
    };

    seed_all(0x6ead);

    // -- primitives ---------------------------------------------------------
    {
        Tensor a = Tensor::rand_uniform({2, 3}, -1.0, 1.0);
        Tensor b = Tensor::rand_uniform({2, 3}, 0.5, 1.5);
        Tensor w = detail::fixed_weights({2, 3}, 1);
        run("add", [=]() { return detail::weighted_sum(a + b, w); }, {{"a", a}, {"b", b}},
            kPrimitiveTol);
        run("sub", [=]() { return detail::weighted_sum(a - b, w); }, {{"a", a}, {"b", b}},
            kPrimitiveTol);
        run("mul", [=]() { return detail::weighted_sum(a * b, w); }, {{"a", a}, {"b", b}},
            kPrimitiveTol);
        run("div", [=]() { return detail::weighted_sum(a / b, w); }, {{"a", a}, {"b", b}},
            kPrimitiveTol);
        run("scalar_affine", [=]() { return detail::weighted_sum(a * 2.5 + 1.25, w); },
            {{"a", a}}, kPrimitiveTol);
    }
    {
        Tensor a = Tensor::rand_uniform({2, 4, 3}, -1.0, 1.0);
        Tensor b = Tensor::rand_uniform({3}, 0.5, 1.5);
        Tensor w = detail::fixed_weights({2, 4, 3}, 2);
        run("broadcast_mul", [=]() { return detail::weighted_sum(a * b, w); },
            {{"a", a}, {"b", b}}, kPrimitiveTol);
    }
    {
        Tensor a = Tensor::rand_uniform({2, 3}, -1.0, 1.0);
        Tensor b = Tensor::rand_uniform({3, 4}, -1.0, 1.0);
        Tensor w = detail::fixed_weights({2, 4}, 3);
        run("matmul", [=]() { return detail::weighted_sum(matmul(a, b), w); },
            {{"a", a}, {"b", b}}, kPrimitiveTol);
    }
    {
        Tensor a = Tensor::rand_uniform({2, 2, 3}, -1.0, 1.0);
        Tensor b = Tensor::rand_uniform({2, 3, 2}, -1.0, 1.0);
        Tensor w = detail::fixed_weights({2, 2, 2}, 4);
        run("matmul_batched", [=]() { return detail::weighted_sum(matmul(a, b), w); },
            {{"a", a}, {"b", b}}, kPrimitiveTol);
    }
    {
        Tensor p = Tensor::rand_uniform({2, 3}, 0.4, 2.0);
        Tensor s = Tensor::from_data({2, 3}, {0.7, -0.3, 0.5, -0.9, 0.2, -0.6});
        Tensor w = detail::fixed_weights({2, 3}, 5);
        run("exp", [=]() { return detail::weighted_sum(exp(s), w); }, {{"x", s}}, kPrimitiveTol);
        run("log", [=]() { return detail::weighted_sum(log(p), w); }, {{"x", p}}, kPrimitiveTol);
        run("sqrt", [=]() { return detail::weighted_sum(sqrt(p), w); }, {{"x", p}},
            kPrimitiveTol);
        run("sigmoid", [=]() { return detail::weighted_sum(sigmoid(s), w); }, {{"x", s}},
            kPrimitiveTol);
        run("softplus", [=]() { return detail::weighted_sum(softplus(s), w); }, {{"x", s}},
            kPrimitiveTol);
        run("silu", [=]() { return detail::weighted_sum(silu(s), w); }, {{"x", s}},
            kPrimitiveTol);
        // inputs sit away from the kink so central differences are exact
        run("relu", [=]() { return detail::weighted_sum(relu(s), w); }, {{"x", s}},
            kPrimitiveTol);
        run("neg", [=]() { return detail::weighted_sum(neg(s), w); }, {{"x", s}}, kPrimitiveTol);
    }
    {
        Tensor a = Tensor::rand_uniform({3, 4}, -1.0, 1.0);
        run("sum", [=]() { return sum(a); }, {{"a", a}}, kPrimitiveTol);
        run("mean", [=]() { return mean(a); }, {{"a", a}}, kPrimitiveTol);
        Tensor w0 = detail::fixed_weights({4}, 6);
        run("sum_axis", [=]() { return detail::weighted_sum(sum_axis(a, 0), w0); }, {{"a", a}},
            kPrimitiveTol);
        Tensor w1 = detail::fixed_weights({3}, 7);
        run("mean_axis", [=]() { return detail::weighted_sum(mean_axis(a, 1), w1); },
            {{"a", a}}, kPrimitiveTol);
    }
    {
        Tensor a = Tensor::rand_uniform({2, 3, 4}, -1.0, 1.0);
        Tensor w = detail::fixed_weights({4, 3}, 8);
        run("reshape_transpose_slice",
            [=]() {
                Tensor t = transpose(a, {1, 0, 2});            // [3,2,4]
                Tensor s = slice(t, 1, 1, 1);                  // [3,1,4]
                Tensor r = reshape(s, {3, 4});                 // [3,4]
                return detail::weighted_sum(transpose_last2(r), w);
            },
            {{"a", a}}, kPrimitiveTol);
        Tensor b = Tensor::rand_uniform({2, 3, 4}, -1.0, 1.0);
        Tensor wc = detail::fixed_weights({2, 6, 4}, 9);
        run("concat", [=]() { return detail::weighted_sum(concat({a, b}, 1), wc); },
            {{"a", a}, {"b", b}}, kPrimitiveTol);
    }
    {
        Tensor a = Tensor::rand_uniform({2, 4}, -1.0, 1.0);
        BoolMask mask;
        mask.shape = {2, 4};
        mask.data = {1, 0, 1, 1, 0, 1, 1, 0};
        Tensor w = detail::fixed_weights({2, 4}, 10);
        run("masked_fill",
            [=]() { return detail::weighted_sum(masked_fill(a, mask, -3.0), w); }, {{"a", a}},
            kPrimitiveTol);
    }
    {
        Tensor table = Tensor::rand_uniform({5, 3}, -1.0, 1.0);
        IntTensor ids{{2, 2}, {0, 4, 2, 4}};
        Tensor w = detail::fixed_weights({2, 2, 3}, 11);
        run("embedding_rows",
            [=]() { return detail::weighted_sum(embedding_rows(table, ids), w); },
            {{"table", table}}, kPrimitiveTol);
    }
    {
        Tensor a = Tensor::rand_uniform({2, 3, 4}, -2.0, 2.0);
        Tensor w = detail::fixed_weights({2, 3, 4}, 12);
        run("softmax_lastdim",
            [=]() { return detail::weighted_sum(softmax_lastdim(a), w); }, {{"a", a}},
            kPrimitiveTol);
        run("log_softmax_lastdim",
            [=]() { return detail::weighted_sum(log_softmax_lastdim(a), w); }, {{"a", a}},
            kPrimitiveTol);
    }
    {
        ParamRegistry reg;
        RmsNorm rn = make_rms_norm(reg, "rms", 6);
        LayerNorm ln = make_layer_norm(reg, "ln", 6);
        Linear lin = make_linear(reg, "lin", 6, 4);
        Tensor x = Tensor::rand_uniform({2, 3, 6}, -1.0, 1.0);
        Tensor wr = detail::fixed_weights({2, 3, 6}, 13);
        Tensor wl = detail::fixed_weights({2, 3, 4}, 14);
        auto params = reg.items();
        auto with_x = params;
        with_x.emplace_back("x", x);
        run("rms_norm", [=]() { return detail::weighted_sum(rn(x), wr); }, with_x,
            kPrimitiveTol);
        run("layer_norm", [=]() { return detail::weighted_sum(ln(x), wr); }, with_x,
            kPrimitiveTol);
        run("linear", [=]() { return detail::weighted_sum(lin(x), wl); }, with_x,
            kPrimitiveTol);
    }
    {
        Tensor x = Tensor::rand_uniform({2, 5, 4}, -1.0, 1.0);
        Tensor kernel = Tensor::rand_uniform({4, 3}, -0.7, 0.7);
        Tensor bias = Tensor::rand_uniform({4}, -0.2, 0.2);
        Tensor w = detail::fixed_weights({2, 5, 4}, 15);
        run("causal_depthwise_conv1d",
            [=]() {
                return detail::weighted_sum(causal_depthwise_conv1d(x, kernel, bias), w);
            },
            {{"x", x}, {"kernel", kernel}, {"bias", bias}}, kPrimitiveTol);
    }
    {
        Tensor x = Tensor::rand_uniform({1, 2, 5, 6}, -1.0, 1.0);
        Tensor kernel = Tensor::rand_uniform({3, 2, 3, 3}, -0.5, 0.5);
        Tensor bias = Tensor::rand_uniform({3}, -0.2, 0.2);
        Tensor w = detail::fixed_weights({1, 3, 3, 3}, 16);
        run("conv2d",
            [=]() { return detail::weighted_sum(conv2d(x, kernel, bias, 2, 1), w); },
            {{"x", x}, {"kernel", kernel}, {"bias", bias}}, kPrimitiveTol);
    }
    {
        ParamRegistry reg;
        AttentionParams att = make_attention(reg, "att", 8, 2);
        detail::randomize_params(reg);
        Tensor q = Tensor::rand_uniform({2, 3, 8}, -1.0, 1.0);
        Tensor m = Tensor::rand_uniform({2, 4, 8}, -1.0, 1.0);
        Tensor w = detail::fixed_weights({2, 3, 8}, 17);
        auto params = reg.items();
        params.emplace_back("q_in", q);
        params.emplace_back("m_in", m);
        run("multi_head_attention",
            [=]() { return detail::weighted_sum(multi_head_attention(att, q, m), w); }, params,
            kPrimitiveTol);
    }
    {
        const std::int64_t B = 1, T = 4, C = 3, N = 2;
        Tensor dt = Tensor::rand_uniform({B, T, C}, 0.05, 0.5);
        Tensor bsel = Tensor::rand_uniform({B, T, N}, -0.5, 0.5);
        Tensor csel = Tensor::rand_uniform({B, T, N}, -0.5, 0.5);
        Tensor x = Tensor::rand_uniform({B, T, C}, -1.0, 1.0);
        Tensor logA = Tensor::rand_uniform({C, N}, -1.0, 0.5);
        Tensor D = Tensor::rand_uniform({C}, 0.5, 1.5);
        Tensor w = detail::fixed_weights({B, T, C}, 18);
        for (bool parallel : {false, true}) {
            run(parallel ? "selective_scan_parallel" : "selective_scan_sequential",
                [=]() {
                    return detail::weighted_sum(
                        selective_scan(dt, bsel, csel, x, logA, D, parallel), w);
                },
                {{"dt", dt},
                 {"bsel", bsel},
                 {"csel", csel},
                 {"x", x},
                 {"logA", logA},
                 {"D", D}},
                kPrimitiveTol);
        }
    }

    // -- composite blocks ----------------------------------------------------
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.num_heads = 2;
    cfg.encoder_blocks = 1;
    cfg.decoder_blocks = 1;
    cfg.conv_width = 2;
    cfg.ssm_state = 2;
    cfg.expand = 2;
    cfg.vocab_size = 4;
    cfg.dropout_p = 0.0;
    cfg.frontend_channels = 2;
    cfg.feat_dim = 4;
    cfg.ffn_dim = 8;
    {
        ParamRegistry reg;
        MambaBlock blk = make_mamba_block(reg, "mamba", cfg);
        detail::randomize_params(reg);
        Tensor x = Tensor::rand_uniform({2, 5, cfg.d_model}, -0.5, 0.5);
        Tensor w = detail::fixed_weights({2, 5, cfg.d_model}, 19);
        auto params = reg.items();
        params.emplace_back("x", x);
        run("mamba_block",
            [=]() { return detail::weighted_sum(mamba_block_forward(blk, x, cfg, false), w); },
            params, kCompositeTol);
    }
    {
        ParamRegistry reg;
        EncoderBlock blk = make_encoder_block(reg, "enc", cfg);
        detail::randomize_params(reg);
        Tensor x = Tensor::rand_uniform({2, 5, cfg.d_model}, -0.5, 0.5);
        Tensor w = detail::fixed_weights({2, 5, cfg.d_model}, 20);
        auto params = reg.items();
        params.emplace_back("x", x);
        run("encoder_block",
            [=]() {
                return detail::weighted_sum(encoder_block_forward(blk, x, nullptr, cfg, false),
                                            w);
            },
            params, kCompositeTol);
    }
    {
        ParamRegistry reg;
        DecoderBlock blk = make_decoder_block(reg, "dec", cfg);
        detail::randomize_params(reg);
        Tensor y = Tensor::rand_uniform({2, 3, cfg.d_model}, -0.5, 0.5);
        Tensor enc = Tensor::rand_uniform({2, 5, cfg.d_model}, -0.5, 0.5);
        Tensor w = detail::fixed_weights({2, 3, cfg.d_model}, 21);
        auto params = reg.items();
        params.emplace_back("y", y);
        params.emplace_back("enc", enc);
        run("decoder_block",
            [=]() {
                return detail::weighted_sum(
                    decoder_block_forward(blk, y, enc, nullptr, nullptr, cfg, false), w);
            },
            params, kCompositeTol);
    }
    {
        SpeechMambaModel model = build_model(cfg);
        detail::randomize_params(model.reg, -0.4, 0.4);
        const std::int64_t T = 8;
        Tensor feats = Tensor::rand_uniform({1, T, cfg.feat_dim}, -0.5, 0.5);
        const std::vector<std::int64_t> feat_lens = {T};
        IntTensor tokens_in{{1, 3}, {kBosId, 3, 4}};
        const std::vector<std::vector<std::int64_t>> ctc_targets = {{3, 4}};
        IntTensor targets_out{{1, 3}, {3, 4, kEosId}};
        auto params = model.reg.items();
        params.emplace_back("feats", feats);
        run("full_model_joint_loss",
            [=]() {
                AsrForward fwd = forward_asr(model, feats, feat_lens, tokens_in, false);
                Tensor ctc_lp = log_softmax_lastdim(fwd.ctc_logits);
                Tensor ctc = ctc_loss(ctc_lp, ctc_targets, fwd.enc_lens);
                Tensor s2s = s2s_loss(fwd.s2s_logits, targets_out, 0.1);
                return joint_loss(ctc, s2s, 0.3);
            },
            params, kCompositeTol);
    }

    return entries;
}

inline bool suite_all_ok(const std::vector<SuiteEntry>& entries) {
    for (const auto& e : entries)
        if (!e.result.ok) return false;
    return !entries.empty();
}

}  // namespace sm

#endif  // SPEECHMAMBA_GRADSUITE_HPP
