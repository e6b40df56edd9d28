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

// Wall-clock benchmarks: encoder forward scaling in sequence length, and
// parallel vs sequential selective-scan timing.

#ifndef SPEECHMAMBA_BENCH_HPP
#define SPEECHMAMBA_BENCH_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <vector>

#include "speechmamba/model.hpp"
#include "speechmamba/ssm.hpp"

namespace sm {

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw ValueError("median_of: empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Runs fn n_runs times after warmup throwaway runs; returns per-run seconds.
template <typename Fn>
inline std::vector<double> time_runs(Fn&& fn, int n_runs, int warmup = 1) {
    if (n_runs < 1) throw ValueError("time_runs: n_runs must be >= 1");
    for (int i = 0; i < warmup; ++i) fn();
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n_runs));
    for (int i = 0; i < n_runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        out.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Encoder scaling. Small widths keep per-frame work cheap so the dependence
// on sequence length dominates the measurement; a large SSM state gives the
// recurrence a realistic per-frame cost. Inference on one core evaluates the
// recurrence directly; the associative scan is the training-side evaluation
// order and is timed separately by bench_scan.

inline ModelConfig bench_mamba_config() {
    ModelConfig cfg;
    cfg.d_model = 32;
    cfg.num_heads = 1;
    cfg.encoder_blocks = 1;
    cfg.decoder_blocks = 1;
    cfg.conv_width = 4;
    cfg.ssm_state = 2048;
    cfg.expand = 2;
    cfg.vocab_size = 4;
    cfg.dropout_p = 0.0;
    cfg.frontend_channels = 2;
    cfg.feat_dim = 8;
    cfg.ffn_dim = 32;
    cfg.use_s2s = false;
    cfg.mamba_encoder = true;
    cfg.parallel_scan = false;
    return cfg;
}

inline ModelConfig bench_transformer_config() {
    ModelConfig cfg = bench_mamba_config();
    cfg.mamba_encoder = false;
    return cfg;
}

// Median wall seconds for one encoder forward over [1, T, feat_dim].
inline double bench_encoder_median(const ModelConfig& cfg, std::int64_t T, int n_runs) {
    NoGradGuard ng;
    seed_all(0xbe7c);
    SpeechMambaModel model = build_model(cfg);
    Tensor feats = Tensor::randn({1, T, cfg.feat_dim}, 0.0, 1.0);
    const std::vector<std::int64_t> lens = {T};
    const auto times = time_runs(
        [&]() {
            std::vector<std::int64_t> enc_lens;
            Tensor out = encode(model, feats, lens, enc_lens, false);
            volatile double sink = out.data()[0];
            (void)sink;
        },
        n_runs);
    return median_of(times);
}

struct ScalingReport {
    std::int64_t t_short = 0, t_long = 0;
    double mamba_short_s = 0.0, mamba_long_s = 0.0;
    double transformer_short_s = 0.0, transformer_long_s = 0.0;

    double mamba_ratio() const { return mamba_long_s / mamba_short_s; }
    double transformer_ratio() const { return transformer_long_s / transformer_short_s; }
};

inline ScalingReport bench_encoder_scaling(std::int64_t t_short, std::int64_t t_long,
                                           int n_runs) {
    if (t_short < 4 || t_long <= t_short)
        throw ValueError("bench_encoder_scaling: need 4 <= t_short < t_long");
    ScalingReport r;
    r.t_short = t_short;
    r.t_long = t_long;
    r.mamba_short_s = bench_encoder_median(bench_mamba_config(), t_short, n_runs);
    r.mamba_long_s = bench_encoder_median(bench_mamba_config(), t_long, n_runs);
    r.transformer_short_s = bench_encoder_median(bench_transformer_config(), t_short, n_runs);
    r.transformer_long_s = bench_encoder_median(bench_transformer_config(), t_long, n_runs);
    return r;
}

// ---------------------------------------------------------------------------
// Scan benchmark: the same discretized inputs through both evaluation orders.

struct ScanBenchReport {
    std::int64_t T = 0, channels = 0, n_state = 0;
    double parallel_s = 0.0, sequential_s = 0.0;
};

inline ScanBenchReport bench_scan(std::int64_t T, std::int64_t channels, std::int64_t n_state,
                                  int n_runs) {
    if (T < 1 || channels < 1 || n_state < 1)
        throw ValueError("bench_scan: dimensions must be positive");
    NoGradGuard ng;
    seed_all(0x5ca9);
    Tensor abar = Tensor::rand_uniform({1, T, channels, n_state}, 0.05, 0.95);
    Tensor bbar = Tensor::rand_uniform({1, T, channels, n_state}, -0.5, 0.5);
    Tensor csel = Tensor::rand_uniform({1, T, n_state}, -0.5, 0.5);
    Tensor x = Tensor::randn({1, T, channels}, 0.0, 1.0);
    Tensor D = Tensor::ones({channels});
    ScanBenchReport r;
    r.T = T;
    r.channels = channels;
    r.n_state = n_state;
    r.parallel_s = median_of(time_runs(
        [&]() {
            Tensor y = ssm_scan_parallel(abar, bbar, csel, x, D);
            volatile double sink = y.data()[0];
            (void)sink;
        },
        n_runs));
    r.sequential_s = median_of(time_runs(
        [&]() {
            Tensor y = ssm_scan_sequential(abar, bbar, csel, x, D);
            volatile double sink = y.data()[0];
            (void)sink;
        },
        n_runs));
    return r;
}

}  // namespace sm

#endif  // SPEECHMAMBA_BENCH_HPP
