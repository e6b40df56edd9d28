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

#include "speechmamba/bench.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace sm {
namespace {

TEST(MedianOf, OddAndEvenSamples) {
    EXPECT_DOUBLE_EQ(median_of({3.0, 1.0, 2.0}), 2.0);
    EXPECT_DOUBLE_EQ(median_of({4.0, 1.0, 3.0, 2.0}), 2.5);
    EXPECT_DOUBLE_EQ(median_of({7.0}), 7.0);
    EXPECT_THROW(median_of({}), ValueError);
}

TEST(TimeRuns, RunsWarmupPlusMeasuredAndReportsSeconds) {
    int calls = 0;
    auto times = time_runs([&]() { ++calls; }, 3, 2);
    EXPECT_EQ(calls, 5);
    ASSERT_EQ(times.size(), 3u);
    for (double t : times) EXPECT_GE(t, 0.0);
    EXPECT_THROW(time_runs([]() {}, 0), ValueError);
}

TEST(BenchScan, TimesBothEvaluationOrders) {
    ScanBenchReport r = bench_scan(32, 4, 4, 2);
    EXPECT_EQ(r.T, 32);
    EXPECT_EQ(r.channels, 4);
    EXPECT_EQ(r.n_state, 4);
    EXPECT_GT(r.parallel_s, 0.0);
    EXPECT_GT(r.sequential_s, 0.0);
    EXPECT_THROW(bench_scan(0, 4, 4, 1), ValueError);
}

TEST(BenchEncoder, ScalingReportSmoke) {
    ScalingReport r = bench_encoder_scaling(16, 32, 1);
    EXPECT_EQ(r.t_short, 16);
    EXPECT_EQ(r.t_long, 32);
    EXPECT_GT(r.mamba_short_s, 0.0);
    EXPECT_GT(r.mamba_long_s, 0.0);
    EXPECT_GT(r.transformer_short_s, 0.0);
    EXPECT_GT(r.transformer_long_s, 0.0);
    EXPECT_TRUE(std::isfinite(r.mamba_ratio()));
    EXPECT_TRUE(std::isfinite(r.transformer_ratio()));
    EXPECT_GT(r.mamba_ratio(), 0.0);
    EXPECT_GT(r.transformer_ratio(), 0.0);
    EXPECT_THROW(bench_encoder_scaling(32, 32, 1), ValueError);
}

TEST(BenchConfigs, MambaAndTransformerDifferOnlyInEncoderKind) {
    ModelConfig a = bench_mamba_config();
    ModelConfig b = bench_transformer_config();
    EXPECT_TRUE(a.mamba_encoder);
    EXPECT_FALSE(b.mamba_encoder);
    EXPECT_EQ(a.d_model, b.d_model);
    EXPECT_EQ(a.ssm_state, b.ssm_state);
    EXPECT_EQ(a.ffn_dim, b.ffn_dim);
    EXPECT_FALSE(a.use_s2s);
}

}  // namespace
}  // namespace sm
