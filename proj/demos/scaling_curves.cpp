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

// Prints wall-clock scaling of the Mamba encoder against a matched
// Transformer encoder, plus parallel vs sequential scan timings.

#include <cstdio>

#include "speechmamba/bench.hpp"

int main() {
    const std::int64_t t_short = 1024, t_long = 2048;
    std::printf("encoder forward, T=%lld vs T=%lld (median of 3):\n",
                static_cast<long long>(t_short), static_cast<long long>(t_long));
    const sm::ScalingReport r = sm::bench_encoder_scaling(t_short, t_long, 3);
    std::printf("  mamba:       %8.4fs -> %8.4fs   ratio %.2fx\n", r.mamba_short_s,
                r.mamba_long_s, r.mamba_ratio());
    std::printf("  transformer: %8.4fs -> %8.4fs   ratio %.2fx\n", r.transformer_short_s,
                r.transformer_long_s, r.transformer_ratio());

    std::printf("\nselective scan, parallel vs sequential (median of 3):\n");
    std::printf("  %8s %14s %14s\n", "T", "parallel_s", "sequential_s");
    for (const std::int64_t T : {256, 512, 1024, 2048}) {
        const sm::ScanBenchReport s = sm::bench_scan(T, 16, 16, 3);
        std::printf("  %8lld %14.6f %14.6f\n", static_cast<long long>(T), s.parallel_s,
                    s.sequential_s);
    }
    return 0;
}
