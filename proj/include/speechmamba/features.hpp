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

// Log-Mel filterbank features: radix-2 FFT, Hamming-windowed framing, HTK
// Mel triangular filters over the magnitude spectrum, and a binary feature
// cache format.

#ifndef SPEECHMAMBA_FEATURES_HPP
#define SPEECHMAMBA_FEATURES_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "speechmamba/tensor.hpp"

namespace sm {

// In-place iterative radix-2 Cooley-Tukey FFT. Size must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw ValueError("fft_radix2: size " + std::to_string(n) + " is not a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.14159265358979323846;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

struct FbankConfig {
    std::int64_t sample_rate = 16000;
    std::int64_t n_mels = 80;
    std::int64_t win_ms = 25;
    std::int64_t hop_ms = 10;
    std::int64_t fft_size = 512;
    double mel_fmin = 0.0;
    double mel_fmax = 8000.0;
    double log_floor = 1e-10;

    std::int64_t win_samples() const { return sample_rate * win_ms / 1000; }
    std::int64_t hop_samples() const { return sample_rate * hop_ms / 1000; }

    void validate() const {
        if (sample_rate <= 0) throw ValueError("FbankConfig: sample_rate must be positive");
        if (n_mels < 1) throw ValueError("FbankConfig: n_mels must be >= 1");
        if (win_ms < hop_ms) throw ValueError("FbankConfig: win_ms must be >= hop_ms");
        if (fft_size < win_samples())
            throw ValueError("FbankConfig: fft_size smaller than the window");
        if ((fft_size & (fft_size - 1)) != 0)
            throw ValueError("FbankConfig: fft_size must be a power of two");
        if (mel_fmin < 0.0 || mel_fmax <= mel_fmin)
            throw ValueError("FbankConfig: need 0 <= mel_fmin < mel_fmax");
        if (mel_fmax > static_cast<double>(sample_rate) / 2.0)
            throw ValueError("FbankConfig: mel_fmax beyond Nyquist");
        if (log_floor <= 0.0) throw ValueError("FbankConfig: log_floor must be positive");
    }
};

inline std::int64_t fbank_frame_count(std::int64_t n_samples, const FbankConfig& cfg) {
    return 1 + (n_samples - cfg.win_samples()) / cfg.hop_samples();
}

namespace detail {

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filter weights, [n_mels, fft_size/2 + 1].
inline std::vector<double> mel_filterbank(const FbankConfig& cfg) {
    const std::int64_t n_bins = cfg.fft_size / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.mel_fmin);
    const double mel_hi = hz_to_mel(cfg.mel_fmax);
    std::vector<double> centers(static_cast<std::size_t>(cfg.n_mels + 2));
    for (std::int64_t k = 0; k < cfg.n_mels + 2; ++k)
        centers[k] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(k) /
                                            static_cast<double>(cfg.n_mels + 1));
    std::vector<double> fb(static_cast<std::size_t>(cfg.n_mels * n_bins), 0.0);
    for (std::int64_t m = 0; m < cfg.n_mels; ++m) {
        const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
        for (std::int64_t b = 0; b < n_bins; ++b) {
            const double f = static_cast<double>(b) * static_cast<double>(cfg.sample_rate) /
                             static_cast<double>(cfg.fft_size);
            double w = 0.0;
            if (f > lo && f < mid)
                w = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                w = (hi - f) / (hi - mid);
            fb[m * n_bins + b] = w;
        }
    }
    return fb;
}

}  // namespace detail

// samples: mono at cfg.sample_rate. Returns [T, n_mels] log-Mel features;
// framing uses no centering padding, so T = 1 + floor((len - win) / hop).
inline Tensor fbank(const std::vector<double>& samples, const FbankConfig& cfg) {
    cfg.validate();
    const std::int64_t win = cfg.win_samples(), hop = cfg.hop_samples();
    const auto n = static_cast<std::int64_t>(samples.size());
    if (n < win)
        throw ValueError("fbank: input of " + std::to_string(n) +
                         " samples is shorter than the " + std::to_string(win) +
                         "-sample window");
    const std::int64_t T = fbank_frame_count(n, cfg);
    const std::int64_t n_bins = cfg.fft_size / 2 + 1;
    const auto fb = detail::mel_filterbank(cfg);

    std::vector<double> hamming(static_cast<std::size_t>(win));
    const double pi = 3.14159265358979323846;
    for (std::int64_t i = 0; i < win; ++i)
        hamming[i] = 0.54 - 0.46 * std::cos(2.0 * pi * static_cast<double>(i) /
                                            static_cast<double>(win - 1));

    std::vector<double> out(static_cast<std::size_t>(T * cfg.n_mels));
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size));
    std::vector<double> mag(static_cast<std::size_t>(n_bins));
    for (std::int64_t t = 0; t < T; ++t) {
        const std::int64_t off = t * hop;
        for (std::int64_t i = 0; i < win; ++i)
            buf[i] = samples[static_cast<std::size_t>(off + i)] * hamming[i];
        for (std::int64_t i = win; i < cfg.fft_size; ++i) buf[i] = 0.0;
        fft_radix2(buf);
        for (std::int64_t b = 0; b < n_bins; ++b) mag[b] = std::abs(buf[b]);
        for (std::int64_t m = 0; m < cfg.n_mels; ++m) {
            double acc = 0.0;
            const double* row = fb.data() + m * n_bins;
            for (std::int64_t b = 0; b < n_bins; ++b) acc += row[b] * mag[b];
            out[t * cfg.n_mels + m] = std::log(std::max(acc, cfg.log_floor));
        }
    }
    return Tensor::from_data({T, cfg.n_mels}, std::move(out));
}

// ---------------------------------------------------------------------------
// Feature cache: {T:int32, D:int32, row-major float32}, little-endian.

inline void write_feature_cache(const std::string& path, const Tensor& feats) {
    if (feats.rank() != 2)
        throw ShapeError("write_feature_cache: expected [T,D], got " + shape_str(feats.shape()));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create " + path);
    const auto T = static_cast<std::int32_t>(feats.dim(0));
    const auto D = static_cast<std::int32_t>(feats.dim(1));
    f.write(reinterpret_cast<const char*>(&T), 4);
    f.write(reinterpret_cast<const char*>(&D), 4);
    for (double v : feats.data()) {
        const auto x = static_cast<float>(v);
        f.write(reinterpret_cast<const char*>(&x), 4);
    }
    if (!f) throw IoError("write failed on " + path);
}

inline Tensor read_feature_cache(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::int32_t T = 0, D = 0;
    f.read(reinterpret_cast<char*>(&T), 4);
    f.read(reinterpret_cast<char*>(&D), 4);
    if (!f || T < 0 || D <= 0) throw IoError(path + ": bad feature cache header");
    std::vector<double> data(static_cast<std::size_t>(T) * static_cast<std::size_t>(D));
    for (auto& v : data) {
        float x = 0.0f;
        f.read(reinterpret_cast<char*>(&x), 4);
        v = static_cast<double>(x);
    }
    if (!f) throw IoError(path + ": truncated feature cache");
    return Tensor::from_data({T, D}, std::move(data));
}

}  // namespace sm

#endif  // SPEECHMAMBA_FEATURES_HPP
