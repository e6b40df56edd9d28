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

// Neural network layers on top of the tensor engine: parameter registry,
// linear/embedding layers, norms, softmax, dropout, positional encoding,
// causal depthwise conv1d, conv2d, multi-head attention, and a
// finite-difference gradient checker.

#ifndef SPEECHMAMBA_NN_HPP
#define SPEECHMAMBA_NN_HPP

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "speechmamba/tensor.hpp"

namespace sm {

// ---------------------------------------------------------------------------
// Parameter registry

class ParamRegistry {
public:
    Tensor add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw ValueError("duplicate parameter name: " + name);
        t.set_requires_grad(true);
        index_[name] = items_.size();
        items_.emplace_back(name, t);
        return t;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ValueError("unknown parameter: " + name);
        return items_[it->second].second;
    }

    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

    std::int64_t total_size() const {
        std::int64_t n = 0;
        for (const auto& [_, t] : items_) n += t.size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, t] : items_) t.zero_grad();
    }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Linear + embedding

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]; undefined when the layer has no bias

    Tensor operator()(const Tensor& x) const {
        Tensor y = matmul(x, weight);
        if (bias.defined()) y = y + bias;
        return y;
    }
};

inline Linear make_linear(ParamRegistry& reg, const std::string& name, std::int64_t in,
                          std::int64_t out, bool with_bias = true, bool zero_init = false) {
    Linear l;
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w = zero_init ? Tensor::zeros({in, out}) : Tensor::rand_uniform({in, out}, -s, s);
    l.weight = reg.add(name + ".weight", w);
    if (with_bias) l.bias = reg.add(name + ".bias", Tensor::zeros({out}));
    return l;
}

struct Embedding {
    Tensor table;  // [V, d]

    Tensor operator()(const IntTensor& ids) const { return embedding_rows(table, ids); }
};

inline Embedding make_embedding(ParamRegistry& reg, const std::string& name, std::int64_t V,
                                std::int64_t d) {
    Embedding e;
    e.table = reg.add(name + ".table", Tensor::randn({V, d}, 0.0, 1.0 / std::sqrt(double(d))));
    return e;
}

// ---------------------------------------------------------------------------
// Activations and softmax

inline Tensor silu(const Tensor& x) { return x * sigmoid(x); }

// Softmax over the last dimension, shifted by a detached row max. The shift
// cancels exactly in both value and gradient.
inline Tensor softmax_lastdim(const Tensor& x) {
    Tensor e = exp(x - max_lastdim_detached(x));
    return e / sum_axis(e, -1, true);
}

inline Tensor log_softmax_lastdim(const Tensor& x) {
    Tensor shifted = x - max_lastdim_detached(x);
    return shifted - log(sum_axis(exp(shifted), -1, true));
}

// ---------------------------------------------------------------------------
// Normalization

struct RmsNorm {
    Tensor weight;  // [d]
    double eps = 1e-6;

    Tensor operator()(const Tensor& x) const {
        Tensor ms = mean_axis(x * x, -1, true);
        return x / sqrt(ms + eps) * weight;
    }
};

inline RmsNorm make_rms_norm(ParamRegistry& reg, const std::string& name, std::int64_t d) {
    RmsNorm n;
    n.weight = reg.add(name + ".weight", Tensor::ones({d}));
    return n;
}

struct LayerNorm {
    Tensor weight;  // [d]
    Tensor bias;    // [d]
    double eps = 1e-5;

    Tensor operator()(const Tensor& x) const {
        Tensor mu = mean_axis(x, -1, true);
        Tensor xc = x - mu;
        Tensor var = mean_axis(xc * xc, -1, true);
        return xc / sqrt(var + eps) * weight + bias;
    }
};

inline LayerNorm make_layer_norm(ParamRegistry& reg, const std::string& name, std::int64_t d) {
    LayerNorm n;
    n.weight = reg.add(name + ".weight", Tensor::ones({d}));
    n.bias = reg.add(name + ".bias", Tensor::zeros({d}));
    return n;
}

// ---------------------------------------------------------------------------
// Dropout

// Inverted dropout: kept activations are scaled by 1/(1-p) so the expected
// value matches evaluation mode. Identity when not training.
inline Tensor dropout(const Tensor& x, double p, bool training) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) throw ValueError("dropout: p must be < 1");
    std::bernoulli_distribution keep(1.0 - p);
    std::vector<double> m(static_cast<std::size_t>(x.size()));
    const double scale = 1.0 / (1.0 - p);
    for (auto& v : m) v = keep(global_rng()) ? scale : 0.0;
    return x * Tensor::from_data(x.shape(), std::move(m));
}

// ---------------------------------------------------------------------------
// Sinusoidal positional encoding: [T, d], no gradient.

inline Tensor sinusoidal_positional_encoding(std::int64_t T, std::int64_t d) {
    if (d % 2 != 0) throw ShapeError("positional encoding requires even dim, got " +
                                     std::to_string(d));
    std::vector<double> pe(static_cast<std::size_t>(T * d));
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t i = 0; i < d / 2; ++i) {
            const double freq = std::pow(10000.0, -2.0 * double(i) / double(d));
            pe[t * d + 2 * i] = std::sin(double(t) * freq);
            pe[t * d + 2 * i + 1] = std::cos(double(t) * freq);
        }
    return Tensor::from_data({T, d}, std::move(pe), false);
}

// ---------------------------------------------------------------------------
// Causal depthwise 1-d convolution
//
// x: [B, T, C], kernel: [C, W], bias: [C]. Output t depends only on inputs
// t-W+1 .. t (zero padded on the left), so the op is strictly causal.

inline Tensor causal_depthwise_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    const Shape& xs = x.shape();
    const Shape& ks = kernel.shape();
    if (xs.size() != 3 || ks.size() != 2 || xs[2] != ks[0])
        throw ShapeError("depthwise conv1d: x " + shape_str(xs) + " kernel " + shape_str(ks));
    const std::int64_t B = xs[0], T = xs[1], C = xs[2], W = ks[1];
    std::vector<double> out(static_cast<std::size_t>(B * T * C));
    const auto& xd = x.data();
    const auto& kd = kernel.data();
    const auto& bd = bias.data();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t t = 0; t < T; ++t) {
            const std::int64_t base = (b * T + t) * C;
            for (std::int64_t c = 0; c < C; ++c) {
                double s = bd[c];
                const std::int64_t w0 = std::max<std::int64_t>(0, W - 1 - t);
                for (std::int64_t w = w0; w < W; ++w)
                    s += kd[c * W + w] * xd[base + (w - (W - 1)) * C + c];
                out[base + c] = s;
            }
        }
    Tensor tx = x, tk = kernel, tb = bias;
    return Tensor::make_op(
        xs, std::move(out), {x, kernel, bias}, [tx, tk, tb, B, T, C, W](TensorNode& self) mutable {
            const auto& g = self.grad;
            const auto& xd2 = tx.data();
            const auto& kd2 = tk.data();
            double* gx = tx.requires_grad() ? tx.grad().data() : nullptr;
            double* gk = tk.requires_grad() ? tk.grad().data() : nullptr;
            double* gb = tb.requires_grad() ? tb.grad().data() : nullptr;
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t t = 0; t < T; ++t) {
                    const std::int64_t base = (b * T + t) * C;
                    for (std::int64_t c = 0; c < C; ++c) {
                        const double go = g[base + c];
                        if (go == 0.0) continue;
                        if (gb) gb[c] += go;
                        const std::int64_t w0 = std::max<std::int64_t>(0, W - 1 - t);
                        for (std::int64_t w = w0; w < W; ++w) {
                            const std::int64_t xoff = base + (w - (W - 1)) * C + c;
                            if (gk) gk[c * W + w] += go * xd2[xoff];
                            if (gx) gx[xoff] += go * kd2[c * W + w];
                        }
                    }
                }
        });
}

// ---------------------------------------------------------------------------
// 2-d convolution (frontend subsampling)
//
// x: [B, Cin, H, W], kernel: [Cout, Cin, kh, kw], bias: [Cout].
// Output spatial size: floor((H + 2*pad - kh)/stride) + 1.

inline Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                     std::int64_t stride, std::int64_t pad) {
    const Shape& xs = x.shape();
    const Shape& ks = kernel.shape();
    if (xs.size() != 4 || ks.size() != 4 || xs[1] != ks[1])
        throw ShapeError("conv2d: x " + shape_str(xs) + " kernel " + shape_str(ks));
    const std::int64_t B = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
    const std::int64_t Cout = ks[0], kh = ks[2], kw = ks[3];
    const std::int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const std::int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0)
        throw ShapeError("conv2d: empty output for input " + shape_str(xs));
    std::vector<double> out(static_cast<std::size_t>(B * Cout * Ho * Wo));
    const auto& xd = x.data();
    const auto& kd = kernel.data();
    const auto& bd = bias.data();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t co = 0; co < Cout; ++co)
            for (std::int64_t ho = 0; ho < Ho; ++ho)
                for (std::int64_t wo = 0; wo < Wo; ++wo) {
                    double s = bd[co];
                    for (std::int64_t ci = 0; ci < Cin; ++ci)
                        for (std::int64_t i = 0; i < kh; ++i) {
                            const std::int64_t hi = ho * stride - pad + i;
                            if (hi < 0 || hi >= H) continue;
                            for (std::int64_t j = 0; j < kw; ++j) {
                                const std::int64_t wi = wo * stride - pad + j;
                                if (wi < 0 || wi >= W) continue;
                                s += kd[((co * Cin + ci) * kh + i) * kw + j] *
                                     xd[((b * Cin + ci) * H + hi) * W + wi];
                            }
                        }
                    out[((b * Cout + co) * Ho + ho) * Wo + wo] = s;
                }
    Tensor tx = x, tk = kernel, tb = bias;
    return Tensor::make_op(
        {B, Cout, Ho, Wo}, std::move(out), {x, kernel, bias},
        [tx, tk, tb, B, Cin, H, W, Cout, kh, kw, Ho, Wo, stride, pad](TensorNode& self) mutable {
            const auto& g = self.grad;
            const auto& xd2 = tx.data();
            const auto& kd2 = tk.data();
            double* gx = tx.requires_grad() ? tx.grad().data() : nullptr;
            double* gk = tk.requires_grad() ? tk.grad().data() : nullptr;
            double* gb = tb.requires_grad() ? tb.grad().data() : nullptr;
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t co = 0; co < Cout; ++co)
                    for (std::int64_t ho = 0; ho < Ho; ++ho)
                        for (std::int64_t wo = 0; wo < Wo; ++wo) {
                            const double go = g[((b * Cout + co) * Ho + ho) * Wo + wo];
                            if (go == 0.0) continue;
                            if (gb) gb[co] += go;
                            for (std::int64_t ci = 0; ci < Cin; ++ci)
                                for (std::int64_t i = 0; i < kh; ++i) {
                                    const std::int64_t hi = ho * stride - pad + i;
                                    if (hi < 0 || hi >= H) continue;
                                    for (std::int64_t j = 0; j < kw; ++j) {
                                        const std::int64_t wi = wo * stride - pad + j;
                                        if (wi < 0 || wi >= W) continue;
                                        const std::int64_t koff =
                                            ((co * Cin + ci) * kh + i) * kw + j;
                                        const std::int64_t xoff =
                                            ((b * Cin + ci) * H + hi) * W + wi;
                                        if (gk) gk[koff] += go * xd2[xoff];
                                        if (gx) gx[xoff] += go * kd2[koff];
                                    }
                                }
                        }
        });
}

struct Conv2d {
    Tensor kernel;  // [Cout, Cin, kh, kw]
    Tensor bias;    // [Cout]
    std::int64_t stride = 1;
    std::int64_t pad = 0;

    Tensor operator()(const Tensor& x) const { return conv2d(x, kernel, bias, stride, pad); }
};

inline Conv2d make_conv2d(ParamRegistry& reg, const std::string& name, std::int64_t cin,
                          std::int64_t cout, std::int64_t k, std::int64_t stride,
                          std::int64_t pad) {
    Conv2d c;
    const double s = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
    c.kernel = reg.add(name + ".kernel", Tensor::rand_uniform({cout, cin, k, k}, -s, s));
    c.bias = reg.add(name + ".bias", Tensor::zeros({cout}));
    c.stride = stride;
    c.pad = pad;
    return c;
}

// ---------------------------------------------------------------------------
// Multi-head attention

struct AttentionParams {
    Linear q, k, v, o;
    std::int64_t n_heads = 1;
};

inline AttentionParams make_attention(ParamRegistry& reg, const std::string& name,
                                      std::int64_t d_model, std::int64_t n_heads) {
    if (d_model % n_heads != 0)
        throw ShapeError("attention: d_model " + std::to_string(d_model) +
                         " not divisible by heads " + std::to_string(n_heads));
    AttentionParams p;
    p.q = make_linear(reg, name + ".q", d_model, d_model);
    p.k = make_linear(reg, name + ".k", d_model, d_model);
    p.v = make_linear(reg, name + ".v", d_model, d_model);
    // residual branches start as identity: the output projection is zero
    p.o = make_linear(reg, name + ".o", d_model, d_model, true, true);
    p.n_heads = n_heads;
    return p;
}

namespace detail {
// A query row with every key masked out would softmax over nothing; reject it.
inline void check_mask_rows(const BoolMask& mask) {
    if (mask.shape.empty()) throw ShapeError("attention mask must have a key dimension");
    const std::int64_t tk = mask.shape.back();
    const std::int64_t rows = numel(mask.shape) / tk;
    for (std::int64_t r = 0; r < rows; ++r) {
        bool any = false;
        for (std::int64_t i = 0; i < tk && !any; ++i) any = mask.data[r * tk + i] != 0;
        if (!any)
            throw ValueError("attention: query row " + std::to_string(r) +
                             " has all keys masked");
    }
}
}  // namespace detail

// query [B,Tq,d], memory [B,Tk,d]; mask broadcasts over scores [B,h,Tq,Tk]
// with 1 = may attend. Returns [B,Tq,d].
inline Tensor multi_head_attention(const AttentionParams& p, const Tensor& query,
                                   const Tensor& memory, const BoolMask* mask = nullptr,
                                   double dropout_p = 0.0, bool training = false) {
    const std::int64_t B = query.dim(0), Tq = query.dim(1), d = query.dim(2);
    const std::int64_t Tk = memory.dim(1);
    const std::int64_t h = p.n_heads, dh = d / h;
    auto split_heads = [&](const Tensor& x, std::int64_t t) {
        return transpose(reshape(x, {B, t, h, dh}), {0, 2, 1, 3});  // [B,h,T,dh]
    };
    Tensor q = split_heads(p.q(query), Tq);
    Tensor k = split_heads(p.k(memory), Tk);
    Tensor v = split_heads(p.v(memory), Tk);
    Tensor scores = matmul(q, transpose_last2(k)) * (1.0 / std::sqrt(double(dh)));
    if (mask) {
        detail::check_mask_rows(*mask);
        scores = masked_fill(scores, *mask, -1e30);
    }
    Tensor attn = softmax_lastdim(scores);
    attn = dropout(attn, dropout_p, training);
    Tensor ctx = matmul(attn, v);                                  // [B,h,Tq,dh]
    Tensor merged = reshape(transpose(ctx, {0, 2, 1, 3}), {B, Tq, d});
    return p.o(merged);
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    bool ok = true;
    std::string worst_param;
};

// Central-difference check of d loss / d params against reverse mode.
// Relative error uses max(|a|,|b|,1e-2) in the denominator so near-zero
// gradients are compared absolutely.
inline GradCheckResult grad_check(const std::string& name,
                                  const std::function<Tensor()>& f,
                                  std::vector<std::pair<std::string, Tensor>> params, double eps,
                                  double tol) {
    GradCheckResult res;
    res.name = name;
    for (auto& [_, t] : params) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tensor loss = f();
    loss.backward();
    std::vector<std::vector<double>> ad;
    ad.reserve(params.size());
    for (auto& [_, t] : params) ad.push_back(t.grad());
    NoGradGuard ng;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].second.data();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + eps;
            const double up = f().item();
            vals[i] = orig - eps;
            const double dn = f().item();
            vals[i] = orig;
            const double fd = (up - dn) / (2.0 * eps);
            const double a = ad[pi][i];
            const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-2});
            if (err > res.max_rel_err) {
                res.max_rel_err = err;
                res.worst_param = params[pi].first + "[" + std::to_string(i) + "]";
            }
        }
    }
    res.ok = res.max_rel_err < tol;
    return res;
}

}  // namespace sm

#endif  // SPEECHMAMBA_NN_HPP
