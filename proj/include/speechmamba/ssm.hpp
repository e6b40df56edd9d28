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

// Selective state space model (S6): input-dependent (dt, B, C) projections,
// zero-order-hold discretization, and the linear recurrence
//
//     h_t = Abar_t (.) h_{t-1} + Bbar_t (.) x_t
//     y_t = <C_t, h_t> + D (.) x_t
//
// evaluated either step by step or with a Blelloch-style associative scan.
// A is diagonal and strictly negative (stored as -exp(logA)), dt comes out of
// a softplus, so Abar = exp(dt*A) lies in (0,1) and the recurrence is stable.

#ifndef SPEECHMAMBA_SSM_HPP
#define SPEECHMAMBA_SSM_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "speechmamba/nn.hpp"
#include "speechmamba/tensor.hpp"

namespace sm {

struct SsmConfig {
    std::int64_t d_inner = 0;
    std::int64_t state_dim = 256;
    std::int64_t dt_rank = 0;  // 0 selects ceil(d_inner/16)

    std::int64_t effective_dt_rank() const {
        if (dt_rank > 0) return dt_rank;
        return (d_inner + 15) / 16;
    }
    void validate() const {
        if (d_inner < 1) throw ValueError("SsmConfig: d_inner must be >= 1");
        if (state_dim < 1) throw ValueError("SsmConfig: state_dim must be >= 1");
        if (effective_dt_rank() < 1) throw ValueError("SsmConfig: dt_rank must be >= 1");
    }
};

struct SsmParams {
    Tensor logA;   // [d_inner, N]; A = -exp(logA)
    Tensor D;      // [d_inner]
    Tensor W_dt1;  // [d_inner, dt_rank]   low-rank dt projection, first factor
    Tensor W_dt2;  // [dt_rank, d_inner]   second factor
    Tensor b_dt;   // [d_inner]
    Tensor W_B;    // [d_inner, N]
    Tensor W_C;    // [d_inner, N]
};

// A_n = -(n+1) per state index; D = 1; b_dt chosen so softplus(b_dt) lands in
// [0.001, 0.1] (log-uniform per channel).
inline SsmParams make_ssm_params(ParamRegistry& reg, const std::string& name,
                                 const SsmConfig& cfg) {
    cfg.validate();
    const std::int64_t C = cfg.d_inner, N = cfg.state_dim, R = cfg.effective_dt_rank();
    SsmParams p;
    std::vector<double> la(static_cast<std::size_t>(C * N));
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t n = 0; n < N; ++n) la[c * N + n] = std::log(double(n + 1));
    p.logA = reg.add(name + ".logA", Tensor::from_data({C, N}, std::move(la)));
    p.D = reg.add(name + ".D", Tensor::ones({C}));
    const double s_in = 1.0 / std::sqrt(double(C));
    const double s_r = 1.0 / std::sqrt(double(R));
    p.W_dt1 = reg.add(name + ".W_dt1", Tensor::rand_uniform({C, R}, -s_in, s_in));
    p.W_dt2 = reg.add(name + ".W_dt2", Tensor::rand_uniform({R, C}, -s_r, s_r));
    std::vector<double> bdt(static_cast<std::size_t>(C));
    std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
    for (auto& v : bdt) {
        const double dt = std::exp(u(global_rng()));
        v = std::log(std::expm1(dt));  // softplus(v) == dt
    }
    p.b_dt = reg.add(name + ".b_dt", Tensor::from_data({C}, std::move(bdt)));
    p.W_B = reg.add(name + ".W_B", Tensor::rand_uniform({C, N}, -s_in, s_in));
    p.W_C = reg.add(name + ".W_C", Tensor::rand_uniform({C, N}, -s_in, s_in));
    return p;
}

// ---------------------------------------------------------------------------
// Flop accounting for the scan kernels

struct FlopCounter {
    std::uint64_t flops = 0;
    bool active = false;
};

inline FlopCounter& flop_counter() {
    thread_local FlopCounter fc;
    return fc;
}

inline void flop_count_begin() { flop_counter() = {0, true}; }

inline std::uint64_t flop_count_end() {
    FlopCounter& fc = flop_counter();
    fc.active = false;
    return fc.flops;
}

// ---------------------------------------------------------------------------
// Input-dependent projections
//
// x: [B,T,d_inner] -> dt [B,T,d_inner], Bsel [B,T,N], Csel [B,T,N].
// B/C projections are shared across channels; dt uses a low-rank factorization
// followed by a softplus so dt > 0 for every input.

inline void selective_projections(const Tensor& x, const SsmParams& p, Tensor& dt, Tensor& bsel,
                                  Tensor& csel) {
    if (x.rank() != 3) throw ShapeError("selective_projections: x must be [B,T,d], got " +
                                        shape_str(x.shape()));
    dt = softplus(matmul(matmul(x, p.W_dt1), p.W_dt2) + p.b_dt);
    bsel = matmul(x, p.W_B);
    csel = matmul(x, p.W_C);
}

// ---------------------------------------------------------------------------
// Discretization (materialized form, used by the standalone scans)
//
// Abar = exp(dt (.) A), Bbar = dt (.) Bsel, both [B,T,d_inner,N].

inline void discretize(const Tensor& logA, const Tensor& bsel, const Tensor& dt, Tensor& abar,
                       Tensor& bbar) {
    const std::int64_t B = dt.dim(0), T = dt.dim(1), C = dt.dim(2);
    const std::int64_t N = logA.dim(1);
    if (logA.dim(0) != C || bsel.dim(2) != N)
        throw ShapeError("discretize: logA " + shape_str(logA.shape()) + " bsel " +
                         shape_str(bsel.shape()) + " dt " + shape_str(dt.shape()));
    Tensor A = neg(exp(logA));                               // [C,N]
    Tensor dt4 = reshape(dt, {B, T, C, 1});
    abar = exp(dt4 * A);                                     // [B,T,C,N]
    for (double v : abar.data())
        if (!std::isfinite(v)) throw ValueError("discretize: non-finite Abar");
    bbar = dt4 * reshape(bsel, {B, T, 1, N});                // [B,T,C,N]
}

// ---------------------------------------------------------------------------
// Scan element algebra

// One step of the recurrence h -> a*h + b, per (channel, state) lane.
struct ScanElement {
    double a;
    double b;
};

// Composition of "first apply l, then r". Associative; not commutative.
inline ScanElement combine(const ScanElement& l, const ScanElement& r) {
    return {l.a * r.a, r.a * l.b + r.b};
}

namespace detail {

// In-place inclusive Blelloch scan: up-sweep reduce, down-sweep to the
// exclusive prefix, then one combine with the original element.
inline void blelloch_inclusive(std::vector<ScanElement>& e, std::vector<ScanElement>& scratch) {
    const std::size_t n = e.size();
    std::size_t p2 = 1;
    while (p2 < n) p2 <<= 1;
    scratch.assign(p2, ScanElement{1.0, 0.0});
    std::copy(e.begin(), e.end(), scratch.begin());
    std::uint64_t combines = 0;
    for (std::size_t d = 1; d < p2; d <<= 1) {
        for (std::size_t i = 2 * d - 1; i < p2; i += 2 * d) {
            scratch[i] = combine(scratch[i - d], scratch[i]);
            ++combines;
        }
    }
    scratch[p2 - 1] = {1.0, 0.0};
    for (std::size_t d = p2 >> 1; d >= 1; d >>= 1) {
        for (std::size_t i = 2 * d - 1; i < p2; i += 2 * d) {
            // parent carries the exclusive prefix P; left child sum is L.
            // Left child inherits P, right child becomes P then L.
            const ScanElement left_sum = scratch[i - d];
            scratch[i - d] = scratch[i];
            scratch[i] = combine(scratch[i - d], left_sum);
            ++combines;
        }
        if (d == 1) break;
    }
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = combine(scratch[i], e[i]);
        ++combines;
    }
    FlopCounter& fc = flop_counter();
    if (fc.active) fc.flops += combines * 3;
}

inline void check_scan_shapes(const Tensor& abar, const Tensor& bbar, const Tensor& csel,
                              const Tensor& x, const Tensor& D) {
    if (abar.rank() != 4 || bbar.shape() != abar.shape())
        throw ShapeError("scan: Abar " + shape_str(abar.shape()) + " Bbar " +
                         shape_str(bbar.shape()));
    if (x.rank() != 3 || x.dim(0) != abar.dim(0) || x.dim(1) != abar.dim(1) ||
        x.dim(2) != abar.dim(2))
        throw ShapeError("scan: x " + shape_str(x.shape()) + " vs Abar " +
                         shape_str(abar.shape()));
    if (csel.rank() != 3 || csel.dim(2) != abar.dim(3))
        throw ShapeError("scan: Csel " + shape_str(csel.shape()) + " vs Abar " +
                         shape_str(abar.shape()));
    if (D.rank() != 1 || D.dim(0) != abar.dim(2))
        throw ShapeError("scan: D " + shape_str(D.shape()));
}

}  // namespace detail

// Reference evaluation, one timestep after another. Value-level (no autodiff):
// the differentiable path is selective_scan below.
inline Tensor ssm_scan_sequential(const Tensor& abar, const Tensor& bbar, const Tensor& csel,
                                  const Tensor& x, const Tensor& D) {
    detail::check_scan_shapes(abar, bbar, csel, x, D);
    const std::int64_t B = abar.dim(0), T = abar.dim(1), C = abar.dim(2), N = abar.dim(3);
    std::vector<double> y(static_cast<std::size_t>(B * T * C));
    const auto& ad = abar.data();
    const auto& bd = bbar.data();
    const auto& cd = csel.data();
    const auto& xd = x.data();
    const auto& Dd = D.data();
    std::vector<double> h(static_cast<std::size_t>(N));
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c) {
            std::fill(h.begin(), h.end(), 0.0);
            for (std::int64_t t = 0; t < T; ++t) {
                const std::int64_t off = ((b * T + t) * C + c) * N;
                const double xv = xd[(b * T + t) * C + c];
                const double* crow = cd.data() + (b * T + t) * N;
                double acc = 0.0;
                for (std::int64_t n = 0; n < N; ++n) {
                    h[n] = ad[off + n] * h[n] + bd[off + n] * xv;
                    acc += crow[n] * h[n];
                }
                y[(b * T + t) * C + c] = acc + Dd[c] * xv;
            }
        }
    FlopCounter& fc = flop_counter();
    if (fc.active) fc.flops += std::uint64_t(B) * T * C * (5 * N + 2);
    for (double v : y)
        if (!std::isfinite(v)) throw ValueError("ssm_scan_sequential: non-finite output");
    return Tensor::from_data({B, T, C}, std::move(y));
}

// Same recurrence through the associative scan. Lane order (batch, channel,
// state) is fixed; the combine is associative but not commutative.
inline Tensor ssm_scan_parallel(const Tensor& abar, const Tensor& bbar, const Tensor& csel,
                                const Tensor& x, const Tensor& D) {
    detail::check_scan_shapes(abar, bbar, csel, x, D);
    const std::int64_t B = abar.dim(0), T = abar.dim(1), C = abar.dim(2), N = abar.dim(3);
    std::vector<double> y(static_cast<std::size_t>(B * T * C), 0.0);
    const auto& ad = abar.data();
    const auto& bd = bbar.data();
    const auto& cd = csel.data();
    const auto& xd = x.data();
    const auto& Dd = D.data();
    std::vector<ScanElement> lane(static_cast<std::size_t>(T));
    std::vector<ScanElement> scratch;
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t n = 0; n < N; ++n) {
                for (std::int64_t t = 0; t < T; ++t) {
                    const std::int64_t off = ((b * T + t) * C + c) * N + n;
                    lane[t] = {ad[off], bd[off] * xd[(b * T + t) * C + c]};
                }
                detail::blelloch_inclusive(lane, scratch);
                for (std::int64_t t = 0; t < T; ++t)
                    y[(b * T + t) * C + c] += cd[(b * T + t) * N + n] * lane[t].b;
            }
            for (std::int64_t t = 0; t < T; ++t) {
                const std::int64_t i = (b * T + t) * C + c;
                y[i] += Dd[c] * xd[i];
            }
        }
    FlopCounter& fc = flop_counter();
    if (fc.active) fc.flops += std::uint64_t(B) * T * C * (3 * N + 2);
    for (double v : y)
        if (!std::isfinite(v)) throw ValueError("ssm_scan_parallel: non-finite output");
    return Tensor::from_data({B, T, C}, std::move(y));
}

// ---------------------------------------------------------------------------
// Fused differentiable scan
//
// Takes the projection outputs directly and never materializes [B,T,C,N]
// tensors: Abar/Bbar are rebuilt per lane from dt, Bsel, and logA, and the
// backward pass recomputes the hidden states instead of storing them, keeping
// the graph's persistent memory at O(T * d_inner).

namespace detail {

struct FusedDims {
    std::int64_t B, T, C, N;
};

inline FusedDims fused_dims(const Tensor& dt, const Tensor& bsel, const Tensor& csel,
                            const Tensor& x, const Tensor& logA, const Tensor& D) {
    if (dt.rank() != 3 || x.shape() != dt.shape())
        throw ShapeError("selective_scan: dt " + shape_str(dt.shape()) + " x " +
                         shape_str(x.shape()));
    const std::int64_t B = dt.dim(0), T = dt.dim(1), C = dt.dim(2);
    if (logA.rank() != 2 || logA.dim(0) != C)
        throw ShapeError("selective_scan: logA " + shape_str(logA.shape()));
    const std::int64_t N = logA.dim(1);
    if (bsel.shape() != Shape{B, T, N} || csel.shape() != Shape{B, T, N})
        throw ShapeError("selective_scan: Bsel " + shape_str(bsel.shape()) + " Csel " +
                         shape_str(csel.shape()));
    if (D.shape() != Shape{C}) throw ShapeError("selective_scan: D " + shape_str(D.shape()));
    return {B, T, C, N};
}

// Rebuilds one (b,c,n) lane of scan elements.
inline void build_lane(const double* dtp, const double* bselp, const double* xp, double A,
                       std::int64_t T, std::int64_t C, std::int64_t N, std::int64_t c,
                       std::int64_t n, std::vector<ScanElement>& lane) {
    for (std::int64_t t = 0; t < T; ++t) {
        const double dtv = dtp[t * C + c];
        lane[t] = {std::exp(dtv * A), dtv * bselp[t * N + n] * xp[t * C + c]};
    }
}

}  // namespace detail

// Forward + custom backward for y = SSM(dt, Bsel, Csel, x; A = -exp(logA), D).
inline Tensor selective_scan(const Tensor& dt, const Tensor& bsel, const Tensor& csel,
                             const Tensor& x, const Tensor& logA, const Tensor& D,
                             bool parallel = true) {
    const auto [B, T, C, N] = detail::fused_dims(dt, bsel, csel, x, logA, D);
    std::vector<double> y(static_cast<std::size_t>(B * T * C), 0.0);
    const auto& dtd = dt.data();
    const auto& bseld = bsel.data();
    const auto& cseld = csel.data();
    const auto& xd = x.data();
    const auto& lad = logA.data();
    const auto& Dd = D.data();

    if (parallel) {
        std::vector<ScanElement> lane(static_cast<std::size_t>(T));
        std::vector<ScanElement> scratch;
        for (std::int64_t b = 0; b < B; ++b) {
            const double* dtp = dtd.data() + b * T * C;
            const double* bselp = bseld.data() + b * T * N;
            const double* cselp = cseld.data() + b * T * N;
            const double* xp = xd.data() + b * T * C;
            double* yp = y.data() + b * T * C;
            for (std::int64_t c = 0; c < C; ++c) {
                for (std::int64_t n = 0; n < N; ++n) {
                    const double A = -std::exp(lad[c * N + n]);
                    detail::build_lane(dtp, bselp, xp, A, T, C, N, c, n, lane);
                    detail::blelloch_inclusive(lane, scratch);
                    for (std::int64_t t = 0; t < T; ++t)
                        yp[t * C + c] += cselp[t * N + n] * lane[t].b;
                }
                for (std::int64_t t = 0; t < T; ++t)
                    yp[t * C + c] += Dd[c] * xp[t * C + c];
            }
        }
        FlopCounter& fc = flop_counter();
        if (fc.active) fc.flops += std::uint64_t(B) * T * C * (6 * N + 2);
    } else {
        std::vector<double> h(static_cast<std::size_t>(N));
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t c = 0; c < C; ++c) {
                std::fill(h.begin(), h.end(), 0.0);
                const double* Arow = lad.data() + c * N;
                for (std::int64_t t = 0; t < T; ++t) {
                    const std::int64_t bt = b * T + t;
                    const double dtv = dtd[bt * C + c];
                    const double xv = xd[bt * C + c];
                    const double* brow = bseld.data() + bt * N;
                    const double* crow = cseld.data() + bt * N;
                    double acc = 0.0;
                    for (std::int64_t n = 0; n < N; ++n) {
                        const double a = std::exp(-dtv * std::exp(Arow[n]));
                        h[n] = a * h[n] + dtv * brow[n] * xv;
                        acc += crow[n] * h[n];
                    }
                    y[bt * C + c] = acc + Dd[c] * xv;
                }
            }
        FlopCounter& fc = flop_counter();
        if (fc.active) fc.flops += std::uint64_t(B) * T * C * (8 * N + 2);
    }
    for (double v : y)
        if (!std::isfinite(v)) throw ValueError("selective_scan: non-finite output");

    Tensor tdt = dt, tbsel = bsel, tcsel = csel, tx = x, tlogA = logA, tD = D;
    const std::int64_t Bc = B, Tc = T, Cc = C, Nc = N;
    return Tensor::make_op(
        {B, T, C}, std::move(y), {dt, bsel, csel, x, logA, D},
        [tdt, tbsel, tcsel, tx, tlogA, tD, Bc, Tc, Cc, Nc](TensorNode& self) mutable {
            const std::int64_t B2 = Bc, T2 = Tc, C2 = Cc, N2 = Nc;
            const auto& g = self.grad;
            const auto& dtd2 = tdt.data();
            const auto& bseld2 = tbsel.data();
            const auto& cseld2 = tcsel.data();
            const auto& xd2 = tx.data();
            const auto& lad2 = tlogA.data();
            const auto& Dd2 = tD.data();
            double* gdt = tdt.requires_grad() ? tdt.grad().data() : nullptr;
            double* gbsel = tbsel.requires_grad() ? tbsel.grad().data() : nullptr;
            double* gcsel = tcsel.requires_grad() ? tcsel.grad().data() : nullptr;
            double* gx = tx.requires_grad() ? tx.grad().data() : nullptr;
            double* glogA = tlogA.requires_grad() ? tlogA.grad().data() : nullptr;
            double* gD = tD.requires_grad() ? tD.grad().data() : nullptr;

            // lane-local recomputed hidden states: H[t*N+n] = h_t, O(T*N) scratch
            std::vector<double> H(static_cast<std::size_t>(T2 * N2));
            std::vector<double> gh(static_cast<std::size_t>(N2));
            for (std::int64_t b = 0; b < B2; ++b)
                for (std::int64_t c = 0; c < C2; ++c) {
                    const double* Arow = lad2.data() + c * N2;
                    // forward recompute of h for this lane
                    for (std::int64_t t = 0; t < T2; ++t) {
                        const std::int64_t bt = b * T2 + t;
                        const double dtv = dtd2[bt * C2 + c];
                        const double xv = xd2[bt * C2 + c];
                        const double* brow = bseld2.data() + bt * N2;
                        for (std::int64_t n = 0; n < N2; ++n) {
                            const double a = std::exp(-dtv * std::exp(Arow[n]));
                            const double prev = t > 0 ? H[(t - 1) * N2 + n] : 0.0;
                            H[t * N2 + n] = a * prev + dtv * brow[n] * xv;
                        }
                    }
                    // reverse sweep
                    std::fill(gh.begin(), gh.end(), 0.0);
                    for (std::int64_t t = T2 - 1; t >= 0; --t) {
                        const std::int64_t bt = b * T2 + t;
                        const double go = g[bt * C2 + c];
                        const double dtv = dtd2[bt * C2 + c];
                        const double xv = xd2[bt * C2 + c];
                        const double* brow = bseld2.data() + bt * N2;
                        const double* crow = cseld2.data() + bt * N2;
                        double gdt_acc = 0.0, gx_acc = 0.0;
                        for (std::int64_t n = 0; n < N2; ++n) {
                            const double A = -std::exp(Arow[n]);
                            const double a = std::exp(dtv * A);
                            const double h = H[t * N2 + n];
                            const double hprev = t > 0 ? H[(t - 1) * N2 + n] : 0.0;
                            double ghn = gh[n] + go * crow[n];
                            if (gcsel) gcsel[bt * N2 + n] += go * h;
                            // h = a*hprev + dt*bsel*x
                            const double ga = ghn * hprev;
                            gdt_acc += ga * A * a + ghn * brow[n] * xv;
                            if (glogA) glogA[c * N2 + n] += ga * dtv * a * A;
                            if (gbsel) gbsel[bt * N2 + n] += ghn * dtv * xv;
                            gx_acc += ghn * dtv * brow[n];
                            gh[n] = ghn * a;
                        }
                        if (gdt) gdt[bt * C2 + c] += gdt_acc;
                        if (gx) gx[bt * C2 + c] += gx_acc + go * Dd2[c];
                        if (gD) gD[c] += go * xv;
                    }
                }
        });
}

// Projections -> fused scan; differentiable end to end.
inline Tensor selective_ssm_forward(const Tensor& x, const SsmParams& p, bool parallel = true) {
    Tensor dt, bsel, csel;
    selective_projections(x, p, dt, bsel, csel);
    return selective_scan(dt, bsel, csel, x, p.logA, p.D, parallel);
}

}  // namespace sm

#endif  // SPEECHMAMBA_SSM_HPP
