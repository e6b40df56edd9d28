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

// Dense double-precision tensors with reverse-mode automatic differentiation.
// Eager evaluation; the graph is recorded only while grad mode is on and at
// least one operand requires gradients. Broadcasting aligns trailing
// dimensions; a broadcast gradient is reduced back to the operand shape.

#ifndef SPEECHMAMBA_TENSOR_HPP
#define SPEECHMAMBA_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sm {

using Shape = std::vector<std::int64_t>;

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class ValueError : public Error {
public:
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

inline Shape contiguous_strides(const Shape& shape) {
    Shape st(shape.size(), 1);
    for (std::int64_t i = static_cast<std::int64_t>(shape.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * shape[i + 1];
    return st;
}

// Trailing-dimension broadcast of two shapes; throws naming both on mismatch.
inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        const std::int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1)
            throw ShapeError("broadcast mismatch: " + shape_str(a) + " vs " + shape_str(b));
        out[r - 1 - i] = std::max(da, db);
    }
    return out;
}

// Strides of `shape` padded to rank `rank`, zeroed on broadcast dims.
inline Shape broadcast_strides(const Shape& shape, std::size_t rank) {
    Shape st = contiguous_strides(shape);
    Shape out(rank, 0);
    for (std::size_t i = 0; i < shape.size(); ++i) {
        const std::size_t oi = rank - shape.size() + i;
        out[oi] = (shape[i] == 1) ? 0 : st[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grad mode + RNG

namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline std::mt19937_64& global_rng() {
    thread_local std::mt19937_64 rng(0x5eed);
    return rng;
}

inline void seed_all(std::uint64_t seed) { global_rng().seed(seed); }

// ---------------------------------------------------------------------------
// Tensor

class Tensor;

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // allocated on demand, same numel as data
    std::vector<Tensor> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from_raw(std::move(shape), {}, requires_grad, 0.0);
    }
    static Tensor ones(Shape shape, bool requires_grad = false) {
        return from_raw(std::move(shape), {}, requires_grad, 1.0);
    }
    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        return from_raw(std::move(shape), {}, requires_grad, v);
    }
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (numel(shape) != static_cast<std::int64_t>(data.size()))
            throw ShapeError("from_data: shape " + shape_str(shape) + " holds " +
                             std::to_string(numel(shape)) + " values, got " +
                             std::to_string(data.size()));
        Tensor t;
        t.node_ = std::make_shared<TensorNode>();
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        t.node_->requires_grad = requires_grad;
        return t;
    }
    static Tensor scalar(double v, bool requires_grad = false) {
        return from_data({}, {v}, requires_grad);
    }
    static Tensor rand_uniform(Shape shape, double lo, double hi, bool requires_grad = false) {
        std::uniform_real_distribution<double> d(lo, hi);
        std::vector<double> v(static_cast<std::size_t>(numel(shape)));
        for (auto& x : v) x = d(global_rng());
        return from_data(std::move(shape), std::move(v), requires_grad);
    }
    static Tensor randn(Shape shape, double mean, double stddev, bool requires_grad = false) {
        std::normal_distribution<double> d(mean, stddev);
        std::vector<double> v(static_cast<std::size_t>(numel(shape)));
        for (auto& x : v) x = d(global_rng());
        return from_data(std::move(shape), std::move(v), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return check()->shape; }
    std::int64_t dim(std::size_t i) const { return check()->shape.at(i); }
    std::size_t rank() const { return check()->shape.size(); }
    std::int64_t size() const { return check()->size(); }
    std::vector<double>& data() { return check()->data; }
    const std::vector<double>& data() const { return check()->data; }
    std::vector<double>& grad() {
        check()->ensure_grad();
        return node_->grad;
    }
    const std::vector<double>& grad() const {
        check()->ensure_grad();
        return node_->grad;
    }
    bool requires_grad() const { return check()->requires_grad; }
    void set_requires_grad(bool rg) { check()->requires_grad = rg; }
    void zero_grad() {
        check();
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    double item() const {
        if (size() != 1) throw ShapeError("item(): tensor has " + std::to_string(size()) + " values");
        return data()[0];
    }
    double at(std::initializer_list<std::int64_t> idx) const { return data()[flat_index(idx)]; }
    void set_at(std::initializer_list<std::int64_t> idx, double v) { data()[flat_index(idx)] = v; }

    Tensor detach() const {
        Tensor t;
        t.node_ = std::make_shared<TensorNode>();
        t.node_->shape = shape();
        t.node_->data = data();
        t.node_->requires_grad = false;
        return t;
    }

    // Reverse-mode sweep from a scalar output.
    void backward() const {
        if (size() != 1) throw ShapeError("backward() requires a scalar output");
        if (!node_->requires_grad)
            throw ValueError("backward() on a tensor that does not require grad");
        std::vector<TensorNode*> order;
        std::unordered_set<TensorNode*> seen;
        topo(node_.get(), seen, order);
        node_->ensure_grad();
        node_->grad[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            TensorNode* n = *it;
            if (n->backward_fn) n->backward_fn(*n);
        }
    }

    TensorNode* node() const { return node_.get(); }

    // Builds a graph-recording op result. parents/backward are dropped when
    // grad recording is off or no parent participates.
    static Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                          std::function<void(TensorNode&)> backward_fn) {
        bool rg = false;
        if (grad_enabled())
            for (const auto& p : parents)
                if (p.defined() && p.requires_grad()) rg = true;
        Tensor t = from_data(std::move(shape), std::move(data), rg);
        if (rg) {
            t.node_->parents = std::move(parents);
            t.node_->backward_fn = std::move(backward_fn);
        }
        return t;
    }

private:
    std::shared_ptr<TensorNode> node_;

    TensorNode* check() const {
        if (!node_) throw ValueError("operation on an undefined tensor");
        return node_.get();
    }

    std::int64_t flat_index(std::initializer_list<std::int64_t> idx) const {
        const Shape& sh = shape();
        if (idx.size() != sh.size())
            throw ShapeError("index rank " + std::to_string(idx.size()) + " vs tensor rank " +
                             std::to_string(sh.size()));
        Shape st = contiguous_strides(sh);
        std::int64_t off = 0;
        std::size_t k = 0;
        for (auto i : idx) {
            if (i < 0 || i >= sh[k]) throw ShapeError("index out of range");
            off += i * st[k];
            ++k;
        }
        return off;
    }

    static Tensor from_raw(Shape shape, std::vector<double>, bool requires_grad, double fill) {
        std::vector<double> v(static_cast<std::size_t>(numel(shape)), fill);
        return from_data(std::move(shape), std::move(v), requires_grad);
    }

    static void topo(TensorNode* n, std::unordered_set<TensorNode*>& seen,
                     std::vector<TensorNode*>& order) {
        if (seen.count(n)) return;
        seen.insert(n);
        // Iterative DFS; graphs can be thousands of nodes deep (scans, DP).
        struct Frame {
            TensorNode* node;
            std::size_t next = 0;
        };
        std::vector<Frame> stack{{n, 0}};
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < f.node->parents.size()) {
                TensorNode* p = f.node->parents[f.next++].node();
                if (p && !seen.count(p)) {
                    seen.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }
    }
};

// Integer tensor: shapes + int64 payload, no gradient participation.
struct IntTensor {
    Shape shape;
    std::vector<std::int64_t> data;

    IntTensor() = default;
    IntTensor(Shape s, std::vector<std::int64_t> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != static_cast<std::int64_t>(data.size()))
            throw ShapeError("IntTensor: shape/data mismatch");
    }
    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
};

// Boolean mask (1 = keep / true), broadcastable against tensors.
struct BoolMask {
    Shape shape;
    std::vector<std::uint8_t> data;

    BoolMask() = default;
    BoolMask(Shape s, std::vector<std::uint8_t> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != static_cast<std::int64_t>(data.size()))
            throw ShapeError("BoolMask: shape/data mismatch");
    }
};

// ---------------------------------------------------------------------------
// Broadcast iteration helpers

namespace detail {

// Calls f(out_off, a_off, b_off) over every element of out_shape.
template <class F>
inline void for_each_broadcast2(const Shape& out_shape, const Shape& a_stride,
                                const Shape& b_stride, F&& f) {
    const std::size_t r = out_shape.size();
    const std::int64_t total = numel(out_shape);
    if (total == 0) return;
    if (r == 0) {
        f(0, 0, 0);
        return;
    }
    Shape idx(r, 0);
    std::int64_t ao = 0, bo = 0;
    const std::int64_t inner_n = out_shape[r - 1];
    const std::int64_t a_in = a_stride[r - 1], b_in = b_stride[r - 1];
    std::int64_t out_off = 0;
    for (;;) {
        for (std::int64_t i = 0; i < inner_n; ++i)
            f(out_off + i, ao + i * a_in, bo + i * b_in);
        out_off += inner_n;
        // odometer over the outer dims
        std::int64_t d = static_cast<std::int64_t>(r) - 2;
        for (; d >= 0; --d) {
            ++idx[d];
            ao += a_stride[d];
            bo += b_stride[d];
            if (idx[d] < out_shape[d]) break;
            ao -= a_stride[d] * out_shape[d];
            bo -= b_stride[d] * out_shape[d];
            idx[d] = 0;
        }
        if (d < 0) break;
    }
}

// Sum `src` (shape src_shape) into a tensor of shape dst_shape, where
// dst_shape broadcasts to src_shape. Used to push gradients back through
// broadcasting.
inline std::vector<double> reduce_to_shape(const std::vector<double>& src, const Shape& src_shape,
                                           const Shape& dst_shape) {
    std::vector<double> out(static_cast<std::size_t>(numel(dst_shape)), 0.0);
    const Shape dst_stride = broadcast_strides(dst_shape, src_shape.size());
    const Shape one = contiguous_strides(src_shape);
    for_each_broadcast2(src_shape, one, dst_stride,
                        [&](std::int64_t, std::int64_t so, std::int64_t d) { out[d] += src[so]; });
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

namespace detail {

template <class Fwd, class BwdA, class BwdB>
inline Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
    const Shape as = broadcast_strides(a.shape(), out_shape.size());
    const Shape bs = broadcast_strides(b.shape(), out_shape.size());
    std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
    const auto& ad = a.data();
    const auto& bd = b.data();
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i], bd[i]);
    } else {
        for_each_broadcast2(out_shape, as, bs, [&](std::int64_t o, std::int64_t i, std::int64_t j) {
            out[o] = fwd(ad[i], bd[j]);
        });
    }
    Tensor ta = a, tb = b;
    return Tensor::make_op(
        out_shape, std::move(out), {a, b},
        [ta, tb, out_shape, as, bs, bwd_a, bwd_b](TensorNode& self) mutable {
            const auto& g = self.grad;
            const auto& ad2 = ta.data();
            const auto& bd2 = tb.data();
            const bool need_a = ta.requires_grad();
            const bool need_b = tb.requires_grad();
            if (need_a) ta.grad();
            if (need_b) tb.grad();
            auto* ga = need_a ? ta.grad().data() : nullptr;
            auto* gb = need_b ? tb.grad().data() : nullptr;
            for_each_broadcast2(self.shape, as, bs,
                                [&](std::int64_t o, std::int64_t i, std::int64_t j) {
                                    if (ga) ga[i] += bwd_a(ad2[i], bd2[j]) * g[o];
                                    if (gb) gb[j] += bwd_b(ad2[i], bd2[j]) * g[o];
                                });
        });
}

template <class Fwd, class Bwd>
inline Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd_from_xy) {
    std::vector<double> out(a.data().size());
    const auto& ad = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i]);
    Tensor ta = a;
    return Tensor::make_op(a.shape(), std::move(out), {a},
                           [ta, bwd_from_xy](TensorNode& self) mutable {
                               if (!ta.requires_grad()) return;
                               auto& ga = ta.grad();
                               const auto& ad2 = ta.data();
                               for (std::size_t i = 0; i < ga.size(); ++i)
                                   ga[i] += bwd_from_xy(ad2[i], self.data[i]) * self.grad[i];
                           });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}
inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

inline Tensor add_scalar(const Tensor& a, double c) {
    return detail::unary_op(
        a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}
inline Tensor mul_scalar(const Tensor& a, double c) {
    return detail::unary_op(
        a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator/(const Tensor& a, double c) { return mul_scalar(a, 1.0 / c); }

inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

inline Tensor exp(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}
inline Tensor log(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}
inline Tensor sqrt(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}
inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_op(
        a,
        [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}
// softplus(x) = log(1 + e^x), computed stably; derivative is the sigmoid.
// Floored at the smallest positive normal so the result stays strictly
// positive even where exp underflows.
inline Tensor softplus(const Tensor& a) {
    return detail::unary_op(
        a,
        [](double x) {
            if (x > 30.0) return x;
            return std::max(std::log1p(std::exp(x)), std::numeric_limits<double>::min());
        },
        [](double x, double) {
            return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        });
}
inline Tensor relu(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return x > 0 ? x : 0.0; },
        [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    Tensor ta = a;
    return Tensor::make_op({}, {s}, {a}, [ta](TensorNode& self) mutable {
        if (!ta.requires_grad()) return;
        auto& g = ta.grad();
        const double go = self.grad[0];
        for (auto& v : g) v += go;
    });
}

inline Tensor mean(const Tensor& a) { return sum(a) * (1.0 / static_cast<double>(a.size())); }

// Sum over `axis`. With keepdim the axis stays as size 1.
inline Tensor sum_axis(const Tensor& a, std::int64_t axis, bool keepdim = false) {
    const Shape& sh = a.shape();
    if (axis < 0) axis += static_cast<std::int64_t>(sh.size());
    if (axis < 0 || axis >= static_cast<std::int64_t>(sh.size()))
        throw ShapeError("sum_axis: axis out of range for " + shape_str(sh));
    Shape kept = sh;
    kept[axis] = 1;
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= sh[i];
    for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
    const std::int64_t n = sh[axis];
    std::vector<double> out(static_cast<std::size_t>(outer * inner), 0.0);
    const auto& ad = a.data();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t k = 0; k < n; ++k) {
            const double* src = ad.data() + (o * n + k) * inner;
            double* dst = out.data() + o * inner;
            for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    Shape out_shape = kept;
    if (!keepdim) out_shape.erase(out_shape.begin() + axis);
    Tensor ta = a;
    return Tensor::make_op(out_shape, std::move(out), {a},
                           [ta, outer, inner, n](TensorNode& self) mutable {
                               if (!ta.requires_grad()) return;
                               auto& g = ta.grad();
                               const auto& go = self.grad;
                               for (std::int64_t o = 0; o < outer; ++o)
                                   for (std::int64_t k = 0; k < n; ++k) {
                                       double* dst = g.data() + (o * n + k) * inner;
                                       const double* src = go.data() + o * inner;
                                       for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
                                   }
                           });
}

inline Tensor mean_axis(const Tensor& a, std::int64_t axis, bool keepdim = false) {
    const std::int64_t ax = axis < 0 ? axis + static_cast<std::int64_t>(a.rank()) : axis;
    return sum_axis(a, axis, keepdim) * (1.0 / static_cast<double>(a.shape()[ax]));
}

// Max values along the last axis, detached (no gradient path). Used for
// numerically stable softmax; shift invariance keeps gradients exact.
inline Tensor max_lastdim_detached(const Tensor& a) {
    const Shape& sh = a.shape();
    if (sh.empty()) throw ShapeError("max_lastdim: scalar input");
    const std::int64_t n = sh.back();
    const std::int64_t rows = a.size() / n;
    Shape out_shape(sh.begin(), sh.end() - 1);
    out_shape.push_back(1);
    std::vector<double> out(static_cast<std::size_t>(rows));
    const auto& ad = a.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        double m = ad[r * n];
        for (std::int64_t i = 1; i < n; ++i) m = std::max(m, ad[r * n + i]);
        out[r] = m;
    }
    return Tensor::from_data(std::move(out_shape), std::move(out), false);
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& a, Shape new_shape) {
    // one -1 dimension is inferred
    std::int64_t known = 1, infer = -1;
    for (std::size_t i = 0; i < new_shape.size(); ++i) {
        if (new_shape[i] == -1) {
            if (infer >= 0) throw ShapeError("reshape: more than one -1");
            infer = static_cast<std::int64_t>(i);
        } else {
            known *= new_shape[i];
        }
    }
    if (infer >= 0) new_shape[infer] = a.size() / known;
    if (numel(new_shape) != a.size())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(new_shape));
    Tensor ta = a;
    return Tensor::make_op(new_shape, a.data(), {a}, [ta](TensorNode& self) mutable {
        if (!ta.requires_grad()) return;
        auto& g = ta.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

inline Tensor transpose(const Tensor& a, std::vector<std::int64_t> perm) {
    const Shape& sh = a.shape();
    if (perm.size() != sh.size()) throw ShapeError("transpose: perm rank mismatch");
    Shape out_shape(sh.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = sh[perm[i]];
    const Shape in_stride = contiguous_strides(sh);
    Shape perm_stride(sh.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm_stride[i] = in_stride[perm[i]];
    std::vector<double> out(static_cast<std::size_t>(a.size()));
    const auto& ad = a.data();
    const Shape one = contiguous_strides(out_shape);
    detail::for_each_broadcast2(out_shape, one, perm_stride,
                                [&](std::int64_t, std::int64_t o, std::int64_t i) { out[o] = ad[i]; });
    Tensor ta = a;
    return Tensor::make_op(out_shape, std::move(out), {a},
                           [ta, out_shape, perm_stride](TensorNode& self) mutable {
                               if (!ta.requires_grad()) return;
                               auto& g = ta.grad();
                               const Shape one2 = contiguous_strides(out_shape);
                               detail::for_each_broadcast2(
                                   out_shape, one2, perm_stride,
                                   [&](std::int64_t, std::int64_t o, std::int64_t i) {
                                       g[i] += self.grad[o];
                                   });
                           });
}

// Swap the last two axes (batched matrix transpose).
inline Tensor transpose_last2(const Tensor& a) {
    std::vector<std::int64_t> perm(a.rank());
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[a.rank() - 1], perm[a.rank() - 2]);
    return transpose(a, std::move(perm));
}

inline Tensor slice(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t len) {
    const Shape& sh = a.shape();
    if (axis < 0) axis += static_cast<std::int64_t>(sh.size());
    if (axis < 0 || axis >= static_cast<std::int64_t>(sh.size()))
        throw ShapeError("slice: axis out of range");
    if (start < 0 || len < 0 || start + len > sh[axis])
        throw ShapeError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") exceeds dim " + std::to_string(sh[axis]));
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= sh[i];
    for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
    const std::int64_t n = sh[axis];
    Shape out_shape = sh;
    out_shape[axis] = len;
    std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
    const auto& ad = a.data();
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy(ad.begin() + (o * n + start) * inner, ad.begin() + (o * n + start + len) * inner,
                  out.begin() + o * len * inner);
    Tensor ta = a;
    return Tensor::make_op(out_shape, std::move(out), {a},
                           [ta, outer, inner, n, start, len](TensorNode& self) mutable {
                               if (!ta.requires_grad()) return;
                               auto& g = ta.grad();
                               const auto& go = self.grad;
                               for (std::int64_t o = 0; o < outer; ++o) {
                                   double* dst = g.data() + (o * n + start) * inner;
                                   const double* src = go.data() + o * len * inner;
                                   for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                               }
                           });
}

inline Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis) {
    if (parts.empty()) throw ValueError("concat: no tensors");
    const Shape& sh0 = parts[0].shape();
    std::int64_t ax = axis < 0 ? axis + static_cast<std::int64_t>(sh0.size()) : axis;
    std::int64_t total = 0;
    for (const auto& p : parts) {
        const Shape& sh = p.shape();
        if (sh.size() != sh0.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t i = 0; i < sh.size(); ++i)
            if (static_cast<std::int64_t>(i) != ax && sh[i] != sh0[i])
                throw ShapeError("concat: shape mismatch " + shape_str(sh0) + " vs " + shape_str(sh));
        total += sh[ax];
    }
    Shape out_shape = sh0;
    out_shape[ax] = total;
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t i = 0; i < ax; ++i) outer *= sh0[i];
    for (std::size_t i = ax + 1; i < sh0.size(); ++i) inner *= sh0[i];
    std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
    std::int64_t off = 0;
    for (const auto& p : parts) {
        const std::int64_t n = p.shape()[ax];
        const auto& pd = p.data();
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy(pd.begin() + o * n * inner, pd.begin() + (o + 1) * n * inner,
                      out.begin() + (o * total + off) * inner);
        off += n;
    }
    std::vector<Tensor> parents = parts;
    return Tensor::make_op(
        out_shape, std::move(out), parents,
        [parents, outer, inner, total, ax](TensorNode& self) mutable {
            std::int64_t off2 = 0;
            for (auto& p : parents) {
                const std::int64_t n = p.shape()[ax];
                if (p.requires_grad()) {
                    auto& g = p.grad();
                    for (std::int64_t o = 0; o < outer; ++o) {
                        const double* src = self.grad.data() + (o * total + off2) * inner;
                        double* dst = g.data() + o * n * inner;
                        for (std::int64_t i = 0; i < n * inner; ++i) dst[i] += src[i];
                    }
                }
                off2 += n;
            }
        });
}

// ---------------------------------------------------------------------------
// Matrix multiplication (batched, broadcasting batch dims)

namespace detail {

inline void gemm_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                     std::int64_t n) {
    // c[m,n] += a[m,k] * b[k,n], ikj order for locality
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m,n] += a[m,k] * b[n,k]^T
inline void gemm_nt_acc(const double* a, const double* b, double* c, std::int64_t m,
                        std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

// c[k,n] += a[m,k]^T * b[m,n]
inline void gemm_tn_acc(const double* a, const double* b, double* c, std::int64_t m,
                        std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& ash = a.shape();
    const Shape& bsh = b.shape();
    if (ash.size() < 2 || bsh.size() < 2)
        throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(ash) + " and " +
                         shape_str(bsh));
    const std::int64_t m = ash[ash.size() - 2], k = ash[ash.size() - 1];
    const std::int64_t k2 = bsh[bsh.size() - 2], n = bsh[bsh.size() - 1];
    if (k != k2)
        throw ShapeError("matmul: inner dimensions differ: " + shape_str(ash) + " vs " +
                         shape_str(bsh));
    const Shape abatch(ash.begin(), ash.end() - 2);
    const Shape bbatch(bsh.begin(), bsh.end() - 2);
    const Shape batch = broadcast_shapes(abatch, bbatch);
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);

    const std::int64_t nbatch = numel(batch);
    // per-batch strides (0 where broadcast)
    Shape as_b = broadcast_strides(abatch, batch.size());
    Shape bs_b = broadcast_strides(bbatch, batch.size());
    for (auto& v : as_b) v *= m * k;
    for (auto& v : bs_b) v *= k * n;
    // flatten batch odometer into explicit offset lists
    std::vector<std::int64_t> a_off(static_cast<std::size_t>(nbatch)),
        b_off(static_cast<std::size_t>(nbatch));
    {
        Shape ones = contiguous_strides(batch);
        std::int64_t cnt = 0;
        if (batch.empty()) {
            a_off[0] = 0;
            b_off[0] = 0;
        } else {
            detail::for_each_broadcast2(batch, as_b, bs_b,
                                        [&](std::int64_t, std::int64_t i, std::int64_t j) {
                                            a_off[cnt] = i;
                                            b_off[cnt] = j;
                                            ++cnt;
                                        });
        }
    }

    std::vector<double> out(static_cast<std::size_t>(nbatch * m * n), 0.0);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (std::int64_t bi = 0; bi < nbatch; ++bi)
        detail::gemm_acc(ad.data() + a_off[bi], bd.data() + b_off[bi], out.data() + bi * m * n, m,
                         k, n);

    Tensor ta = a, tb = b;
    return Tensor::make_op(
        out_shape, std::move(out), {a, b},
        [ta, tb, a_off, b_off, m, k, n, nbatch](TensorNode& self) mutable {
            const auto& g = self.grad;
            if (ta.requires_grad()) {
                auto& ga = ta.grad();
                const auto& bd2 = tb.data();
                for (std::int64_t bi = 0; bi < nbatch; ++bi)
                    detail::gemm_nt_acc(g.data() + bi * m * n, bd2.data() + b_off[bi],
                                        ga.data() + a_off[bi], m, n, k);
            }
            if (tb.requires_grad()) {
                auto& gb = tb.grad();
                const auto& ad2 = ta.data();
                for (std::int64_t bi = 0; bi < nbatch; ++bi)
                    detail::gemm_tn_acc(ad2.data() + a_off[bi], g.data() + bi * m * n,
                                        gb.data() + b_off[bi], m, k, n);
            }
        });
}

// ---------------------------------------------------------------------------
// Masking and gathering

// Fill positions where mask == 0 with `value`; mask broadcasts over x.
inline Tensor masked_fill(const Tensor& x, const BoolMask& mask, double value) {
    const Shape out_shape = broadcast_shapes(x.shape(), mask.shape);
    if (out_shape != x.shape())
        throw ShapeError("masked_fill: mask " + shape_str(mask.shape) + " must broadcast into " +
                         shape_str(x.shape()));
    const Shape ms = broadcast_strides(mask.shape, out_shape.size());
    const Shape one = contiguous_strides(out_shape);
    std::vector<double> out(x.data().size());
    const auto& xd = x.data();
    std::vector<std::uint8_t> keep(out.size());
    detail::for_each_broadcast2(out_shape, one, ms,
                                [&](std::int64_t, std::int64_t o, std::int64_t mi) {
                                    keep[o] = mask.data[mi];
                                    out[o] = mask.data[mi] ? xd[o] : value;
                                });
    Tensor tx = x;
    return Tensor::make_op(out_shape, std::move(out), {x},
                           [tx, keep](TensorNode& self) mutable {
                               if (!tx.requires_grad()) return;
                               auto& g = tx.grad();
                               for (std::size_t i = 0; i < g.size(); ++i)
                                   if (keep[i]) g[i] += self.grad[i];
                           });
}

// Row gather: table[V,d], ids -> [ids.shape..., d]. Backward scatter-adds.
inline Tensor embedding_rows(const Tensor& table, const IntTensor& ids) {
    const Shape& tsh = table.shape();
    if (tsh.size() != 2) throw ShapeError("embedding: table must be [V,d]");
    const std::int64_t V = tsh[0], d = tsh[1];
    for (auto id : ids.data)
        if (id < 0 || id >= V)
            throw ValueError("embedding: id " + std::to_string(id) + " out of range [0," +
                             std::to_string(V) + ")");
    Shape out_shape = ids.shape;
    out_shape.push_back(d);
    std::vector<double> out(static_cast<std::size_t>(ids.size() * d));
    const auto& td = table.data();
    for (std::int64_t i = 0; i < ids.size(); ++i)
        std::copy(td.begin() + ids.data[i] * d, td.begin() + (ids.data[i] + 1) * d,
                  out.begin() + i * d);
    Tensor tt = table;
    const std::vector<std::int64_t> idv = ids.data;
    return Tensor::make_op(out_shape, std::move(out), {table},
                           [tt, idv, d](TensorNode& self) mutable {
                               if (!tt.requires_grad()) return;
                               auto& g = tt.grad();
                               for (std::size_t i = 0; i < idv.size(); ++i) {
                                   const double* src = self.grad.data() + i * d;
                                   double* dst = g.data() + idv[i] * d;
                                   for (std::int64_t j = 0; j < d; ++j) dst[j] += src[j];
                               }
                           });
}

}  // namespace sm

#endif  // SPEECHMAMBA_TENSOR_HPP
