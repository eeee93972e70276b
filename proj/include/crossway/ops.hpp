#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crossway/autodiff.hpp"
#include "crossway/gemm.hpp"

// Autograd op library. Each op computes its value eagerly and registers a
// backward closure that accumulates into parent grads (pre-zeroed on first
// touch). Convolutions recompute im2col buffers in backward instead of
// storing them; activations store what their derivative needs.
namespace crossway::ag {

using crossway::Tensor;
using crossway::Var;

template <class S>
inline void check(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// exp/sigmoid in the scalar's own precision: the float path stays cheap in
// training, the double path keeps full accuracy for the 64-bit test suites.
inline float exp_s(float x) { return ::expf(x); }
inline double exp_s(double x) { return std::exp(x); }

template <class S>
inline S sigmoid_s(S x) {
    return S(1) / (S(1) + exp_s(-x));
}

// Vectorized views for bulk pointwise math (Eigen's SIMD exp).
template <class S>
using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
template <class S>
using CArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

template <class S>
inline void silu_bulk(const S* x, S* y, int64_t n) {
    CArrMap<S> xv(x, n);
    ArrMap<S> yv(y, n);
    yv = xv / (S(1) + (-xv).exp());
}

// g += go * d silu(x)/dx
template <class S>
inline void silu_grad_bulk(const S* x, const S* go, S* g, int64_t n) {
    CArrMap<S> xv(x, n), gov(go, n);
    ArrMap<S> gv(g, n);
    auto sg = (S(1) + (-xv).exp()).inverse();
    gv += gov * (sg * (S(1) + xv * (S(1) - sg)));
}

template <class S>
inline void sigmoid_bulk(const S* x, S* y, int64_t n) {
    CArrMap<S> xv(x, n);
    ArrMap<S> yv(y, n);
    yv = (S(1) + (-xv).exp()).inverse();
}

// ---------------------------------------------------------------- pointwise

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
    check<S>(a.val().same_shape(b.val()), "add: shape mismatch");
    Tensor<S> out = a.val();
    const S* pb = b.val().ptr();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += pb[i];
    auto an = a.n, bn = b.n;
    auto node = make_op_node<S>(std::move(out), {a, b}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [an, bn, on] {
            if (an->needs_grad) accumulate(an->ensure_grad(), on->grad);
            if (bn->needs_grad) accumulate(bn->ensure_grad(), on->grad);
        };
    }
    return node;
}

template <class S>
Var<S> scale(const Var<S>& a, double c) {
    Tensor<S> out = a.val();
    for (auto& v : out.data) v = static_cast<S>(v * c);
    auto an = a.n;
    auto node = make_op_node<S>(std::move(out), {a}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [an, on, c] {
            auto& g = an->ensure_grad();
            const S* go = on->grad.ptr();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += static_cast<S>(go[i] * c);
        };
    }
    return node;
}

template <class S>
Var<S> silu(const Var<S>& x) {
    Tensor<S> out(x.val().shape, typename Tensor<S>::Uninit{});
    silu_bulk(x.val().ptr(), out.ptr(), out.numel());
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on] {
            auto& g = xn->ensure_grad();
            silu_grad_bulk(xn->val.ptr(), on->grad.ptr(), g.ptr(), g.numel());
        };
    }
    return node;
}

template <class S>
Var<S> sigmoid(const Var<S>& x) {
    Tensor<S> out(x.val().shape, typename Tensor<S>::Uninit{});
    sigmoid_bulk(x.val().ptr(), out.ptr(), out.numel());
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on] {
            auto& g = xn->ensure_grad();
            const S* go = on->grad.ptr();
            const S* y = on->val.ptr();
            for (int64_t i = 0; i < g.numel(); ++i)
                g[i] += static_cast<S>(go[i] * y[i] * (S(1) - y[i]));
        };
    }
    return node;
}

// -------------------------------------------------------------------- shape

template <class S>
Var<S> reshape(const Var<S>& x, std::vector<int64_t> shape) {
    Tensor<S> out = x.val().reshaped(std::move(shape));
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on] {
            auto& g = xn->ensure_grad();
            const S* go = on->grad.ptr();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += go[i];
        };
    }
    return node;
}

// Concatenation along dim 1 for tensors shaped [B, C_i, rest...].
template <class S>
Var<S> concat_dim1(const std::vector<Var<S>>& xs) {
    check<S>(!xs.empty(), "concat: empty input list");
    const auto& s0 = xs[0].shape();
    int64_t batch = s0[0];
    int64_t inner = 1;
    for (size_t d = 2; d < s0.size(); ++d) inner *= s0[d];
    int64_t total_c = 0;
    for (const auto& x : xs) {
        const auto& sh = x.shape();
        check<S>(sh.size() == s0.size() && sh[0] == batch, "concat: rank/batch mismatch");
        int64_t in = 1;
        for (size_t d = 2; d < sh.size(); ++d) {
            check<S>(sh[d] == s0[d], "concat: trailing dim mismatch");
            in *= sh[d];
        }
        (void)in;
        total_c += sh[1];
    }
    std::vector<int64_t> oshape = s0;
    oshape[1] = total_c;
    Tensor<S> out(oshape, typename Tensor<S>::Uninit{});
    int64_t off = 0;
    for (const auto& x : xs) {
        int64_t c = x.shape()[1];
        const S* src = x.val().ptr();
        for (int64_t b = 0; b < batch; ++b)
            std::copy(src + b * c * inner, src + (b + 1) * c * inner,
                      out.ptr() + (b * total_c + off) * inner);
        off += c;
    }
    std::vector<std::shared_ptr<Node<S>>> parents;
    for (const auto& x : xs) parents.push_back(x.n);
    auto node = make_op_node<S>(std::move(out), xs, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [parents, on, batch, inner, total_c] {
            int64_t off2 = 0;
            for (const auto& p : parents) {
                int64_t c = p->val.shape[1];
                if (p->needs_grad) {
                    auto& g = p->ensure_grad();
                    const S* go = on->grad.ptr();
                    for (int64_t b = 0; b < batch; ++b) {
                        const S* src = go + (b * total_c + off2) * inner;
                        S* dst = g.ptr() + b * c * inner;
                        for (int64_t i = 0; i < c * inner; ++i) dst[i] += src[i];
                    }
                }
                off2 += c;
            }
        };
    }
    return node;
}

// x[:, c0:c1] for [B, C, rest...].
template <class S>
Var<S> slice_dim1(const Var<S>& x, int64_t c0, int64_t c1) {
    const auto& sh = x.shape();
    check<S>(sh.size() >= 2 && c0 >= 0 && c1 <= sh[1] && c0 < c1, "slice_dim1: bad range");
    int64_t batch = sh[0], C = sh[1];
    int64_t inner = 1;
    for (size_t d = 2; d < sh.size(); ++d) inner *= sh[d];
    std::vector<int64_t> oshape = sh;
    oshape[1] = c1 - c0;
    Tensor<S> out(oshape, typename Tensor<S>::Uninit{});
    for (int64_t b = 0; b < batch; ++b)
        std::copy(x.val().ptr() + (b * C + c0) * inner, x.val().ptr() + (b * C + c1) * inner,
                  out.ptr() + b * (c1 - c0) * inner);
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on, batch, C, inner, c0, c1] {
            auto& g = xn->ensure_grad();
            const S* go = on->grad.ptr();
            for (int64_t b = 0; b < batch; ++b) {
                S* dst = g.ptr() + (b * C + c0) * inner;
                const S* src = go + b * (c1 - c0) * inner;
                for (int64_t i = 0; i < (c1 - c0) * inner; ++i) dst[i] += src[i];
            }
        };
    }
    return node;
}

// x[:, :, t] for [B, C, T] -> [B, C].
template <class S>
Var<S> slice_time(const Var<S>& x, int64_t t) {
    const auto& sh = x.shape();
    check<S>(sh.size() == 3 && t >= 0 && t < sh[2], "slice_time: bad index");
    int64_t B = sh[0], C = sh[1], T = sh[2];
    Tensor<S> out({B, C});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) out[b * C + c] = x.val()[(b * C + c) * T + t];
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on, B, C, T, t] {
            auto& g = xn->ensure_grad();
            const S* go = on->grad.ptr();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) g[(b * C + c) * T + t] += go[b * C + c];
        };
    }
    return node;
}

// Mean over the time axis of [B, C, T] -> [B, C].
template <class S>
Var<S> mean_time(const Var<S>& x) {
    const auto& sh = x.shape();
    check<S>(sh.size() == 3, "mean_time: expects [B,C,T]");
    int64_t B = sh[0], C = sh[1], T = sh[2];
    Tensor<S> out({B, C});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            double acc = 0;
            for (int64_t t = 0; t < T; ++t) acc += x.val()[(b * C + c) * T + t];
            out[b * C + c] = static_cast<S>(acc / T);
        }
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on, B, C, T] {
            auto& g = xn->ensure_grad();
            const S* go = on->grad.ptr();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    S gv = static_cast<S>(go[b * C + c] / T);
                    for (int64_t t = 0; t < T; ++t) g[(b * C + c) * T + t] += gv;
                }
        };
    }
    return node;
}

// Swap the last two axes of a rank-3 tensor: [B, X, Y] -> [B, Y, X].
template <class S>
Var<S> transpose_12(const Var<S>& x) {
    const auto& sh = x.shape();
    check<S>(sh.size() == 3, "transpose_12: expects rank 3");
    int64_t B = sh[0], X = sh[1], Y = sh[2];
    Tensor<S> out({B, Y, X}, typename Tensor<S>::Uninit{});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < X; ++i)
            for (int64_t j = 0; j < Y; ++j)
                out[(b * Y + j) * X + i] = x.val()[(b * X + i) * Y + j];
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on, B, X, Y] {
            auto& g = xn->ensure_grad();
            const S* go = on->grad.ptr();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < X; ++i)
                    for (int64_t j = 0; j < Y; ++j)
                        g[(b * X + i) * Y + j] += go[(b * Y + j) * X + i];
        };
    }
    return node;
}

// Splits a [B, C] vector into 4 contiguous folds of C/4 and lays them out on
// a 2x2 spatial block: out[b, c, u, v] = x[b, (u*2+v)*C/4 + c].
template <class S>
Var<S> fold_to_block(const Var<S>& x) {
    const auto& sh = x.shape();
    check<S>(sh.size() == 2 && sh[1] % 4 == 0, "fold_to_block: C must be divisible by 4");
    int64_t B = sh[0], C = sh[1], Q = C / 4;
    Tensor<S> out({B, Q, 2, 2}, typename Tensor<S>::Uninit{});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < Q; ++c)
            for (int64_t u = 0; u < 2; ++u)
                for (int64_t v = 0; v < 2; ++v)
                    out[((b * Q + c) * 2 + u) * 2 + v] = x.val()[b * C + (u * 2 + v) * Q + c];
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on, B, C, Q] {
            auto& g = xn->ensure_grad();
            const S* go = on->grad.ptr();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < Q; ++c)
                    for (int64_t u = 0; u < 2; ++u)
                        for (int64_t v = 0; v < 2; ++v)
                            g[b * C + (u * 2 + v) * Q + c] += go[((b * Q + c) * 2 + u) * 2 + v];
        };
    }
    return node;
}

// Tiles a [B, C, sh, sw] pattern over an H x W grid: out[..., y, x] = in[..., y % sh, x % sw].
template <class S>
Var<S> tile_pattern(const Var<S>& x, int64_t H, int64_t W) {
    const auto& sh = x.shape();
    check<S>(sh.size() == 4, "tile_pattern: expects [B,C,h,w]");
    int64_t B = sh[0], C = sh[1], th = sh[2], tw = sh[3];
    check<S>(H % th == 0 && W % tw == 0, "tile_pattern: target not a multiple of the pattern");
    Tensor<S> out({B, C, H, W}, typename Tensor<S>::Uninit{});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const S* src = x.val().ptr() + bc * th * tw;
        S* dst = out.ptr() + bc * H * W;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t xx = 0; xx < W; ++xx) dst[y * W + xx] = src[(y % th) * tw + (xx % tw)];
    }
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on, B, C, th, tw, H, W] {
            auto& g = xn->ensure_grad();
            const S* go = on->grad.ptr();
            for (int64_t bc = 0; bc < B * C; ++bc) {
                S* dst = g.ptr() + bc * th * tw;
                const S* src = go + bc * H * W;
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t xx = 0; xx < W; ++xx) dst[(y % th) * tw + (xx % tw)] += src[y * W + xx];
            }
        };
    }
    return node;
}

// Broadcasts a [B, C] vector over an H x W grid.
template <class S>
Var<S> broadcast_spatial(const Var<S>& x, int64_t H, int64_t W) {
    const auto& sh = x.shape();
    check<S>(sh.size() == 2, "broadcast_spatial: expects [B,C]");
    int64_t B = sh[0], C = sh[1];
    Tensor<S> out({B, C, H, W}, typename Tensor<S>::Uninit{});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        S v = x.val()[bc];
        S* dst = out.ptr() + bc * H * W;
        std::fill(dst, dst + H * W, v);
    }
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on, B, C, H, W] {
            auto& g = xn->ensure_grad();
            const S* go = on->grad.ptr();
            for (int64_t bc = 0; bc < B * C; ++bc) {
                double acc = 0;
                const S* src = go + bc * H * W;
                for (int64_t i = 0; i < H * W; ++i) acc += src[i];
                g[bc] += static_cast<S>(acc);
            }
        };
    }
    return node;
}

// Appends a fixed positional-embedding grid [P, H, W] to every sample of
// x [B, C, H, W] along the channel axis. The grid takes no gradient.
template <class S>
Var<S> concat_pe(const Var<S>& x, const Tensor<S>& pe) {
    const auto& sh = x.shape();
    check<S>(sh.size() == 4 && pe.ndim() == 3, "concat_pe: rank mismatch");
    check<S>(pe.shape[1] == sh[2] && pe.shape[2] == sh[3], "concat_pe: spatial mismatch");
    int64_t B = sh[0], C = sh[1], H = sh[2], W = sh[3], P = pe.shape[0];
    Tensor<S> out({B, C + P, H, W}, typename Tensor<S>::Uninit{});
    const int64_t hw = H * W;
    for (int64_t b = 0; b < B; ++b) {
        std::copy(x.val().ptr() + b * C * hw, x.val().ptr() + (b + 1) * C * hw,
                  out.ptr() + b * (C + P) * hw);
        std::copy(pe.ptr(), pe.ptr() + P * hw, out.ptr() + (b * (C + P) + C) * hw);
    }
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on, B, C, P, hw] {
            auto& g = xn->ensure_grad();
            const S* go = on->grad.ptr();
            for (int64_t b = 0; b < B; ++b) {
                const S* src = go + b * (C + P) * hw;
                S* dst = g.ptr() + b * C * hw;
                for (int64_t i = 0; i < C * hw; ++i) dst[i] += src[i];
            }
        };
    }
    return node;
}

// ------------------------------------------------------------------- linear

template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    check<S>(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[1], "linear: shape mismatch");
    int64_t B = xs[0], In = xs[1], Out = ws[0];
    check<S>(b.numel() == Out, "linear: bias size mismatch");
    Tensor<S> out({B, Out}, typename Tensor<S>::Uninit{});
    gemm_nt<S>(x.val().ptr(), w.val().ptr(), out.ptr(), B, In, Out, false);
    for (int64_t i = 0; i < B; ++i)
        for (int64_t o = 0; o < Out; ++o) out[i * Out + o] += b.val()[o];
    auto xn = x.n, wn = w.n, bn = b.n;
    auto node = make_op_node<S>(std::move(out), {x, w, b}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, wn, bn, on, B, In, Out] {
            const S* go = on->grad.ptr();
            if (xn->needs_grad)
                gemm_nn<S>(go, wn->val.ptr(), xn->ensure_grad().ptr(), B, Out, In, true);
            if (wn->needs_grad)
                gemm_tn<S>(go, xn->val.ptr(), wn->ensure_grad().ptr(), Out, B, In, true);
            if (bn->needs_grad) {
                auto& gb = bn->ensure_grad();
                for (int64_t i = 0; i < B; ++i)
                    for (int64_t o = 0; o < Out; ++o) gb[o] += go[i * Out + o];
            }
        };
    }
    return node;
}

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    check<S>(as.size() == 2 && bs.size() == 2 && as[1] == bs[0], "matmul: shape mismatch");
    int64_t m = as[0], k = as[1], n = bs[1];
    Tensor<S> out({m, n}, typename Tensor<S>::Uninit{});
    gemm_nn<S>(a.val().ptr(), b.val().ptr(), out.ptr(), m, k, n, false);
    auto an = a.n, bn = b.n;
    auto node = make_op_node<S>(std::move(out), {a, b}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [an, bn, on, m, k, n] {
            const S* go = on->grad.ptr();
            if (an->needs_grad) gemm_nt<S>(go, bn->val.ptr(), an->ensure_grad().ptr(), m, n, k, true);
            if (bn->needs_grad) gemm_tn<S>(an->val.ptr(), go, bn->ensure_grad().ptr(), k, m, n, true);
        };
    }
    return node;
}

// a [m,k] x b^T where b is [n,k].
template <class S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    check<S>(as.size() == 2 && bs.size() == 2 && as[1] == bs[1], "matmul_nt: shape mismatch");
    int64_t m = as[0], k = as[1], n = bs[0];
    Tensor<S> out({m, n}, typename Tensor<S>::Uninit{});
    gemm_nt<S>(a.val().ptr(), b.val().ptr(), out.ptr(), m, k, n, false);
    auto an = a.n, bn = b.n;
    auto node = make_op_node<S>(std::move(out), {a, b}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [an, bn, on, m, k, n] {
            const S* go = on->grad.ptr();
            if (an->needs_grad) gemm_nn<S>(go, bn->val.ptr(), an->ensure_grad().ptr(), m, n, k, true);
            if (bn->needs_grad) gemm_tn<S>(go, an->val.ptr(), bn->ensure_grad().ptr(), n, m, k, true);
        };
    }
    return node;
}

// ------------------------------------------------------------- convolutions

namespace convdet {

// Valid destination-index range [lo, hi) for src index ow*sw - pw + v in [0, Ws).
inline void valid_range(int64_t Ws, int64_t Wd, int64_t sw, int64_t pw, int64_t v, int64_t& lo,
                        int64_t& hi) {
    lo = pw > v ? (pw - v + sw - 1) / sw : 0;
    hi = std::min<int64_t>(Wd, (Ws - 1 + pw - v) / sw + 1);
    if (hi < lo) hi = lo;
}

// Gather patches: col[(c,u,v), (oh,ow)] = src[c, oh*s - p + u, ow*s - p + v].
// Interior runs are contiguous copies; the padded borders are zero-filled.
template <class S>
void im2col(const S* src, int64_t C, int64_t Hs, int64_t Ws, int64_t Hd, int64_t Wd, int64_t kh,
            int64_t kw, int64_t sh, int64_t sw, int64_t ph, int64_t pw, S* col) {
    for (int64_t c = 0; c < C; ++c)
        for (int64_t u = 0; u < kh; ++u) {
            int64_t oh_lo, oh_hi;
            valid_range(Hs, Hd, sh, ph, u, oh_lo, oh_hi);
            for (int64_t v = 0; v < kw; ++v) {
                S* row = col + ((c * kh + u) * kw + v) * (Hd * Wd);
                int64_t lo, hi;
                valid_range(Ws, Wd, sw, pw, v, lo, hi);
                std::fill(row, row + oh_lo * Wd, S(0));
                std::fill(row + oh_hi * Wd, row + Hd * Wd, S(0));
                for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                    int64_t ih = oh * sh - ph + u;
                    const S* srow = src + (c * Hs + ih) * Ws;
                    S* dst = row + oh * Wd;
                    std::fill(dst, dst + lo, S(0));
                    std::fill(dst + hi, dst + Wd, S(0));
                    if (sw == 1) {
                        std::copy(srow + lo - pw + v, srow + hi - pw + v, dst + lo);
                    } else {
                        for (int64_t ow = lo; ow < hi; ++ow) dst[ow] = srow[ow * sw - pw + v];
                    }
                }
            }
        }
}

// Scatter-add: src[c, oh*s - p + u, ow*s - p + v] += col[(c,u,v), (oh,ow)].
template <class S>
void col2im(const S* col, int64_t C, int64_t Hs, int64_t Ws, int64_t Hd, int64_t Wd, int64_t kh,
            int64_t kw, int64_t sh, int64_t sw, int64_t ph, int64_t pw, S* src) {
    for (int64_t c = 0; c < C; ++c)
        for (int64_t u = 0; u < kh; ++u) {
            int64_t oh_lo, oh_hi;
            valid_range(Hs, Hd, sh, ph, u, oh_lo, oh_hi);
            for (int64_t v = 0; v < kw; ++v) {
                const S* row = col + ((c * kh + u) * kw + v) * (Hd * Wd);
                int64_t lo, hi;
                valid_range(Ws, Wd, sw, pw, v, lo, hi);
                for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                    int64_t ih = oh * sh - ph + u;
                    S* srow = src + (c * Hs + ih) * Ws;
                    const S* r = row + oh * Wd;
                    if (sw == 1) {
                        S* d = srow + lo - pw + v;
                        for (int64_t ow = lo; ow < hi; ++ow) d[ow - lo] += r[ow];
                    } else {
                        for (int64_t ow = lo; ow < hi; ++ow) srow[ow * sw - pw + v] += r[ow];
                    }
                }
            }
        }
}

template <class S>
std::vector<S>& scratch() {
    thread_local std::vector<S> buf;
    return buf;
}

}  // namespace convdet

struct Conv2dSpec {
    int64_t kh = 3, kw = 3, sh = 1, sw = 1, ph = 1, pw = 1;
};

// x [B, Ci, H, W], w [Co, Ci, kh, kw], b [Co] -> [B, Co, Ho, Wo].
template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, Conv2dSpec sp) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    check<S>(xs.size() == 4 && ws.size() == 4, "conv2d: rank mismatch");
    check<S>(xs[1] == ws[1], "conv2d: channel mismatch");
    check<S>(ws[2] == sp.kh && ws[3] == sp.kw, "conv2d: kernel mismatch");
    int64_t B = xs[0], Ci = xs[1], H = xs[2], W = xs[3], Co = ws[0];
    int64_t Ho = (H + 2 * sp.ph - sp.kh) / sp.sh + 1;
    int64_t Wo = (W + 2 * sp.pw - sp.kw) / sp.sw + 1;
    check<S>(Ho >= 1 && Wo >= 1, "conv2d: kernel larger than padded input");
    check<S>(b.numel() == Co, "conv2d: bias size mismatch");
    const int64_t CK = Ci * sp.kh * sp.kw, HWo = Ho * Wo;

    Tensor<S> out({B, Co, Ho, Wo}, typename Tensor<S>::Uninit{});
    auto& col = convdet::scratch<S>();
    col.resize(static_cast<size_t>(CK * HWo));
    for (int64_t bi = 0; bi < B; ++bi) {
        convdet::im2col(x.val().ptr() + bi * Ci * H * W, Ci, H, W, Ho, Wo, sp.kh, sp.kw, sp.sh,
                        sp.sw, sp.ph, sp.pw, col.data());
        S* y = out.ptr() + bi * Co * HWo;
        gemm_nn<S>(w.val().ptr(), col.data(), y, Co, CK, HWo, false);
        for (int64_t co = 0; co < Co; ++co) {
            S bias = b.val()[co];
            for (int64_t i = 0; i < HWo; ++i) y[co * HWo + i] += bias;
        }
    }
    auto xn = x.n, wn = w.n, bn = b.n;
    auto node = make_op_node<S>(std::move(out), {x, w, b}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, wn, bn, on, B, Ci, H, W, Co, Ho, Wo, CK, HWo, sp] {
            auto& col2 = convdet::scratch<S>();
            col2.resize(static_cast<size_t>(CK * HWo));
            std::vector<S> dcol(static_cast<size_t>(CK * HWo));
            const S* go = on->grad.ptr();
            for (int64_t bi = 0; bi < B; ++bi) {
                const S* gy = go + bi * Co * HWo;
                if (wn->needs_grad) {
                    convdet::im2col(xn->val.ptr() + bi * Ci * H * W, Ci, H, W, Ho, Wo, sp.kh, sp.kw,
                                    sp.sh, sp.sw, sp.ph, sp.pw, col2.data());
                    gemm_nt<S>(gy, col2.data(), wn->ensure_grad().ptr(), Co, HWo, CK, true);
                }
                if (xn->needs_grad) {
                    gemm_tn<S>(wn->val.ptr(), gy, dcol.data(), CK, Co, HWo, false);
                    convdet::col2im(dcol.data(), Ci, H, W, Ho, Wo, sp.kh, sp.kw, sp.sh, sp.sw, sp.ph,
                                    sp.pw, xn->ensure_grad().ptr() + bi * Ci * H * W);
                }
                if (bn->needs_grad) {
                    auto& gb = bn->ensure_grad();
                    for (int64_t co = 0; co < Co; ++co) {
                        double acc = 0;
                        for (int64_t i = 0; i < HWo; ++i) acc += gy[co * HWo + i];
                        gb[co] += static_cast<S>(acc);
                    }
                }
            }
        };
    }
    return node;
}

// x [B, Ci, H, W], w [Ci, Co, kh, kw] -> [B, Co, (H-1)sh - 2ph + kh, ...].
template <class S>
Var<S> conv_transpose2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, Conv2dSpec sp) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    check<S>(xs.size() == 4 && ws.size() == 4, "conv_transpose2d: rank mismatch");
    check<S>(xs[1] == ws[0], "conv_transpose2d: channel mismatch");
    int64_t B = xs[0], Ci = xs[1], H = xs[2], W = xs[3], Co = ws[1];
    int64_t Ho = (H - 1) * sp.sh - 2 * sp.ph + sp.kh;
    int64_t Wo = (W - 1) * sp.sw - 2 * sp.pw + sp.kw;
    check<S>(Ho >= 1 && Wo >= 1, "conv_transpose2d: degenerate output");
    check<S>(b.numel() == Co, "conv_transpose2d: bias size mismatch");
    const int64_t CK = Co * sp.kh * sp.kw, HWi = H * W;

    Tensor<S> out({B, Co, Ho, Wo}, typename Tensor<S>::Uninit{});
    auto& col = convdet::scratch<S>();
    col.resize(static_cast<size_t>(CK * HWi));
    for (int64_t bi = 0; bi < B; ++bi) {
        const S* xsrc = x.val().ptr() + bi * Ci * HWi;
        // col[(co,u,v), (ih,iw)] = sum_ci w[ci, co, u, v] * x[ci, ih, iw]
        gemm_tn<S>(w.val().ptr(), xsrc, col.data(), CK, Ci, HWi, false);
        S* y = out.ptr() + bi * Co * Ho * Wo;
        for (int64_t co = 0; co < Co; ++co) {
            S bias = b.val()[co];
            S* yl = y + co * Ho * Wo;
            std::fill(yl, yl + Ho * Wo, bias);
        }
        convdet::col2im(col.data(), Co, Ho, Wo, H, W, sp.kh, sp.kw, sp.sh, sp.sw, sp.ph, sp.pw, y);
    }
    auto xn = x.n, wn = w.n, bn = b.n;
    auto node = make_op_node<S>(std::move(out), {x, w, b}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, wn, bn, on, B, Ci, Co, H, W, Ho, Wo, CK, HWi, sp] {
            std::vector<S> dcol(static_cast<size_t>(CK * HWi));
            const S* go = on->grad.ptr();
            for (int64_t bi = 0; bi < B; ++bi) {
                const S* gy = go + bi * Co * Ho * Wo;
                convdet::im2col(gy, Co, Ho, Wo, H, W, sp.kh, sp.kw, sp.sh, sp.sw, sp.ph, sp.pw,
                                dcol.data());
                if (xn->needs_grad)
                    gemm_nn<S>(wn->val.ptr(), dcol.data(), xn->ensure_grad().ptr() + bi * Ci * HWi,
                               Ci, CK, HWi, true);
                if (wn->needs_grad)
                    gemm_nt<S>(xn->val.ptr() + bi * Ci * HWi, dcol.data(), wn->ensure_grad().ptr(),
                               Ci, HWi, CK, true);
                if (bn->needs_grad) {
                    auto& gb = bn->ensure_grad();
                    for (int64_t co = 0; co < Co; ++co) {
                        double acc = 0;
                        const S* gl = gy + co * Ho * Wo;
                        for (int64_t i = 0; i < Ho * Wo; ++i) acc += gl[i];
                        gb[co] += static_cast<S>(acc);
                    }
                }
            }
        };
    }
    return node;
}

// 1-D wrappers: [B, C, L] treated as [B, C, 1, L].
template <class S>
Var<S> conv1d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int64_t k, int64_t stride,
              int64_t pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    check<S>(xs.size() == 3 && ws.size() == 3 && ws[2] == k, "conv1d: shape mismatch");
    Var<S> x4 = reshape(x, {xs[0], xs[1], int64_t(1), xs[2]});
    Var<S> w4 = reshape(w, {ws[0], ws[1], int64_t(1), k});
    Conv2dSpec sp{1, k, 1, stride, 0, pad};
    Var<S> y = conv2d(x4, w4, b, sp);
    const auto& ys = y.shape();
    return reshape(y, {ys[0], ys[1], ys[3]});
}

template <class S>
Var<S> conv_transpose1d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int64_t k,
                        int64_t stride, int64_t pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    check<S>(xs.size() == 3 && ws.size() == 3 && ws[2] == k, "conv_transpose1d: shape mismatch");
    Var<S> x4 = reshape(x, {xs[0], xs[1], int64_t(1), xs[2]});
    Var<S> w4 = reshape(w, {ws[0], ws[1], int64_t(1), k});
    Conv2dSpec sp{1, k, 1, stride, 0, pad};
    Var<S> y = conv_transpose2d(x4, w4, b, sp);
    const auto& ys = y.shape();
    return reshape(y, {ys[0], ys[1], ys[3]});
}

// Fused "concat fixed PE then 1x1 conv" used at the decoder output where
// materializing the concatenation per sample would dominate memory.
// x [B, C, H, W], pe [P, H, W], w [Co, C+P], b [Co] -> [B, Co, H, W].
template <class S>
Var<S> linear_pixels_pe(const Var<S>& x, const Tensor<S>& pe, const Var<S>& w, const Var<S>& b) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    check<S>(xs.size() == 4 && pe.ndim() == 3 && ws.size() == 2, "linear_pixels_pe: rank mismatch");
    int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3], P = pe.shape[0], Co = ws[0];
    check<S>(ws[1] == C + P && pe.shape[1] == H && pe.shape[2] == W, "linear_pixels_pe: size mismatch");
    const int64_t HW = H * W;

    // Split the weight into contiguous blocks for the two inputs.
    Tensor<S> wx({Co, C}), wp({Co, P});
    for (int64_t co = 0; co < Co; ++co) {
        std::copy(w.val().ptr() + co * (C + P), w.val().ptr() + co * (C + P) + C, wx.ptr() + co * C);
        std::copy(w.val().ptr() + co * (C + P) + C, w.val().ptr() + (co + 1) * (C + P),
                  wp.ptr() + co * P);
    }
    // PE contribution is sample-independent.
    Tensor<S> pre({Co, HW}, typename Tensor<S>::Uninit{});
    gemm_nn<S>(wp.ptr(), pe.ptr(), pre.ptr(), Co, P, HW, false);
    for (int64_t co = 0; co < Co; ++co)
        for (int64_t i = 0; i < HW; ++i) pre[co * HW + i] += b.val()[co];

    Tensor<S> out({B, Co, H, W}, typename Tensor<S>::Uninit{});
    for (int64_t bi = 0; bi < B; ++bi) {
        S* y = out.ptr() + bi * Co * HW;
        std::copy(pre.ptr(), pre.ptr() + Co * HW, y);
        gemm_nn<S>(wx.ptr(), x.val().ptr() + bi * C * HW, y, Co, C, HW, true);
    }
    auto xn = x.n, wn = w.n, bn = b.n;
    auto node = make_op_node<S>(std::move(out), {x, w, b}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        Tensor<S> pe_copy = pe;
        node.n->back = [xn, wn, bn, on, pe_copy, wx, B, C, P, Co, HW] {
            const S* go = on->grad.ptr();
            Tensor<S> gy_sum({Co, HW});
            for (int64_t bi = 0; bi < B; ++bi) {
                const S* gy = go + bi * Co * HW;
                for (int64_t i = 0; i < Co * HW; ++i) gy_sum[i] += gy[i];
                if (xn->needs_grad)
                    gemm_tn<S>(wx.ptr(), gy, xn->ensure_grad().ptr() + bi * C * HW, C, Co, HW, true);
            }
            if (wn->needs_grad) {
                Tensor<S> gwx({Co, C}), gwp({Co, P});
                for (int64_t bi = 0; bi < B; ++bi)
                    gemm_nt<S>(go + bi * Co * HW, xn->val.ptr() + bi * C * HW, gwx.ptr(), Co, HW, C,
                               true);
                gemm_nt<S>(gy_sum.ptr(), pe_copy.ptr(), gwp.ptr(), Co, HW, P, false);
                auto& gw = wn->ensure_grad();
                for (int64_t co = 0; co < Co; ++co) {
                    for (int64_t c = 0; c < C; ++c) gw[co * (C + P) + c] += gwx[co * C + c];
                    for (int64_t p = 0; p < P; ++p) gw[co * (C + P) + C + p] += gwp[co * P + p];
                }
            }
            if (bn->needs_grad) {
                auto& gb = bn->ensure_grad();
                for (int64_t co = 0; co < Co; ++co) {
                    double acc = 0;
                    for (int64_t i = 0; i < HW; ++i) acc += gy_sum[co * HW + i];
                    gb[co] += static_cast<S>(acc);
                }
            }
        };
    }
    return node;
}

// --------------------------------------------------------- norm / modulation

// GroupNorm with optional fused SiLU. x is [B, C, spatial...].
template <class S>
Var<S> group_norm(const Var<S>& x, const Var<S>& gain, const Var<S>& bias, int64_t groups,
                  bool fuse_silu) {
    const auto& xs = x.shape();
    check<S>(xs.size() >= 3, "group_norm: expects [B,C,spatial]");
    int64_t B = xs[0], C = xs[1];
    int64_t Sp = 1;
    for (size_t d = 2; d < xs.size(); ++d) Sp *= xs[d];
    check<S>(C % groups == 0, "group_norm: channels not divisible by groups");
    check<S>(gain.numel() == C && bias.numel() == C, "group_norm: affine size mismatch");
    const int64_t cg = C / groups;
    const double eps = 1e-5;

    auto xhat = std::make_shared<Tensor<S>>(std::vector<int64_t>{B, C, Sp}, typename Tensor<S>::Uninit{});
    auto invstd = std::make_shared<Tensor<S>>(std::vector<int64_t>{B, groups});
    Tensor<S> out(xs, typename Tensor<S>::Uninit{});
    const S* xp = x.val().ptr();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t g = 0; g < groups; ++g) {
            const int64_t base = (b * C + g * cg) * Sp;
            const int64_t n = cg * Sp;
            CArrMap<S> seg(xp + base, n);
            double mean = seg.template cast<double>().mean();
            double var = (seg.template cast<double>() - mean).square().mean();
            double istd = 1.0 / std::sqrt(var + eps);
            (*invstd)[b * groups + g] = static_cast<S>(istd);
            ArrMap<S> xh(xhat->ptr() + base, n);
            xh = (seg - static_cast<S>(mean)) * static_cast<S>(istd);
        }
    const S* gp = gain.val().ptr();
    const S* bp = bias.val().ptr();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const int64_t base = (b * C + c) * Sp;
            S gg = gp[c], bb = bp[c];
            CArrMap<S> xh(xhat->ptr() + base, Sp);
            ArrMap<S> ov(out.ptr() + base, Sp);
            if (fuse_silu) {
                auto z = (xh * gg + bb).eval();
                ov = z / (S(1) + (-z).exp());
            } else {
                ov = xh * gg + bb;
            }
        }
    auto xn = x.n, gn = gain.n, bn = bias.n;
    auto node = make_op_node<S>(std::move(out), {x, gain, bias}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, gn, bn, on, xhat, invstd, B, C, Sp, groups, cg, fuse_silu] {
            const S* go = on->grad.ptr();
            const S* gp2 = gn->val.ptr();
            const S* bp2 = bn->val.ptr();
            // dz: gradient w.r.t. the affine output, folding the SiLU factor.
            Tensor<S> dz({B, C, Sp}, typename Tensor<S>::Uninit{});
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const int64_t base = (b * C + c) * Sp;
                    S gg = gp2[c], bb = bp2[c];
                    CArrMap<S> xh(xhat->ptr() + base, Sp), gov(go + base, Sp);
                    ArrMap<S> dzv(dz.ptr() + base, Sp);
                    if (fuse_silu) {
                        auto z = (xh * gg + bb).eval();
                        auto sg = ((S(1) + (-z).exp()).inverse()).eval();
                        dzv = gov * (sg * (S(1) + z * (S(1) - sg)));
                    } else {
                        dzv = gov;
                    }
                }
            if (gn->needs_grad || bn->needs_grad) {
                auto& gg = gn->ensure_grad();
                auto& gb = bn->ensure_grad();
                for (int64_t c = 0; c < C; ++c) {
                    double ag = 0, ab = 0;
                    for (int64_t b = 0; b < B; ++b) {
                        const int64_t base = (b * C + c) * Sp;
                        CArrMap<S> dzv(dz.ptr() + base, Sp), xh(xhat->ptr() + base, Sp);
                        ag += (dzv * xh).template cast<double>().sum();
                        ab += dzv.template cast<double>().sum();
                    }
                    if (gn->needs_grad) gg[c] += static_cast<S>(ag);
                    if (bn->needs_grad) gb[c] += static_cast<S>(ab);
                }
            }
            if (xn->needs_grad) {
                auto& gx = xn->ensure_grad();
                const int64_t n = cg * Sp;
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t g = 0; g < groups; ++g) {
                        const int64_t cbase = b * C + g * cg;
                        double m1 = 0, m2 = 0;
                        for (int64_t cc = 0; cc < cg; ++cc) {
                            const int64_t base = (cbase + cc) * Sp;
                            double gamma = gp2[g * cg + cc];
                            CArrMap<S> dzv(dz.ptr() + base, Sp), xh(xhat->ptr() + base, Sp);
                            m1 += gamma * dzv.template cast<double>().sum();
                            m2 += gamma * (dzv * xh).template cast<double>().sum();
                        }
                        m1 /= n;
                        m2 /= n;
                        const S istd = (*invstd)[b * groups + g];
                        const S sm1 = static_cast<S>(m1), sm2 = static_cast<S>(m2);
                        for (int64_t cc = 0; cc < cg; ++cc) {
                            const int64_t base = (cbase + cc) * Sp;
                            const S gamma = gp2[g * cg + cc];
                            CArrMap<S> dzv(dz.ptr() + base, Sp), xh(xhat->ptr() + base, Sp);
                            ArrMap<S> gxv(gx.ptr() + base, Sp);
                            gxv += istd * (gamma * dzv - sm1 - xh * sm2);
                        }
                    }
            }
        };
    }
    return node;
}

// Feature-wise linear modulation: out[b,c,*] = gb[b,c] * x[b,c,*] + gb[b,C+c].
template <class S>
Var<S> film(const Var<S>& x, const Var<S>& gb) {
    const auto& xs = x.shape();
    const auto& gs = gb.shape();
    check<S>(xs.size() >= 3 && gs.size() == 2, "film: rank mismatch");
    check<S>(gs[0] == xs[0], "film: batch mismatch");
    if (gs[1] != 2 * xs[1]) throw std::invalid_argument("film: channel mismatch");
    int64_t B = xs[0], C = xs[1];
    int64_t Sp = 1;
    for (size_t d = 2; d < xs.size(); ++d) Sp *= xs[d];
    Tensor<S> out(xs, typename Tensor<S>::Uninit{});
    const S* xp = x.val().ptr();
    const S* gp = gb.val().ptr();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            double gamma = gp[b * 2 * C + c], delta = gp[b * 2 * C + C + c];
            const int64_t base = (b * C + c) * Sp;
            for (int64_t i = 0; i < Sp; ++i)
                out[base + i] = static_cast<S>(gamma * xp[base + i] + delta);
        }
    auto xn = x.n, gn = gb.n;
    auto node = make_op_node<S>(std::move(out), {x, gb}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, gn, on, B, C, Sp] {
            const S* go = on->grad.ptr();
            const S* xp2 = xn->val.ptr();
            const S* gp2 = gn->val.ptr();
            if (xn->needs_grad) {
                auto& gx = xn->ensure_grad();
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < C; ++c) {
                        double gamma = gp2[b * 2 * C + c];
                        const int64_t base = (b * C + c) * Sp;
                        for (int64_t i = 0; i < Sp; ++i)
                            gx[base + i] += static_cast<S>(gamma * go[base + i]);
                    }
            }
            if (gn->needs_grad) {
                auto& gg = gn->ensure_grad();
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < C; ++c) {
                        const int64_t base = (b * C + c) * Sp;
                        double dg = 0, dd = 0;
                        for (int64_t i = 0; i < Sp; ++i) {
                            dg += go[base + i] * xp2[base + i];
                            dd += go[base + i];
                        }
                        gg[b * 2 * C + c] += static_cast<S>(dg);
                        gg[b * 2 * C + C + c] += static_cast<S>(dd);
                    }
            }
        };
    }
    return node;
}

// Adds a per-(sample, channel) vector across the spatial axis.
template <class S>
Var<S> add_channel_bias(const Var<S>& x, const Var<S>& v) {
    const auto& xs = x.shape();
    const auto& vs = v.shape();
    check<S>(xs.size() >= 3 && vs.size() == 2 && vs[0] == xs[0] && vs[1] == xs[1],
             "add_channel_bias: shape mismatch");
    int64_t B = xs[0], C = xs[1];
    int64_t Sp = 1;
    for (size_t d = 2; d < xs.size(); ++d) Sp *= xs[d];
    Tensor<S> out = x.val();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        S add = v.val()[bc];
        S* dst = out.ptr() + bc * Sp;
        for (int64_t i = 0; i < Sp; ++i) dst[i] += add;
    }
    auto xn = x.n, vn = v.n;
    auto node = make_op_node<S>(std::move(out), {x, v}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, vn, on, B, C, Sp] {
            const S* go = on->grad.ptr();
            if (xn->needs_grad) accumulate(xn->ensure_grad(), on->grad);
            if (vn->needs_grad) {
                auto& gv = vn->ensure_grad();
                for (int64_t bc = 0; bc < B * C; ++bc) {
                    double acc = 0;
                    for (int64_t i = 0; i < Sp; ++i) acc += go[bc * Sp + i];
                    gv[bc] += static_cast<S>(acc);
                }
            }
        };
    }
    return node;
}

// ------------------------------------------------------ pooling / reductions

// Soft-argmax keypoints: x [B, C, H, W] -> [B, 2C] of expected (x, y) in [-1, 1].
template <class S>
Var<S> spatial_softmax(const Var<S>& x) {
    const auto& xs = x.shape();
    check<S>(xs.size() == 4, "spatial_softmax: expects [B,C,H,W]");
    int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int64_t HW = H * W;
    auto probs = std::make_shared<Tensor<S>>(std::vector<int64_t>{B, C, HW}, typename Tensor<S>::Uninit{});
    Tensor<S> out({B, 2 * C});
    std::vector<double> gx(static_cast<size_t>(HW)), gy(static_cast<size_t>(HW));
    for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w) {
            gx[static_cast<size_t>(h * W + w)] = W > 1 ? 2.0 * w / (W - 1) - 1.0 : 0.0;
            gy[static_cast<size_t>(h * W + w)] = H > 1 ? 2.0 * h / (H - 1) - 1.0 : 0.0;
        }
    const S* xp = x.val().ptr();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const S* lx = xp + bc * HW;
        double mx = lx[0];
        for (int64_t i = 1; i < HW; ++i) mx = std::max(mx, static_cast<double>(lx[i]));
        double zs = 0;
        S* pp = probs->ptr() + bc * HW;
        for (int64_t i = 0; i < HW; ++i) {
            double e = std::exp(static_cast<double>(lx[i]) - mx);
            pp[i] = static_cast<S>(e);
            zs += e;
        }
        double kx = 0, ky = 0;
        for (int64_t i = 0; i < HW; ++i) {
            double p = pp[i] / zs;
            pp[i] = static_cast<S>(p);
            kx += p * gx[static_cast<size_t>(i)];
            ky += p * gy[static_cast<size_t>(i)];
        }
        out[bc * 2] = static_cast<S>(kx);
        out[bc * 2 + 1] = static_cast<S>(ky);
    }
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on, probs, B, C, H, W, HW, gx, gy] {
            auto& g = xn->ensure_grad();
            const S* go = on->grad.ptr();
            const S* ov = on->val.ptr();
            for (int64_t bc = 0; bc < B * C; ++bc) {
                const S* pp = probs->ptr() + bc * HW;
                double dkx = go[bc * 2], dky = go[bc * 2 + 1];
                double kx = ov[bc * 2], ky = ov[bc * 2 + 1];
                S* gp = g.ptr() + bc * HW;
                for (int64_t i = 0; i < HW; ++i)
                    gp[i] += static_cast<S>(
                        pp[i] * ((gx[static_cast<size_t>(i)] - kx) * dkx +
                                 (gy[static_cast<size_t>(i)] - ky) * dky));
            }
        };
    }
    return node;
}

template <class S>
Var<S> mean_all(const Var<S>& x) {
    const int64_t n = x.numel();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += x.val()[i];
    Tensor<S> out({1});
    out[0] = static_cast<S>(acc / n);
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [xn, on, n] {
            auto& g = xn->ensure_grad();
            S gv = static_cast<S>(on->grad[0] / static_cast<S>(n));
            for (int64_t i = 0; i < n; ++i) g[i] += gv;
        };
    }
    return node;
}

// Mean squared error against a constant target.
template <class S>
Var<S> mse_to_const(const Var<S>& x, const Tensor<S>& target) {
    check<S>(x.val().same_shape(target), "mse: shape mismatch");
    const int64_t n = x.numel();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(x.val()[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    Tensor<S> out({1});
    out[0] = static_cast<S>(acc / n);
    auto xn = x.n;
    auto node = make_op_node<S>(std::move(out), {x}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        auto tgt = std::make_shared<Tensor<S>>(target);
        node.n->back = [xn, on, tgt, n] {
            auto& g = xn->ensure_grad();
            double g0 = on->grad[0];
            for (int64_t i = 0; i < n; ++i)
                g[i] += static_cast<S>(2.0 * (xn->val[i] - (*tgt)[i]) / n * g0);
        };
    }
    return node;
}

// Row-wise softmax cross entropy with the diagonal as labels (InfoNCE-style).
template <class S>
Var<S> cross_entropy_diag(const Var<S>& m) {
    const auto& ms = m.shape();
    check<S>(ms.size() == 2 && ms[0] == ms[1], "cross_entropy_diag: expects square logits");
    int64_t B = ms[0];
    check<S>(B >= 2, "cross_entropy_diag: batch size < 2 is contrastively degenerate");
    auto probs = std::make_shared<Tensor<S>>(std::vector<int64_t>{B, B});
    double loss = 0;
    for (int64_t i = 0; i < B; ++i) {
        const S* row = m.val().ptr() + i * B;
        double mx = row[0];
        for (int64_t j = 1; j < B; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double zs = 0;
        for (int64_t j = 0; j < B; ++j) zs += std::exp(static_cast<double>(row[j]) - mx);
        double lse = mx + std::log(zs);
        loss += lse - static_cast<double>(row[i]);
        for (int64_t j = 0; j < B; ++j)
            (*probs)[i * B + j] = static_cast<S>(std::exp(static_cast<double>(row[j]) - lse));
    }
    Tensor<S> out({1});
    out[0] = static_cast<S>(loss / B);
    auto mn = m.n;
    auto node = make_op_node<S>(std::move(out), {m}, nullptr);
    if (node.needs_grad()) {
        auto on = node.n.get();
        node.n->back = [mn, on, probs, B] {
            auto& g = mn->ensure_grad();
            double g0 = on->grad[0];
            for (int64_t i = 0; i < B; ++i)
                for (int64_t j = 0; j < B; ++j) {
                    double p = (*probs)[i * B + j];
                    if (i == j) p -= 1.0;
                    g[i * B + j] += static_cast<S>(p / B * g0);
                }
        };
    }
    return node;
}

}  // namespace crossway::ag
