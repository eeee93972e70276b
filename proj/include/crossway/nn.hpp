#pragma once

#include <string>
#include <utility>
#include <vector>

#include "crossway/ops.hpp"
#include "crossway/rng.hpp"

namespace crossway::nn {

using crossway::Tensor;
using crossway::Var;

// Ordered named-parameter registry. Initialization draws from a stream keyed
// on (seed, parameter name), so two models that share a submodule initialize
// it identically regardless of what else they contain.
template <class S>
struct ParamStore {
    uint64_t seed = 0;
    std::vector<std::pair<std::string, Var<S>>> items;

    enum class Init { fan_in_uniform, zeros, ones, film_identity };

    Var<S> add(const std::string& name, std::vector<int64_t> shape, Init init,
               int64_t fan_in = 0) {
        Tensor<S> t(shape);
        Rng rng = stream_rng(seed, std::string("param/") + name);
        switch (init) {
            case Init::fan_in_uniform: {
                double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
                for (auto& v : t.data) v = static_cast<S>(rng.uniform(-bound, bound));
                break;
            }
            case Init::zeros:
                break;
            case Init::ones:
                t.fill(S(1));
                break;
            case Init::film_identity: {
                // First half scales (init 1), second half shifts (init 0).
                int64_t half = t.numel() / 2;
                for (int64_t i = 0; i < half; ++i) t[i] = S(1);
                break;
            }
        }
        Var<S> v = make_leaf<S>(std::move(t), true);
        items.emplace_back(name, v);
        return v;
    }

    Var<S>* find(const std::string& name) {
        for (auto& [n, v] : items)
            if (n == name) return &v;
        return nullptr;
    }

    void zero_grad() {
        for (auto& [n, v] : items)
            if (!v.n->grad.data.empty()) v.n->grad.zero();
    }
};

inline int64_t groups_for(int64_t channels) {
    int64_t g = std::min<int64_t>(8, channels);
    while (channels % g != 0) --g;
    return g;
}

template <class S>
struct Linear {
    Var<S> w, b;
    Linear() = default;
    Linear(ParamStore<S>& ps, const std::string& name, int64_t in, int64_t out,
           typename ParamStore<S>::Init winit = ParamStore<S>::Init::fan_in_uniform) {
        // film_identity means: zero weights, bias [1...1, 0...0], so the head
        // starts as an identity modulation.
        bool film = winit == ParamStore<S>::Init::film_identity;
        w = ps.add(name + ".w", {out, in}, film ? ParamStore<S>::Init::zeros : winit, in);
        b = ps.add(name + ".b", {out},
                   film ? ParamStore<S>::Init::film_identity : ParamStore<S>::Init::zeros);
    }
    Var<S> forward(const Var<S>& x) const { return ag::linear(x, w, b); }
};

template <class S>
struct Conv1d {
    Var<S> w, b;
    int64_t k = 3, stride = 1, pad = 1;
    Conv1d() = default;
    Conv1d(ParamStore<S>& ps, const std::string& name, int64_t ci, int64_t co, int64_t k_,
           int64_t stride_, int64_t pad_, bool zero_init = false)
        : k(k_), stride(stride_), pad(pad_) {
        auto init = zero_init ? ParamStore<S>::Init::zeros : ParamStore<S>::Init::fan_in_uniform;
        w = ps.add(name + ".w", {co, ci, k}, init, ci * k);
        b = ps.add(name + ".b", {co}, ParamStore<S>::Init::zeros);
    }
    Var<S> forward(const Var<S>& x) const { return ag::conv1d(x, w, b, k, stride, pad); }
};

template <class S>
struct ConvT1d {
    Var<S> w, b;
    int64_t k = 4, stride = 2, pad = 1;
    ConvT1d() = default;
    ConvT1d(ParamStore<S>& ps, const std::string& name, int64_t ci, int64_t co) {
        w = ps.add(name + ".w", {ci, co, k}, ParamStore<S>::Init::fan_in_uniform, ci * k);
        b = ps.add(name + ".b", {co}, ParamStore<S>::Init::zeros);
    }
    Var<S> forward(const Var<S>& x) const { return ag::conv_transpose1d(x, w, b, k, stride, pad); }
};

template <class S>
struct Conv2d {
    Var<S> w, b;
    ag::Conv2dSpec sp;
    Conv2d() = default;
    Conv2d(ParamStore<S>& ps, const std::string& name, int64_t ci, int64_t co, int64_t k,
           int64_t stride, int64_t pad, bool zero_init = false) {
        sp = ag::Conv2dSpec{k, k, stride, stride, pad, pad};
        auto init = zero_init ? ParamStore<S>::Init::zeros : ParamStore<S>::Init::fan_in_uniform;
        w = ps.add(name + ".w", {co, ci, k, k}, init, ci * k * k);
        b = ps.add(name + ".b", {co}, ParamStore<S>::Init::zeros);
    }
    Var<S> forward(const Var<S>& x) const { return ag::conv2d(x, w, b, sp); }
};

template <class S>
struct ConvT2d {
    Var<S> w, b;
    ag::Conv2dSpec sp{4, 4, 2, 2, 1, 1};
    ConvT2d() = default;
    ConvT2d(ParamStore<S>& ps, const std::string& name, int64_t ci, int64_t co) {
        w = ps.add(name + ".w", {ci, co, 4, 4}, ParamStore<S>::Init::fan_in_uniform, ci * 16);
        b = ps.add(name + ".b", {co}, ParamStore<S>::Init::zeros);
    }
    Var<S> forward(const Var<S>& x) const { return ag::conv_transpose2d(x, w, b, sp); }
};

template <class S>
struct GroupNorm {
    Var<S> gain, bias;
    int64_t groups = 1;
    GroupNorm() = default;
    GroupNorm(ParamStore<S>& ps, const std::string& name, int64_t channels) {
        groups = groups_for(channels);
        gain = ps.add(name + ".g", {channels}, ParamStore<S>::Init::ones);
        bias = ps.add(name + ".b", {channels}, ParamStore<S>::Init::zeros);
    }
    Var<S> forward(const Var<S>& x, bool fuse_silu) const {
        return ag::group_norm(x, gain, bias, groups, fuse_silu);
    }
};

// Conditional 1-D residual block: FiLM from the observation condition between
// the convolutions, diffusion-step embedding injected by addition.
template <class S>
struct ResBlock1d {
    Conv1d<S> conv1, conv2, skip;
    GroupNorm<S> gn1, gn2;
    Linear<S> film_head, emb_proj;
    bool has_skip = false;

    ResBlock1d() = default;
    ResBlock1d(ParamStore<S>& ps, const std::string& name, int64_t ci, int64_t co,
               int64_t cond_dim, int64_t emb_dim)
        : conv1(ps, name + ".conv1", ci, co, 5, 1, 2),
          conv2(ps, name + ".conv2", co, co, 5, 1, 2),
          gn1(ps, name + ".gn1", ci),
          gn2(ps, name + ".gn2", co),
          film_head(ps, name + ".film", cond_dim, 2 * co, ParamStore<S>::Init::film_identity),
          emb_proj(ps, name + ".emb", emb_dim, co) {
        if (ci != co) {
            skip = Conv1d<S>(ps, name + ".skip", ci, co, 1, 1, 0);
            has_skip = true;
        }
    }

    Var<S> forward(const Var<S>& x, const Var<S>& cond, const Var<S>& emb) const {
        Var<S> h = conv1.forward(gn1.forward(x, true));
        h = ag::add_channel_bias(h, emb_proj.forward(emb));
        h = ag::film(h, film_head.forward(cond));
        h = conv2.forward(gn2.forward(h, true));
        return ag::add(h, has_skip ? skip.forward(x) : x);
    }
};

// Unconditional 2-D residual block used by the visual encoder and the state
// decoder.
template <class S>
struct ResBlock2d {
    Conv2d<S> conv1, conv2, skip;
    GroupNorm<S> gn1, gn2;
    bool has_skip = false;

    ResBlock2d() = default;
    ResBlock2d(ParamStore<S>& ps, const std::string& name, int64_t ci, int64_t co)
        : conv1(ps, name + ".conv1", ci, co, 3, 1, 1),
          conv2(ps, name + ".conv2", co, co, 3, 1, 1),
          gn1(ps, name + ".gn1", ci),
          gn2(ps, name + ".gn2", co) {
        if (ci != co) {
            skip = Conv2d<S>(ps, name + ".skip", ci, co, 1, 1, 0);
            has_skip = true;
        }
    }

    Var<S> forward(const Var<S>& x) const {
        Var<S> h = conv1.forward(gn1.forward(x, true));
        h = conv2.forward(gn2.forward(h, true));
        return ag::add(h, has_skip ? skip.forward(x) : x);
    }
};

}  // namespace crossway::nn
