#pragma once

#include "crossway/nn.hpp"

namespace crossway {

// Sinusoidal embedding of the diffusion step: E/2 sines then E/2 cosines at
// geometric frequencies.
template <class S>
Tensor<S> embed_step(int64_t k, int64_t E) {
    if (k < 0) throw std::invalid_argument("embed_step: k must be >= 0");
    if (E < 2 || E % 2 != 0) throw std::invalid_argument("embed_step: width must be even and >= 2");
    const int64_t half = E / 2;
    Tensor<S> out({E});
    for (int64_t i = 0; i < half; ++i) {
        double freq = half > 1 ? std::exp(-std::log(10000.0) * static_cast<double>(i) / (half - 1))
                               : 1.0;
        double a = static_cast<double>(k) * freq;
        out[i] = static_cast<S>(std::sin(a));
        out[half + i] = static_cast<S>(std::cos(a));
    }
    return out;
}

template <class S>
Tensor<S> embed_steps(const std::vector<int>& ks, int64_t E) {
    Tensor<S> out({static_cast<int64_t>(ks.size()), E});
    for (size_t i = 0; i < ks.size(); ++i) {
        Tensor<S> e = embed_step<S>(ks[i], E);
        std::copy(e.ptr(), e.ptr() + E, out.ptr() + static_cast<int64_t>(i) * E);
    }
    return out;
}

// Deepest U-Net representation plus everything the decoder half needs: skip
// tensors and the processed step embedding.
template <class S>
struct Intersection {
    Var<S> deep;                // [B, C, T]
    std::vector<Var<S>> skips;  // stage outputs, shallow to deep
    Var<S> emb;                 // [B, E] processed step embedding
};

// Action encoder E_A: 1-D U-Net downsampling path. Two stride-2 stages, so
// T = T_a / 4 and C = 2 * width.
template <class S>
struct ActionEncoder {
    nn::Conv1d<S> stem;       // A -> w
    nn::ResBlock1d<S> rb1;    // w -> w       (skip 1, length T_a)
    nn::Conv1d<S> down1;      // w -> w, stride 2
    nn::ResBlock1d<S> rb2;    // w -> 2w      (skip 2, length T_a/2)
    nn::Conv1d<S> down2;      // 2w -> 2w, stride 2
    nn::ResBlock1d<S> mid;    // 2w -> 2w     (deep, length T_a/4)

    ActionEncoder() = default;
    ActionEncoder(nn::ParamStore<S>& ps, const std::string& name, int action_dim, int width,
                  int cond_dim, int emb_dim)
        : stem(ps, name + ".stem", action_dim, width, 5, 1, 2),
          rb1(ps, name + ".rb1", width, width, cond_dim, emb_dim),
          down1(ps, name + ".down1", width, width, 3, 2, 1),
          rb2(ps, name + ".rb2", width, 2 * width, cond_dim, emb_dim),
          down2(ps, name + ".down2", 2 * width, 2 * width, 3, 2, 1),
          mid(ps, name + ".mid", 2 * width, 2 * width, cond_dim, emb_dim) {}

    // actions in conv layout [B, A, T_a].
    Intersection<S> forward(const Var<S>& actions, const Var<S>& cond, const Var<S>& emb) const {
        Intersection<S> out;
        Var<S> x = stem.forward(actions);
        Var<S> s1 = rb1.forward(x, cond, emb);
        x = down1.forward(s1);
        Var<S> s2 = rb2.forward(x, cond, emb);
        x = down2.forward(s2);
        out.deep = mid.forward(x, cond, emb);
        out.skips = {s1, s2};
        out.emb = emb;
        return out;
    }
};

// Action decoder D_A: mirrored upsampling path consuming the intersection and
// the skip tensors, ending in a zero-initialized projection so the initial
// noise prediction is exactly zero.
template <class S>
struct ActionDecoder {
    nn::ResBlock1d<S> mid;    // 2w -> 2w
    nn::ConvT1d<S> up2;       // 2w -> 2w, length x2
    nn::ResBlock1d<S> urb2;   // (2w + 2w) -> w
    nn::ConvT1d<S> up1;       // w -> w, length x2
    nn::ResBlock1d<S> urb1;   // (w + w) -> w
    nn::GroupNorm<S> gn_out;
    nn::Conv1d<S> out;        // w -> A

    ActionDecoder() = default;
    ActionDecoder(nn::ParamStore<S>& ps, const std::string& name, int action_dim, int width,
                  int cond_dim, int emb_dim)
        : mid(ps, name + ".mid", 2 * width, 2 * width, cond_dim, emb_dim),
          up2(ps, name + ".up2", 2 * width, 2 * width),
          urb2(ps, name + ".urb2", 4 * width, width, cond_dim, emb_dim),
          up1(ps, name + ".up1", width, width),
          urb1(ps, name + ".urb1", 2 * width, width, cond_dim, emb_dim),
          gn_out(ps, name + ".gn_out", width),
          out(ps, name + ".out", width, action_dim, 5, 1, 2, /*zero_init=*/true) {}

    // Returns eps prediction in conv layout [B, A, T_a].
    Var<S> forward(const Intersection<S>& x, const Var<S>& cond) const {
        if (x.skips.size() != 2)
            throw std::invalid_argument("action decoder: skip-list arity mismatch");
        Var<S> h = mid.forward(x.deep, cond, x.emb);
        h = up2.forward(h);
        h = urb2.forward(ag::concat_dim1<S>({h, x.skips[1]}), cond, x.emb);
        h = up1.forward(h);
        h = urb1.forward(ag::concat_dim1<S>({h, x.skips[0]}), cond, x.emb);
        return out.forward(gn_out.forward(h, true));
    }
};

}  // namespace crossway
