#pragma once

#include "crossway/denoiser.hpp"

namespace crossway {

enum class Design { A, B, C, D };

inline char design_letter(Design d) { return "ABCD"[static_cast<int>(d)]; }
inline Design design_from_string(const std::string& s) {
    if (s == "A" || s == "a") return Design::A;
    if (s == "B" || s == "b") return Design::B;
    if (s == "C" || s == "c") return Design::C;
    if (s == "D" || s == "d") return Design::D;
    throw std::invalid_argument("unknown design: " + s);
}

// P-channel sinusoidal encoding of pixel coordinates: the first P/2 channels
// encode the row, the rest the column, each as interleaved sin/cos pairs at
// geometric frequencies.
template <class S>
Tensor<S> pixel_pos_embedding(int64_t H, int64_t W, int64_t P) {
    if (P < 2 || P % 2 != 0) throw std::invalid_argument("pixel_pos_embedding: P must be even");
    Tensor<S> out({P, H, W});
    const int64_t q = P / 2;       // channels per axis
    const int64_t pairs = q / 2;   // sin/cos pairs per axis
    auto write_axis = [&](int64_t ch0, bool rows) {
        for (int64_t j = 0; j < q; ++j) {
            int64_t pair = j / 2;
            bool is_cos = (j % 2) == 1;
            double freq = pairs > 1
                              ? std::exp(-std::log(10000.0) * static_cast<double>(pair) / (pairs - 1))
                              : 1.0;
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x) {
                    double v = (rows ? static_cast<double>(y) : static_cast<double>(x)) * freq;
                    out[((ch0 + j) * H + y) * W + x] =
                        static_cast<S>(is_cos ? std::cos(v) : std::sin(v));
                }
        }
    };
    write_axis(0, true);
    write_axis(q, false);
    return out;
}

// Intersection transformation g(.) feeding the visual state decoder.
//   A: fold X.deep[:, :, 0] into a (C/4) x 2 x 2 block, tile, append PE.
//   B: first C/2 channels of every time vector, shared linear to C/4,
//      averaged over time, broadcast, append PE.
//   C: as B but from all C channels.
//   D: the observation condition h, linear to C/4, broadcast, append PE.
// Projections are owned by the policy model; pass the one the design needs.
template <class S>
Var<S> transform_intersection(const Intersection<S>& x, const Var<S>& h, Design design,
                              int64_t rec_h, int64_t rec_w, const nn::Linear<S>* proj,
                              const Tensor<S>& pe, int64_t down_factor = 4) {
    const int64_t H = rec_h / down_factor, W = rec_w / down_factor;
    if (design == Design::A) {
        const int64_t C = x.deep.shape()[1];
        if (C % 4 != 0)
            throw std::invalid_argument("transform A: channel count must be divisible by 4");
        Var<S> v = ag::slice_time(x.deep, 0);
        Var<S> block = ag::fold_to_block(v);
        return ag::concat_pe(ag::tile_pattern(block, H, W), pe);
    }
    if (proj == nullptr) throw std::invalid_argument("transform B/C/D: missing projection");
    Var<S> vec;
    if (design == Design::D) {
        vec = proj->forward(h);
    } else {
        const int64_t C = x.deep.shape()[1];
        const int64_t T = x.deep.shape()[2];
        Var<S> sum;
        for (int64_t t = 0; t < T; ++t) {
            Var<S> v = ag::slice_time(x.deep, t);
            if (design == Design::B) v = ag::slice_dim1(v, 0, C / 2);
            Var<S> p = proj->forward(v);
            sum = sum.defined() ? ag::add(sum, p) : p;
        }
        vec = ag::scale(sum, 1.0 / static_cast<double>(T));
    }
    return ag::concat_pe(ag::broadcast_spatial(vec, H, W), pe);
}

// Visual state decoder: stages of two residual blocks plus a x2 transposed
// convolution, PE appended after every upsample, sigmoid output. The default
// has two stages (x4 total); the shallower variant keeps only one.
template <class S>
struct VisualStateDecoder {
    nn::ResBlock2d<S> s1_rb1, s1_rb2;
    nn::ConvT2d<S> s1_up;
    nn::ResBlock2d<S> s2_rb1, s2_rb2;
    nn::ConvT2d<S> s2_up;
    Var<S> final_w, final_b;  // fused PE-concat 1x1 projection
    bool shallow = false;
    int64_t rec_h = 0, rec_w = 0, out_channels = 0, pe_channels = 0;
    Tensor<S> pe_mid, pe_out;

    VisualStateDecoder() = default;
    VisualStateDecoder(nn::ParamStore<S>& ps, const std::string& name, int64_t in_channels,
                       int64_t pe_ch, int64_t t_obs, int64_t rh, int64_t rw, bool shallower)
        : shallow(shallower), rec_h(rh), rec_w(rw), pe_channels(pe_ch) {
        const int64_t c1 = in_channels;      // C/4
        const int64_t c2 = in_channels / 2;  // C/8
        out_channels = 3 * t_obs;
        s1_rb1 = nn::ResBlock2d<S>(ps, name + ".s1.rb1", c1 + pe_ch, c1);
        s1_rb2 = nn::ResBlock2d<S>(ps, name + ".s1.rb2", c1, c1);
        s1_up = nn::ConvT2d<S>(ps, name + ".s1.up", c1, c1);
        int64_t last_c = c1;
        if (!shallow) {
            s2_rb1 = nn::ResBlock2d<S>(ps, name + ".s2.rb1", c1 + pe_ch, c2);
            s2_rb2 = nn::ResBlock2d<S>(ps, name + ".s2.rb2", c2, c2);
            s2_up = nn::ConvT2d<S>(ps, name + ".s2.up", c2, c2);
            pe_mid = pixel_pos_embedding<S>(rh / 2, rw / 2, pe_ch);
            last_c = c2;
        }
        pe_out = pixel_pos_embedding<S>(rh, rw, pe_ch);
        final_w = ps.add(name + ".final.w", {out_channels, last_c + pe_ch},
                         nn::ParamStore<S>::Init::zeros);
        final_b = ps.add(name + ".final.b", {out_channels}, nn::ParamStore<S>::Init::zeros);
    }

    // block [B, C/4 + P, rec/4, rec/4] (rec/2 for the shallower variant)
    // -> [B, 3*T_s, rec_h, rec_w] in [0, 1].
    Var<S> forward(const Var<S>& block) const {
        const auto& sh = block.shape();
        const int64_t expect = shallow ? rec_h / 2 : rec_h / 4;
        if (sh[2] != expect || sh[3] != (shallow ? rec_w / 2 : rec_w / 4))
            throw std::invalid_argument("visual decoder: input spatial size mismatch");
        Var<S> x = s1_rb2.forward(s1_rb1.forward(block));
        x = s1_up.forward(x);
        if (!shallow) {
            x = ag::concat_pe(x, pe_mid);
            x = s2_rb2.forward(s2_rb1.forward(x));
            x = s2_up.forward(x);
        }
        return ag::sigmoid(ag::linear_pixels_pe(x, pe_out, final_w, final_b));
    }
};

// Low-dimensional state decoder: three-layer MLP with hidden widths in the
// 4:2:1 ratio of the flattened low-dim size.
template <class S>
struct LowdimDecoder {
    nn::Linear<S> l1, l2, l3;

    LowdimDecoder() = default;
    LowdimDecoder(nn::ParamStore<S>& ps, const std::string& name, int64_t in_dim, int64_t out_dim)
        : l1(ps, name + ".l1", in_dim, 4 * out_dim),
          l2(ps, name + ".l2", 4 * out_dim, 2 * out_dim),
          l3(ps, name + ".l3", 2 * out_dim, out_dim) {}

    Var<S> forward(const Var<S>& x) const {
        return l3.forward(ag::silu(l2.forward(ag::silu(l1.forward(x)))));
    }
};

}  // namespace crossway
