#pragma once

#include "crossway/nn.hpp"

namespace crossway {

// Where each piece of the flat observation condition h_t lives. Order is
// timestep-major: per timestep the camera embeddings, then the low-dim slice.
struct ConditionLayout {
    int t_obs = 0;
    int n_cameras = 0;
    int emb_width = 0;
    int lowdim = 0;

    int64_t stride() const { return int64_t(n_cameras) * emb_width + lowdim; }
    int64_t dim() const { return int64_t(t_obs) * stride(); }
    int64_t image_offset(int t, int cam) const { return t * stride() + int64_t(cam) * emb_width; }
    int64_t lowdim_offset(int t) const { return t * stride() + int64_t(n_cameras) * emb_width; }
};

// Per-camera visual encoder: a compact residual CNN ending in soft-argmax
// keypoints, one embedding per frame.
template <class S>
struct VisualEncoder {
    nn::Conv2d<S> stem;        // 3 -> w, stride 2
    nn::ResBlock2d<S> rb1;     // w
    nn::Conv2d<S> down1;       // w -> 2w, stride 2
    nn::ResBlock2d<S> rb2;     // 2w
    nn::Conv2d<S> down2;       // 2w -> 4w, stride 2
    nn::ResBlock2d<S> rb3;     // 4w
    nn::Conv2d<S> head;        // 4w -> emb/2 keypoint maps
    int emb_width = 0;
    int in_h = 0, in_w = 0;

    VisualEncoder() = default;
    VisualEncoder(nn::ParamStore<S>& ps, const std::string& name, int width, int emb, int h, int w)
        : stem(ps, name + ".stem", 3, width, 3, 2, 1),
          rb1(ps, name + ".rb1", width, width),
          down1(ps, name + ".down1", width, 2 * width, 3, 2, 1),
          rb2(ps, name + ".rb2", 2 * width, 2 * width),
          down2(ps, name + ".down2", 2 * width, 4 * width, 3, 2, 1),
          rb3(ps, name + ".rb3", 4 * width, 4 * width),
          head(ps, name + ".head", 4 * width, emb / 2, 1, 1, 0),
          emb_width(emb),
          in_h(h),
          in_w(w) {
        if (emb % 2 != 0) throw std::invalid_argument("visual embedding width must be even");
    }

    // frames [N, 3, H, W] -> [N, emb]
    Var<S> forward(const Var<S>& frames) const {
        const auto& sh = frames.shape();
        if (sh.size() != 4 || sh[1] != 3 || sh[2] != in_h || sh[3] != in_w)
            throw std::invalid_argument("visual encoder: frame resolution does not match config");
        Var<S> x = stem.forward(frames);
        x = rb1.forward(x);
        x = down1.forward(x);
        x = rb2.forward(x);
        x = down2.forward(x);
        x = rb3.forward(x);
        x = head.forward(x);
        return ag::spatial_softmax(x);
    }
};

// Concatenates per-(timestep, camera) embeddings with the low-dim states.
// h_img entries are indexed [t * n_cameras + cam], each [B, emb].
template <class S>
Var<S> assemble_condition(const std::vector<Var<S>>& h_img, const Var<S>& lowdim,
                          const ConditionLayout& lay) {
    if (static_cast<int>(h_img.size()) != lay.t_obs * lay.n_cameras)
        throw std::invalid_argument("assemble_condition: embedding count mismatch");
    std::vector<Var<S>> parts;
    for (int t = 0; t < lay.t_obs; ++t) {
        for (int cam = 0; cam < lay.n_cameras; ++cam)
            parts.push_back(h_img[static_cast<size_t>(t * lay.n_cameras + cam)]);
        if (lay.lowdim > 0) {
            // lowdim is [B, T_s, L]; take the slice for this timestep.
            Var<S> sl = ag::slice_dim1(lowdim, t, t + 1);
            parts.push_back(ag::reshape(sl, {lowdim.shape()[0], int64_t(lay.lowdim)}));
        }
    }
    return ag::concat_dim1(parts);
}

}  // namespace crossway
