#pragma once

#include <filesystem>

#include "crossway/toyenv.hpp"
#include "crossway/util.hpp"

namespace crossway {

struct Episode {
    std::vector<Tensor<float>> images;  // per camera, [len, H, W, 3] in [0,1]
    Tensor<float> lowdim;               // [len, L], task units
    Tensor<float> actions;              // [len, A], task units
    int64_t len = 0;
};

struct NormStats {
    std::vector<double> min, max;  // per action dimension, max > min

    void validate() const {
        if (min.size() != max.size() || min.empty())
            throw std::invalid_argument("norm stats: empty or mismatched");
        for (size_t i = 0; i < min.size(); ++i)
            if (!(max[i] > min[i])) throw std::invalid_argument("norm stats: max must exceed min");
    }
};

// a' = 2 (a - min) / (max - min) - 1, per dimension (last axis).
template <class S>
Tensor<S> normalize_actions(const Tensor<S>& a, const NormStats& st) {
    st.validate();
    const int64_t A = a.shape.back();
    if (A != static_cast<int64_t>(st.min.size()))
        throw std::invalid_argument("normalize: dimension mismatch");
    Tensor<S> out = a;
    for (int64_t i = 0; i < a.numel(); ++i) {
        int64_t d = i % A;
        out[i] = static_cast<S>(2.0 * (static_cast<double>(a[i]) - st.min[d]) /
                                    (st.max[d] - st.min[d]) -
                                1.0);
    }
    return out;
}

template <class S>
Tensor<S> denormalize_actions(const Tensor<S>& a, const NormStats& st) {
    st.validate();
    const int64_t A = a.shape.back();
    if (A != static_cast<int64_t>(st.min.size()))
        throw std::invalid_argument("denormalize: dimension mismatch");
    Tensor<S> out = a;
    for (int64_t i = 0; i < a.numel(); ++i) {
        int64_t d = i % A;
        out[i] = static_cast<S>((static_cast<double>(a[i]) + 1.0) / 2.0 * (st.max[d] - st.min[d]) +
                                st.min[d]);
    }
    return out;
}

struct StateWindow {
    std::vector<Tensor<float>> images;  // per camera, [T_s, H, W, 3]
    Tensor<float> lowdim;               // [T_s, L]
    int64_t t = 0;                      // environment timestep of the last element
    std::vector<int64_t> indices;       // source episode indices after edge clamping
};

struct ActionWindow {
    Tensor<float> actions;  // [T_a, A], task units
    int64_t t0 = 0;
};

// States s_{t-T_s+1..t} with replicate padding at the episode start; actions
// a_{t..t+T_a-1} with last-action replication past the end.
std::pair<StateWindow, ActionWindow> window(const Episode& ep, int64_t t, int t_obs, int t_act);

// Crops share one offset across the T_s frames of a camera within a sample.
Tensor<float> random_crop(const Tensor<float>& frames, int crop_h, int crop_w, Rng& rng);
Tensor<float> center_crop(const Tensor<float>& frames, int crop_h, int crop_w);

// [H, W, 3] -> [out_h, out_w, 3]; exact copy when the sizes already match.
Tensor<float> resize_bilinear(const Tensor<float>& img, int out_h, int out_w);

struct ReconTarget {
    std::vector<Tensor<float>> images;  // per camera, [3*T_s, rec_h, rec_w] (CHW, frames stacked)
    Tensor<float> lowdim;               // [T_s * L]
    int n_ahead = 0;
};

// Reconstruction target N steps ahead of the window states, clamped to the
// episode end, resized to RecRes.
ReconTarget build_target(const Episode& ep, const StateWindow& sw, int n_ahead, int rec_h,
                         int rec_w);

struct DemoDataset {
    std::vector<Episode> episodes;
    NormStats norm;
    int img_h = 96, img_w = 96;
    int n_cameras = 1;
    int lowdim_dim = 2;
    int action_dim = 2;
    uint64_t seed = 0;

    int64_t total_steps() const {
        int64_t n = 0;
        for (const auto& e : episodes) n += e.len;
        return n;
    }
};

// Rolls the scripted expert until n successful episodes are collected.
DemoDataset generate_demos(const ToyTask& task, int n, uint64_t seed);

// On-disk layout: manifest.json plus per-episode raw float32 blobs with
// CRC-32 checksums; round-trips bit-exactly.
void save_dataset(const DemoDataset& ds, const std::filesystem::path& dir);
DemoDataset load_dataset(const std::filesystem::path& dir);

}  // namespace crossway
