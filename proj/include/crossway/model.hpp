#pragma once

#include <optional>

#include "crossway/perception.hpp"
#include "crossway/reconstruction.hpp"
#include "crossway/schedule.hpp"

namespace crossway {

enum class Variant { baseline, crossway, visual_only, curl };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::crossway: return "crossway";
        case Variant::visual_only: return "visual_only";
        case Variant::curl: return "curl";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "baseline") return Variant::baseline;
    if (s == "crossway") return Variant::crossway;
    if (s == "visual_only") return Variant::visual_only;
    if (s == "curl") return Variant::curl;
    throw std::invalid_argument("unknown variant: " + s);
}

struct ModelConfig {
    int n_cameras = 1;
    int img_h = 96, img_w = 96;
    int crop_h = 84, crop_w = 84;
    int rec_h = 96, rec_w = 96;
    int lowdim = 2;
    int action_dim = 2;
    int t_obs = 2;   // T_s
    int t_act = 8;   // T_a
    int unet_width = 64;  // U-Net stage widths (w, 2w); intersection C = 2w
    int enc_width = 16;   // encoder stage widths (w, 2w, 4w)
    int vis_emb = 64;     // per-camera embedding width
    int pe_channels = 64;
    bool shallower_decoder = false;
    Design design = Design::A;
    Variant variant = Variant::crossway;
    double alpha = 0.1;
    int n_ahead = 0;  // reconstruction target offset N

    int channels() const { return 2 * unet_width; }          // C
    int deep_len() const { return t_act / 4; }                // T
    int emb_dim() const { return channels() / 2; }            // step embedding width
    int cond_dim() const { return t_obs * (n_cameras * vis_emb + lowdim); }
    int rec_down() const { return shallower_decoder ? 2 : 4; }
    bool has_state_decoder() const {
        return variant == Variant::crossway || variant == Variant::visual_only;
    }
    bool has_lowdim_decoder() const { return variant == Variant::crossway && lowdim > 0; }

    void validate() const {
        if (t_act % 4 != 0)
            throw std::invalid_argument("T_a must be divisible by the U-Net downsample factor (4)");
        if (channels() % 4 != 0) throw std::invalid_argument("intersection channels must be divisible by 4");
        if (crop_h > img_h || crop_w > img_w) throw std::invalid_argument("CropRes must be <= ImgRes");
        if (rec_h % rec_down() != 0 || rec_w % rec_down() != 0)
            throw std::invalid_argument("RecRes must be divisible by the decoder upsample factor");
        if (vis_emb % 2 != 0) throw std::invalid_argument("visual embedding width must be even");
        if (emb_dim() % 2 != 0) throw std::invalid_argument("step embedding width must be even");
        if (t_obs < 1 || t_act < 1 || n_cameras < 1) throw std::invalid_argument("bad horizon config");
    }
};

template <class S>
struct ReconOutput {
    std::vector<Var<S>> images;  // per camera, [B, 3*T_s, rec_h, rec_w]
    Var<S> lowdim;               // [B, T_s * L]; undefined when not decoded
};

// The full parameter bundle: E_S, E_A, D_A and, when the variant trains a
// reconstruction objective, the per-source state decoders D_S. The EMA shadow
// copy lives outside this struct (plain tensors owned by the trainer).
template <class S>
struct PolicyModel {
    ModelConfig cfg;
    nn::ParamStore<S> params;

    std::vector<VisualEncoder<S>> encoders;  // one per camera
    nn::Linear<S> emb_mlp;
    ActionEncoder<S> action_enc;
    ActionDecoder<S> action_dec;

    std::vector<VisualStateDecoder<S>> state_decoders;  // one per camera
    LowdimDecoder<S> lowdim_dec;
    nn::Linear<S> design_proj;  // B: C/2 -> C/4, C: C -> C/4, D: D_h -> C/4
    Var<S> curl_w;              // [C, C], curl variant only

    Tensor<S> pe_block;  // PE appended to the transformed intersection
    mutable int64_t ds_invocations = 0;

    PolicyModel(ModelConfig c, uint64_t init_seed) : cfg(c) {
        cfg.validate();
        params.seed = init_seed;
        for (int cam = 0; cam < cfg.n_cameras; ++cam)
            encoders.emplace_back(params, "e_s.cam" + std::to_string(cam), cfg.enc_width,
                                  cfg.vis_emb, cfg.crop_h, cfg.crop_w);
        emb_mlp = nn::Linear<S>(params, "emb_mlp", cfg.emb_dim(), cfg.emb_dim());
        action_enc = ActionEncoder<S>(params, "e_a", cfg.action_dim, cfg.unet_width, cfg.cond_dim(),
                                      cfg.emb_dim());
        action_dec = ActionDecoder<S>(params, "d_a", cfg.action_dim, cfg.unet_width, cfg.cond_dim(),
                                      cfg.emb_dim());
        if (cfg.has_state_decoder()) {
            const int64_t c4 = cfg.channels() / 4;
            for (int cam = 0; cam < cfg.n_cameras; ++cam)
                state_decoders.emplace_back(params, "d_s.cam" + std::to_string(cam), c4,
                                            cfg.pe_channels, cfg.t_obs, cfg.rec_h, cfg.rec_w,
                                            cfg.shallower_decoder);
            if (cfg.has_lowdim_decoder()) {
                int64_t in = cfg.design == Design::D ? c4 : cfg.channels();
                lowdim_dec = LowdimDecoder<S>(params, "d_s.lowdim", in,
                                              int64_t(cfg.t_obs) * cfg.lowdim);
            }
            if (cfg.design == Design::B)
                design_proj = nn::Linear<S>(params, "d_s.proj", cfg.channels() / 2, c4);
            else if (cfg.design == Design::C)
                design_proj = nn::Linear<S>(params, "d_s.proj", cfg.channels(), c4);
            else if (cfg.design == Design::D)
                design_proj = nn::Linear<S>(params, "d_s.proj", cfg.cond_dim(), c4);
            pe_block = pixel_pos_embedding<S>(cfg.rec_h / cfg.rec_down(), cfg.rec_w / cfg.rec_down(),
                                              cfg.pe_channels);
        }
        if (cfg.variant == Variant::curl)
            curl_w = params.add("curl.w", {cfg.channels(), cfg.channels()},
                                nn::ParamStore<S>::Init::fan_in_uniform, cfg.channels());
    }

    ConditionLayout layout() const {
        return ConditionLayout{cfg.t_obs, cfg.n_cameras, cfg.vis_emb, cfg.lowdim};
    }

    // images [B, T_s, n_cam, 3, crop_h, crop_w], lowdim [B, T_s, L].
    Var<S> condition(const Tensor<S>& images, const Tensor<S>& lowdim) const {
        const auto& sh = images.shape;
        if (sh.size() != 6 || sh[1] != cfg.t_obs || sh[2] != cfg.n_cameras || sh[3] != 3 ||
            sh[4] != cfg.crop_h || sh[5] != cfg.crop_w)
            throw std::invalid_argument("condition: image tensor shape mismatch " +
                                        images.shape_str());
        const int64_t B = sh[0], Ts = cfg.t_obs, NC = cfg.n_cameras;
        const int64_t frame = int64_t(3) * cfg.crop_h * cfg.crop_w;
        std::vector<Var<S>> h_img(static_cast<size_t>(Ts * NC));
        for (int64_t cam = 0; cam < NC; ++cam) {
            Tensor<S> frames({B * Ts, 3, cfg.crop_h, cfg.crop_w});
            for (int64_t b = 0; b < B; ++b)
                for (int64_t t = 0; t < Ts; ++t)
                    std::copy(images.ptr() + ((b * Ts + t) * NC + cam) * frame,
                              images.ptr() + ((b * Ts + t) * NC + cam + 1) * frame,
                              frames.ptr() + (b * Ts + t) * frame);
            Var<S> emb = encoders[static_cast<size_t>(cam)].forward(constant(std::move(frames)));
            Var<S> r = ag::reshape(emb, {B, Ts, int64_t(cfg.vis_emb)});
            for (int64_t t = 0; t < Ts; ++t)
                h_img[static_cast<size_t>(t * NC + cam)] =
                    ag::reshape(ag::slice_dim1(r, t, t + 1), {B, int64_t(cfg.vis_emb)});
        }
        if (lowdim.shape != std::vector<int64_t>{B, Ts, int64_t(cfg.lowdim)})
            throw std::invalid_argument("condition: lowdim tensor shape mismatch");
        return assemble_condition<S>(h_img, constant(lowdim), layout());
    }

    Var<S> processed_emb(const std::vector<int>& ks) const {
        Tensor<S> raw = embed_steps<S>(ks, cfg.emb_dim());
        return ag::silu(emb_mlp.forward(constant(std::move(raw))));
    }

    // actions [B, T_a, A] (noisy), per-sample diffusion steps ks.
    Intersection<S> encode_actions(const Tensor<S>& actions, const Var<S>& cond,
                                   const std::vector<int>& ks) const {
        const auto& sh = actions.shape;
        if (sh.size() != 3 || sh[1] != cfg.t_act || sh[2] != cfg.action_dim)
            throw std::invalid_argument("encode_actions: action tensor shape mismatch");
        if (static_cast<int64_t>(ks.size()) != sh[0])
            throw std::invalid_argument("encode_actions: one diffusion step per sample required");
        Var<S> a = ag::transpose_12(constant(actions));  // [B, A, T_a]
        return action_enc.forward(a, cond, processed_emb(ks));
    }

    // -> eps prediction [B, T_a, A].
    Var<S> decode_actions(const Intersection<S>& x, const Var<S>& cond) const {
        return ag::transpose_12(action_dec.forward(x, cond));
    }

    Var<S> predict_eps(const Tensor<S>& actions, const Var<S>& cond,
                       const std::vector<int>& ks) const {
        return decode_actions(encode_actions(actions, cond, ks), cond);
    }

    // State reconstruction through the intersection transformation.
    ReconOutput<S> reconstruct(const Intersection<S>& x, const Var<S>& cond) const {
        if (!cfg.has_state_decoder())
            throw std::invalid_argument("reconstruct: model has no state decoder");
        ++ds_invocations;
        ReconOutput<S> out;
        Var<S> block = transform_intersection<S>(x, cond, cfg.design, cfg.rec_h, cfg.rec_w,
                                                 cfg.design == Design::A ? nullptr : &design_proj,
                                                 pe_block, cfg.rec_down());
        for (const auto& dec : state_decoders) out.images.push_back(dec.forward(block));
        if (cfg.has_lowdim_decoder()) {
            Var<S> in = cfg.design == Design::D ? design_proj.forward(cond)
                                                : ag::slice_time(x.deep, 0);
            out.lowdim = lowdim_dec.forward(in);
        }
        return out;
    }
};

enum class SamplerKind { ddpm, ddim };

// Iterative denoising from a standard-Gaussian start, conditioned on h.
// Returns a clean [B, T_a, A] action tensor clipped to [-1, 1].
template <class S>
Tensor<S> denoise_sequence(const PolicyModel<S>& model, const Var<S>& cond, int64_t batch,
                           const Schedule& sched, const std::vector<int>& steps, Rng& rng,
                           SamplerKind sampler) {
    if (steps.empty()) throw std::invalid_argument("denoise_sequence: empty step list");
    NoGradGuard ng;
    Tensor<S> x = rng.normal_tensor<S>({batch, int64_t(model.cfg.t_act), int64_t(model.cfg.action_dim)});
    auto eps_at = [&](const Tensor<S>& xt, int k) {
        std::vector<int> ks(static_cast<size_t>(batch), k);
        return model.predict_eps(xt, cond, ks).val();
    };
    if (sampler == SamplerKind::ddpm) {
        for (int k : steps) {
            Tensor<S> eps = eps_at(x, k);
            Tensor<S> z(x.shape);
            if (k > 0)
                for (auto& v : z.data) v = static_cast<S>(rng.normal());
            x = ddpm_step(x, eps, k, z, sched);
        }
    } else {
        for (size_t i = 0; i + 1 < steps.size(); ++i) {
            Tensor<S> eps = eps_at(x, steps[i]);
            x = ddim_step(x, eps, steps[i], steps[i + 1], sched);
        }
        Tensor<S> eps = eps_at(x, steps.back());
        x = predict_x0(x, eps, steps.back(), sched);
    }
    for (auto& v : x.data) v = std::clamp(v, S(-1), S(1));
    return x;
}

}  // namespace crossway
