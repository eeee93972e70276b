#pragma once

#include <filesystem>

#include "crossway/data.hpp"
#include "crossway/model.hpp"

namespace crossway {

// Per-sample diffusion steps for a batched q_sample.
template <class S>
Tensor<S> q_sample_batch(const Tensor<S>& x0, const std::vector<int>& ks, const Tensor<S>& eps,
                         const Schedule& sched) {
    if (!x0.same_shape(eps)) throw std::invalid_argument("q_sample_batch: shape mismatch");
    if (static_cast<int64_t>(ks.size()) != x0.shape[0])
        throw std::invalid_argument("q_sample_batch: one step per sample required");
    const int64_t B = x0.shape[0];
    const int64_t inner = x0.numel() / B;
    Tensor<S> out = x0;
    for (int64_t b = 0; b < B; ++b) {
        sched.check_step(ks[static_cast<size_t>(b)]);
        const double abar = sched.alpha_bars[static_cast<size_t>(ks[static_cast<size_t>(b)])];
        const double a = std::sqrt(abar), c = std::sqrt(1.0 - abar);
        for (int64_t i = b * inner; i < (b + 1) * inner; ++i)
            out[i] = static_cast<S>(a * static_cast<double>(x0[i]) + c * static_cast<double>(eps[i]));
    }
    return out;
}

template <class S>
struct TrainBatch {
    Tensor<S> images;   // [B, T_s, n_cam, 3, crop_h, crop_w]
    Tensor<S> lowdim;   // [B, T_s, L]
    Tensor<S> actions;  // [B, T_a, A], normalized
    std::vector<Tensor<S>> target_images;  // per camera [B, 3*T_s, rec_h, rec_w]
    Tensor<S> target_lowdim;               // [B, T_s * L]
    Tensor<S> images2;  // second augmented view (curl only)
    int64_t size() const { return actions.empty() ? 0 : actions.shape[0]; }
};

// Samples (episode, t) windows into model-ready tensors. Augmentation draws
// one crop offset per (sample, camera) from aug_rng, in pick order; a second
// view doubles that only when requested.
template <class S>
TrainBatch<S> assemble_batch(const DemoDataset& ds, const ModelConfig& cfg,
                             const std::vector<std::pair<int, int64_t>>& picks, Rng& aug_rng,
                             bool second_view) {
    const int64_t B = static_cast<int64_t>(picks.size());
    TrainBatch<S> batch;
    batch.images = Tensor<S>({B, cfg.t_obs, cfg.n_cameras, 3, cfg.crop_h, cfg.crop_w});
    if (second_view)
        batch.images2 = Tensor<S>({B, cfg.t_obs, cfg.n_cameras, 3, cfg.crop_h, cfg.crop_w});
    batch.lowdim = Tensor<S>({B, cfg.t_obs, cfg.lowdim});
    batch.actions = Tensor<S>({B, cfg.t_act, cfg.action_dim});
    for (int cam = 0; cam < cfg.n_cameras; ++cam)
        batch.target_images.push_back(Tensor<S>({B, int64_t(3) * cfg.t_obs, cfg.rec_h, cfg.rec_w}));
    batch.target_lowdim = Tensor<S>({B, int64_t(cfg.t_obs) * cfg.lowdim});

    const int64_t hw = int64_t(cfg.crop_h) * cfg.crop_w;
    auto put_view = [&](Tensor<S>& dst, const Tensor<float>& cropped, int64_t b, int cam) {
        // cropped [T_s, ch, cw, 3] HWC -> dst slot [T_s][cam][3][ch][cw]
        for (int t = 0; t < cfg.t_obs; ++t)
            for (int c = 0; c < 3; ++c) {
                S* out = dst.ptr() + ((((b * cfg.t_obs + t) * cfg.n_cameras + cam) * 3 + c)) * hw;
                const float* src = cropped.ptr() + t * hw * 3 + c;
                for (int64_t i = 0; i < hw; ++i) out[i] = static_cast<S>(src[i * 3]);
            }
    };

    for (int64_t b = 0; b < B; ++b) {
        const Episode& ep = ds.episodes[static_cast<size_t>(picks[static_cast<size_t>(b)].first)];
        auto [sw, aw] = window(ep, picks[static_cast<size_t>(b)].second, cfg.t_obs, cfg.t_act);
        for (int cam = 0; cam < cfg.n_cameras; ++cam) {
            Tensor<float> crop1 =
                random_crop(sw.images[static_cast<size_t>(cam)], cfg.crop_h, cfg.crop_w, aug_rng);
            put_view(batch.images, crop1, b, cam);
            if (second_view) {
                Tensor<float> crop2 = random_crop(sw.images[static_cast<size_t>(cam)], cfg.crop_h,
                                                  cfg.crop_w, aug_rng);
                put_view(batch.images2, crop2, b, cam);
            }
        }
        for (int64_t i = 0; i < sw.lowdim.numel(); ++i)
            batch.lowdim[b * sw.lowdim.numel() + i] = static_cast<S>(sw.lowdim[i]);
        Tensor<float> na = normalize_actions(aw.actions, ds.norm);
        for (int64_t i = 0; i < na.numel(); ++i)
            batch.actions[b * na.numel() + i] = static_cast<S>(na[i]);
        ReconTarget tgt = build_target(ep, sw, cfg.n_ahead, cfg.rec_h, cfg.rec_w);
        for (int cam = 0; cam < cfg.n_cameras; ++cam) {
            const auto& ti = tgt.images[static_cast<size_t>(cam)];
            for (int64_t i = 0; i < ti.numel(); ++i)
                batch.target_images[static_cast<size_t>(cam)][b * ti.numel() + i] =
                    static_cast<S>(ti[i]);
        }
        for (int64_t i = 0; i < tgt.lowdim.numel(); ++i)
            batch.target_lowdim[b * tgt.lowdim.numel() + i] = static_cast<S>(tgt.lowdim[i]);
    }
    return batch;
}

template <class S>
struct DdpmLossOut {
    Var<S> loss;
    Intersection<S> intersection;
    Var<S> cond;
    std::vector<int> ks;
    Tensor<S> noisy_actions;  // A^k fed to the encoder (curl reuses it)
};

// Eq.-5 style noise-prediction MSE: sample k and eps, corrupt the clean
// actions, predict the noise, take the mean squared error.
template <class S>
DdpmLossOut<S> loss_ddpm(const PolicyModel<S>& model, const TrainBatch<S>& batch,
                         const Schedule& sched, Rng& rng) {
    const int64_t B = batch.size();
    std::vector<int> ks(static_cast<size_t>(B));
    for (auto& k : ks) k = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(sched.K)));
    Tensor<S> eps = rng.normal_tensor<S>(batch.actions.shape);
    Tensor<S> a_k = q_sample_batch(batch.actions, ks, eps, sched);

    DdpmLossOut<S> out;
    out.ks = ks;
    out.noisy_actions = a_k;
    out.cond = model.condition(batch.images, batch.lowdim);
    out.intersection = model.encode_actions(a_k, out.cond, ks);
    Var<S> eps_pred = model.decode_actions(out.intersection, out.cond);
    out.loss = ag::mse_to_const(eps_pred, eps);
    return out;
}

// Sum of mean-reduced per-source MSEs; the visual-only variant never owns a
// low-dim decoder, so the term is simply absent.
template <class S>
Var<S> loss_recon(const PolicyModel<S>& model, const ReconOutput<S>& recon,
                  const TrainBatch<S>& batch) {
    Var<S> total;
    for (size_t cam = 0; cam < recon.images.size(); ++cam) {
        Var<S> term = ag::mse_to_const(recon.images[cam], batch.target_images[cam]);
        total = total.defined() ? ag::add(total, term) : term;
    }
    if (recon.lowdim.defined()) {
        Var<S> term = ag::mse_to_const(recon.lowdim, batch.target_lowdim);
        total = total.defined() ? ag::add(total, term) : term;
    }
    (void)model;
    return total;
}

inline double loss_crossway(double l_ddpm, double l_recon, double alpha) {
    return l_ddpm + alpha * l_recon;
}

template <class S>
Var<S> loss_crossway_var(const Var<S>& l_ddpm, const Var<S>& l_recon, double alpha) {
    return ag::add(l_ddpm, ag::scale(l_recon, alpha));
}

// InfoNCE over the batch: M = X1 W X2^T, labels on the diagonal. x2_ema is a
// plain tensor (stop-gradient by construction).
template <class S>
Var<S> loss_curl(const Var<S>& x1, const Tensor<S>& x2_ema, const Var<S>& w) {
    if (x1.shape()[0] < 2) throw std::invalid_argument("loss_curl: batch size < 2");
    Var<S> m = ag::matmul_nt(ag::matmul(x1, w), constant(x2_ema));
    return ag::cross_entropy_diag(m);
}

template <class S>
void ema_update(Tensor<S>& ema, const Tensor<S>& p, double decay) {
    if (!ema.same_shape(p)) throw std::invalid_argument("ema_update: shape mismatch");
    for (int64_t i = 0; i < ema.numel(); ++i)
        ema[i] = static_cast<S>(decay * static_cast<double>(ema[i]) +
                                (1.0 - decay) * static_cast<double>(p[i]));
}

// Adaptive moment estimation with decoupled weight decay.
template <class S>
struct AdamW {
    double lr = 1e-4, beta1 = 0.95, beta2 = 0.999, eps = 1e-8, wd = 1e-6;
    int64_t t = 0;
    std::vector<Tensor<S>> m, v;

    void init(const nn::ParamStore<S>& ps) {
        m.clear();
        v.clear();
        for (const auto& [name, p] : ps.items) {
            m.push_back(Tensor<S>::zeros(p.val().shape));
            v.push_back(Tensor<S>::zeros(p.val().shape));
        }
    }

    void step(nn::ParamStore<S>& ps) {
        if (m.size() != ps.items.size()) throw std::logic_error("AdamW not initialized");
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t i = 0; i < ps.items.size(); ++i) {
            auto& p = ps.items[i].second;
            Tensor<S>& pm = m[i];
            Tensor<S>& pv = v[i];
            const bool has_grad = !p.n->grad.data.empty();
            for (int64_t j = 0; j < p.numel(); ++j) {
                double g = has_grad ? static_cast<double>(p.n->grad[j]) : 0.0;
                double mj = beta1 * static_cast<double>(pm[j]) + (1.0 - beta1) * g;
                double vj = beta2 * static_cast<double>(pv[j]) + (1.0 - beta2) * g * g;
                pm[j] = static_cast<S>(mj);
                pv[j] = static_cast<S>(vj);
                double update = (mj / bc1) / (std::sqrt(vj / bc2) + eps);
                double pd = static_cast<double>(p.val()[j]);
                p.val()[j] = static_cast<S>(pd - lr * (update + wd * pd));
            }
        }
    }
};

}  // namespace crossway
