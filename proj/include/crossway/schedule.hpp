#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossway/tensor.hpp"

namespace crossway {

enum class ScheduleKind { squared_cosine, linear };

inline const char* to_string(ScheduleKind k) {
    return k == ScheduleKind::squared_cosine ? "squared_cosine" : "linear";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "squared_cosine") return ScheduleKind::squared_cosine;
    if (s == "linear") return ScheduleKind::linear;
    throw std::invalid_argument("unknown schedule kind: " + s);
}

// All per-step diffusion constants. Stored in double so sampling stays
// bit-reproducible when betas are round-tripped through a checkpoint.
struct Schedule {
    int K = 0;
    ScheduleKind kind = ScheduleKind::squared_cosine;
    std::vector<double> betas;       // beta_k in [0, 1)
    std::vector<double> alphas;      // 1 - beta_k
    std::vector<double> alpha_bars;  // prod_{j<=k} alpha_j
    std::vector<double> sigmas;      // sqrt of DDPM posterior variance, sigma_0 = 0

    void check_step(int k) const {
        if (k < 0 || k >= K) throw std::invalid_argument("diffusion step out of range");
    }
};

// Derives alphas/alpha_bars/sigmas from a beta vector.
Schedule schedule_from_betas(std::vector<double> betas, ScheduleKind kind);

// kind=squared_cosine ignores the beta range. kind=linear spaces betas from
// beta_start to beta_end; K=1 degenerates to [beta_start].
Schedule make_schedule(int K, ScheduleKind kind = ScheduleKind::squared_cosine,
                       double beta_start = 1e-4, double beta_end = 0.02);

// Closed-form forward corruption: sqrt(abar_k) x0 + sqrt(1 - abar_k) eps.
template <class S>
Tensor<S> q_sample(const Tensor<S>& x0, int k, const Tensor<S>& eps, const Schedule& sched) {
    sched.check_step(k);
    if (!x0.same_shape(eps)) throw std::invalid_argument("q_sample: shape mismatch");
    const double a = std::sqrt(sched.alpha_bars[static_cast<size_t>(k)]);
    const double b = std::sqrt(1.0 - sched.alpha_bars[static_cast<size_t>(k)]);
    Tensor<S> out = x0;
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<S>(a * static_cast<double>(x0[i]) + b * static_cast<double>(eps[i]));
    return out;
}

// One reverse DDPM step:
//   (xk - (1-alpha_k)/sqrt(1-abar_k) * eps_pred) / sqrt(alpha_k) + sigma_k z.
// The eps coefficient is taken as 0 for a beta_k = 0 step (0/0 in the formula,
// but the step is the identity there).
template <class S>
Tensor<S> ddpm_step(const Tensor<S>& xk, const Tensor<S>& eps_pred, int k, const Tensor<S>& z,
                    const Schedule& sched) {
    sched.check_step(k);
    if (!xk.same_shape(eps_pred) || !xk.same_shape(z))
        throw std::invalid_argument("ddpm_step: shape mismatch");
    const size_t ki = static_cast<size_t>(k);
    const double alpha = sched.alphas[ki];
    const double one_m_abar = 1.0 - sched.alpha_bars[ki];
    const double coef = (1.0 - alpha) == 0.0 ? 0.0 : (1.0 - alpha) / std::sqrt(one_m_abar);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    const double sigma = sched.sigmas[ki];
    Tensor<S> out = xk;
    for (int64_t i = 0; i < out.numel(); ++i) {
        double v = (static_cast<double>(xk[i]) - coef * static_cast<double>(eps_pred[i])) * inv_sqrt_alpha;
        out[i] = static_cast<S>(v + sigma * static_cast<double>(z[i]));
    }
    return out;
}

// Deterministic DDIM step (eta = 0) from k_from down to k_to.
template <class S>
Tensor<S> ddim_step(const Tensor<S>& xk, const Tensor<S>& eps_pred, int k_from, int k_to,
                    const Schedule& sched) {
    sched.check_step(k_from);
    sched.check_step(k_to);
    if (k_to >= k_from) throw std::invalid_argument("ddim_step: k_to must be < k_from");
    if (!xk.same_shape(eps_pred)) throw std::invalid_argument("ddim_step: shape mismatch");
    const double abar_from = sched.alpha_bars[static_cast<size_t>(k_from)];
    const double abar_to = sched.alpha_bars[static_cast<size_t>(k_to)];
    const double a_from = std::sqrt(abar_from);
    const double b_from = std::sqrt(1.0 - abar_from);
    const double a_to = std::sqrt(abar_to);
    const double b_to = std::sqrt(1.0 - abar_to);
    Tensor<S> out = xk;
    for (int64_t i = 0; i < out.numel(); ++i) {
        double x0 = (static_cast<double>(xk[i]) - b_from * static_cast<double>(eps_pred[i])) / a_from;
        out[i] = static_cast<S>(a_to * x0 + b_to * static_cast<double>(eps_pred[i]));
    }
    return out;
}

// The x0 estimate a DDIM step is built around; also used by the final
// denoising step (k = 0 -> clean).
template <class S>
Tensor<S> predict_x0(const Tensor<S>& xk, const Tensor<S>& eps_pred, int k, const Schedule& sched) {
    sched.check_step(k);
    if (!xk.same_shape(eps_pred)) throw std::invalid_argument("predict_x0: shape mismatch");
    const double abar = sched.alpha_bars[static_cast<size_t>(k)];
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    Tensor<S> out = xk;
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<S>((static_cast<double>(xk[i]) - b * static_cast<double>(eps_pred[i])) / a);
    return out;
}

// n step indices from K-1 down to 0, evenly spaced, always ending at 0.
std::vector<int> subsample_steps(int K, int n);

}  // namespace crossway
