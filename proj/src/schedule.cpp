#include "crossway/schedule.hpp"

#include <algorithm>

namespace crossway {

Schedule schedule_from_betas(std::vector<double> betas, ScheduleKind kind) {
    Schedule s;
    s.K = static_cast<int>(betas.size());
    s.kind = kind;
    s.betas = std::move(betas);
    s.alphas.resize(s.betas.size());
    s.alpha_bars.resize(s.betas.size());
    s.sigmas.resize(s.betas.size());
    double abar = 1.0;
    double abar_prev = 1.0;
    for (size_t k = 0; k < s.betas.size(); ++k) {
        double beta = s.betas[k];
        if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("beta out of [0,1)");
        s.alphas[k] = 1.0 - beta;
        abar_prev = abar;
        abar *= s.alphas[k];
        s.alpha_bars[k] = abar;
        // DDPM posterior variance beta~_k = (1 - abar_{k-1}) / (1 - abar_k) * beta_k,
        // with abar_{-1} = 1, which makes sigma_0 = 0 exactly.
        double denom = 1.0 - abar;
        double post = denom == 0.0 ? 0.0 : (1.0 - abar_prev) / denom * beta;
        s.sigmas[k] = std::sqrt(post);
    }
    return s;
}

Schedule make_schedule(int K, ScheduleKind kind, double beta_start, double beta_end) {
    if (K < 1) throw std::invalid_argument("make_schedule: K must be >= 1");
    std::vector<double> betas(static_cast<size_t>(K));
    if (kind == ScheduleKind::squared_cosine) {
        // Squared-cosine alpha_bar profile, betas capped at 0.999.
        auto abar_fn = [](double t) {
            double c = std::cos((t + 0.008) / 1.008 * 3.14159265358979323846 / 2.0);
            return c * c;
        };
        for (int k = 0; k < K; ++k) {
            double t1 = static_cast<double>(k) / K;
            double t2 = static_cast<double>(k + 1) / K;
            betas[static_cast<size_t>(k)] = std::min(1.0 - abar_fn(t2) / abar_fn(t1), 0.999);
        }
    } else {
        if (K == 1) {
            betas[0] = beta_start;
        } else {
            for (int k = 0; k < K; ++k)
                betas[static_cast<size_t>(k)] =
                    beta_start + (beta_end - beta_start) * static_cast<double>(k) / (K - 1);
        }
    }
    return schedule_from_betas(std::move(betas), kind);
}

std::vector<int> subsample_steps(int K, int n) {
    if (n < 1 || n > K) throw std::invalid_argument("subsample_steps: need 1 <= n <= K");
    std::vector<int> steps(static_cast<size_t>(n));
    if (n == 1) {
        steps[0] = 0;
        return steps;
    }
    // Integer spacing keeps the list strictly decreasing for any n <= K.
    for (int i = 0; i < n; ++i)
        steps[static_cast<size_t>(i)] =
            static_cast<int>((static_cast<int64_t>(K - 1) * (n - 1 - i)) / (n - 1));
    return steps;
}

}  // namespace crossway
