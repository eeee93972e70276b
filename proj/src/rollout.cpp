#include "crossway/rollout.hpp"

#include <cstdio>
#include <deque>

#include "crossway/png.hpp"

namespace crossway {

namespace {

// History of the last T_s observations, replicate-padded at episode start.
struct ObsHistory {
    std::deque<Tensor<float>> frames;  // [H, W, 3]
    std::deque<std::array<float, 2>> lowdim;
    size_t cap;

    explicit ObsHistory(size_t t_obs) : cap(t_obs) {}

    void push(const ToyTask& task, const ToyEnvState& s) {
        Tensor<float> img = render(task, s);
        std::array<float, 2> ld{static_cast<float>(s.agent.x), static_cast<float>(s.agent.y)};
        if (frames.empty()) {
            for (size_t i = 0; i < cap; ++i) {
                frames.push_back(img);
                lowdim.push_back(ld);
            }
            return;
        }
        frames.push_back(std::move(img));
        lowdim.push_back(ld);
        while (frames.size() > cap) {
            frames.pop_front();
            lowdim.pop_front();
        }
    }
};

}  // namespace

double run_episode_with_planner(const ToyTask& task, int t_obs, int t_act, const Planner& plan_fn,
                                uint64_t env_seed, std::vector<ToyEnvState>* rec_states,
                                std::vector<Tensor<float>>* rec_plans) {
    Rng init_rng = stream_rng(env_seed, "env-init");
    ToyEnvState s = sample_init(task, init_rng);
    ObsHistory hist(static_cast<size_t>(t_obs));
    hist.push(task, s);
    if (rec_states) rec_states->push_back(s);

    const int64_t H = task.image_size, W = task.image_size;
    int steps_done = 0;
    while (steps_done < task.max_steps) {
        Tensor<float> images({t_obs, H, W, 3});
        Tensor<float> lowdim({t_obs, 2});
        for (int t = 0; t < t_obs; ++t) {
            std::copy(hist.frames[static_cast<size_t>(t)].data.begin(),
                      hist.frames[static_cast<size_t>(t)].data.end(),
                      images.ptr() + t * H * W * 3);
            lowdim[t * 2] = hist.lowdim[static_cast<size_t>(t)][0];
            lowdim[t * 2 + 1] = hist.lowdim[static_cast<size_t>(t)][1];
        }
        Tensor<float> acts = plan_fn(images, lowdim, s);  // [T_a, A] task units
        if (rec_plans) rec_plans->push_back(acts);
        for (int i = 0; i < t_act && steps_done < task.max_steps; ++i) {
            std::array<double, 2> a{static_cast<double>(acts[i * 2]),
                                    static_cast<double>(acts[i * 2 + 1])};
            s = toy_step(task, s, a);
            ++steps_done;
            hist.push(task, s);
            if (rec_states) rec_states->push_back(s);
            // Coarse grid for the per-step termination check; the returned
            // score is always the full-resolution metric.
            if (coverage_grid(task, s.block, 160) >= task.success_coverage)
                return coverage(task, s);
        }
    }
    return coverage(task, s);
}

double run_episode(const PolicyModel<float>& model, const NormStats& norm, const ToyTask& task,
                   const Schedule& sched, const std::vector<int>& steps, SamplerKind sampler,
                   uint64_t env_seed, Rng& policy_rng, std::vector<ToyEnvState>* rec_states,
                   std::vector<Tensor<float>>* rec_plans) {
    const ModelConfig& cfg = model.cfg;
    Tensor<float> in_images({1, cfg.t_obs, cfg.n_cameras, 3, cfg.crop_h, cfg.crop_w});
    Tensor<float> in_lowdim({1, cfg.t_obs, cfg.lowdim});
    Planner planner = [&](const Tensor<float>& images, const Tensor<float>& lowdim,
                          const ToyEnvState&) {
        Tensor<float> cropped = center_crop(images, cfg.crop_h, cfg.crop_w);
        const int64_t hw = int64_t(cfg.crop_h) * cfg.crop_w;
        for (int t = 0; t < cfg.t_obs; ++t)
            for (int c = 0; c < 3; ++c) {
                float* dst = in_images.ptr() + (int64_t(t) * 3 + c) * hw;
                const float* src = cropped.ptr() + int64_t(t) * hw * 3 + c;
                for (int64_t i = 0; i < hw; ++i) dst[i] = src[i * 3];
            }
        std::copy(lowdim.data.begin(), lowdim.data.end(), in_lowdim.ptr());
        Tensor<float> plan;
        {
            NoGradGuard ng;
            Var<float> cond = model.condition(in_images, in_lowdim);
            plan = denoise_sequence(model, cond, 1, sched, steps, policy_rng, sampler);
        }
        Tensor<float> acts = denormalize_actions(plan, norm);
        return acts.reshaped({int64_t(cfg.t_act), cfg.action_dim});
    };
    return run_episode_with_planner(task, cfg.t_obs, cfg.t_act, planner, env_seed, rec_states,
                                    rec_plans);
}

EvalReport evaluate(const PolicyModel<float>& model, const NormStats& norm, const ToyTask& task,
                    const Schedule& sched, int n_episodes, const std::vector<uint64_t>& seeds,
                    int n_denoise_steps, SamplerKind sampler) {
    EvalReport rep;
    rep.seeds = seeds;
    rep.episodes_per_seed = n_episodes;
    rep.ddim_steps = n_denoise_steps;
    rep.sampler = sampler;
    std::vector<int> steps = subsample_steps(sched.K, n_denoise_steps);
    for (uint64_t seed : seeds) {
        double seed_sum = 0;
        for (int ep = 0; ep < n_episodes; ++ep) {
            // Environment seed depends only on (seed, episode): methods share inits.
            uint64_t env_seed = stream_seed(seed, "env", static_cast<uint64_t>(ep));
            Rng policy_rng = stream_rng(seed, "policy", static_cast<uint64_t>(ep));
            double score =
                run_episode(model, norm, task, sched, steps, sampler, env_seed, policy_rng);
            rep.scores.push_back(score);
            seed_sum += score;
        }
        rep.seed_means.push_back(n_episodes > 0 ? seed_sum / n_episodes : 0.0);
    }
    double total = 0;
    for (double v : rep.scores) total += v;
    rep.mean = rep.scores.empty() ? 0.0 : total / static_cast<double>(rep.scores.size());
    if (rep.seed_means.size() >= 2) {
        double mu = 0;
        for (double v : rep.seed_means) mu += v;
        mu /= static_cast<double>(rep.seed_means.size());
        double acc = 0;
        for (double v : rep.seed_means) acc += (v - mu) * (v - mu);
        rep.std_seeds = std::sqrt(acc / static_cast<double>(rep.seed_means.size() - 1));
    }
    return rep;
}

std::string EvalReport::to_json_string() const {
    nlohmann::json j;
    j["mean"] = mean;
    if (std_seeds) j["std_seeds"] = *std_seeds;
    j["seed_means"] = seed_means;
    j["scores"] = scores;
    j["seeds"] = seeds;
    j["episodes_per_seed"] = episodes_per_seed;
    j["ddim_steps"] = ddim_steps;
    j["sampler"] = sampler == SamplerKind::ddpm ? "ddpm" : "ddim";
    return j.dump(2);
}

namespace {

void draw_line(std::vector<unsigned char>& rgb, int W, int H, double x0, double y0, double x1,
               double y1, unsigned char r, unsigned char g, unsigned char b) {
    int n = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
    for (int i = 0; i <= n; ++i) {
        int x = static_cast<int>(std::lround(x0 + (x1 - x0) * i / n));
        int y = static_cast<int>(std::lround(y0 + (y1 - y0) * i / n));
        if (x < 0 || x >= W || y < 0 || y >= H) continue;
        size_t o = (static_cast<size_t>(y) * W + x) * 3;
        rgb[o] = r;
        rgb[o + 1] = g;
        rgb[o + 2] = b;
    }
}

}  // namespace

std::vector<SweepRow> ddim_sweep(const PolicyModel<float>& model, const NormStats& norm,
                                 const ToyTask& task, const Schedule& sched,
                                 const std::vector<int>& steps_list, int n_episodes,
                                 const std::vector<uint64_t>& seeds,
                                 const std::filesystem::path& csv_path,
                                 const std::filesystem::path& png_path) {
    std::vector<SweepRow> rows;
    std::string csv = "steps,mean\n";
    for (int n : steps_list) {
        EvalReport rep = evaluate(model, norm, task, sched, n_episodes, seeds, n, SamplerKind::ddim);
        rows.push_back({n, rep.mean});
        char buf[64];
        std::snprintf(buf, sizeof buf, "%d,%.6f\n", n, rep.mean);
        csv += buf;
        std::printf("ddim sweep: %d steps -> mean %.4f\n", n, rep.mean);
    }
    if (!csv_path.empty()) write_file(csv_path, csv.data(), csv.size());
    if (!png_path.empty() && rows.size() >= 2) {
        const int W = 480, H = 320, ML = 40, MB = 30, MT = 10, MR = 10;
        std::vector<unsigned char> rgb(static_cast<size_t>(W) * H * 3, 255);
        draw_line(rgb, W, H, ML, H - MB, W - MR, H - MB, 0, 0, 0);
        draw_line(rgb, W, H, ML, MT, ML, H - MB, 0, 0, 0);
        double x_lo = rows.front().steps, x_hi = rows.back().steps;
        auto px = [&](double s) { return ML + (s - x_lo) / std::max(1.0, x_hi - x_lo) * (W - ML - MR); };
        auto py = [&](double v) { return (H - MB) - v * (H - MB - MT); };
        for (size_t i = 0; i + 1 < rows.size(); ++i)
            draw_line(rgb, W, H, px(rows[i].steps), py(rows[i].mean), px(rows[i + 1].steps),
                      py(rows[i + 1].mean), 30, 60, 200);
        write_png(png_path, W, H, rgb);
    }
    return rows;
}

void trajectory_png(const ToyTask& task, const std::vector<ToyEnvState>& states,
                    const std::vector<Tensor<float>>& plans, const std::filesystem::path& path) {
    if (states.empty()) return;
    const int n = 384;
    ToyTask big = task;
    big.image_size = n;
    Tensor<float> base = render(big, states.back());
    std::vector<unsigned char> rgb(static_cast<size_t>(n) * n * 3);
    for (size_t i = 0; i < rgb.size(); ++i)
        rgb[i] = static_cast<unsigned char>(std::clamp(base[static_cast<int64_t>(i)], 0.0f, 1.0f) * 255.0f);
    for (const auto& plan : plans) {
        const int64_t T = plan.shape[1];
        for (int64_t t = 0; t < T; ++t) {
            double f = T > 1 ? static_cast<double>(t) / (T - 1) : 0.0;
            // First action orange, last blue.
            unsigned char r = static_cast<unsigned char>(255 * (1 - f) + 40 * f);
            unsigned char g = static_cast<unsigned char>(165 * (1 - f) + 60 * f);
            unsigned char b = static_cast<unsigned char>(0 * (1 - f) + 220 * f);
            int x = static_cast<int>(plan[t * 2] * n);
            int y = static_cast<int>(plan[t * 2 + 1] * n);
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx) {
                    int xx = x + dx, yy = y + dy;
                    if (xx < 0 || xx >= n || yy < 0 || yy >= n || dx * dx + dy * dy > 4) continue;
                    size_t o = (static_cast<size_t>(yy) * n + xx) * 3;
                    rgb[o] = r;
                    rgb[o + 1] = g;
                    rgb[o + 2] = b;
                }
        }
    }
    write_png(path, n, n, rgb);
}

}  // namespace crossway
