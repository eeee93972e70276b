#pragma once

#include <functional>
#include <optional>

#include "crossway/checkpoint.hpp"

namespace crossway {

struct EvalReport {
    std::vector<double> scores;      // seed-major, episodes_per_seed per seed
    std::vector<double> seed_means;
    double mean = 0;
    std::optional<double> std_seeds;  // absent with a single seed
    std::vector<uint64_t> seeds;
    int episodes_per_seed = 0;
    int ddim_steps = 0;  // number of denoising steps used
    SamplerKind sampler = SamplerKind::ddpm;

    std::string to_json_string() const;
};

// A planner maps the observation history (images [T_s, H, W, 3], lowdim
// [T_s, L]) to a task-unit action plan [T_a, A]. The true env state is passed
// alongside for oracle planners in tests; the learned planner ignores it.
using Planner = std::function<Tensor<float>(const Tensor<float>& images,
                                            const Tensor<float>& lowdim, const ToyEnvState& s)>;

// One closed-loop receding-horizon episode: observe a T_s history, plan,
// execute all T_a actions, replan. Returns the coverage at termination
// (success cutoff or the step cap).
double run_episode_with_planner(const ToyTask& task, int t_obs, int t_act, const Planner& plan_fn,
                                uint64_t env_seed,
                                std::vector<ToyEnvState>* rec_states = nullptr,
                                std::vector<Tensor<float>>* rec_plans = nullptr);

// The learned-policy episode: denoise a normalized plan, denormalize, execute.
double run_episode(const PolicyModel<float>& model, const NormStats& norm, const ToyTask& task,
                   const Schedule& sched, const std::vector<int>& steps, SamplerKind sampler,
                   uint64_t env_seed, Rng& policy_rng,
                   std::vector<ToyEnvState>* rec_states = nullptr,
                   std::vector<Tensor<float>>* rec_plans = nullptr);

// n_episodes per seed. Episode j of any seed uses an environment seed derived
// from (seed, j) only, so compared methods see identical initial states.
EvalReport evaluate(const PolicyModel<float>& model, const NormStats& norm, const ToyTask& task,
                    const Schedule& sched, int n_episodes, const std::vector<uint64_t>& seeds,
                    int n_denoise_steps, SamplerKind sampler);

struct SweepRow {
    int steps = 0;
    double mean = 0;
};

// One evaluate() per entry of steps_list (DDIM sampler), CSV + line plot.
std::vector<SweepRow> ddim_sweep(const PolicyModel<float>& model, const NormStats& norm,
                                 const ToyTask& task, const Schedule& sched,
                                 const std::vector<int>& steps_list, int n_episodes,
                                 const std::vector<uint64_t>& seeds,
                                 const std::filesystem::path& csv_path,
                                 const std::filesystem::path& png_path);

// Fig.-9 style overlay of one episode: block/target outline plus the planned
// action sequences, first action orange fading to blue for the last.
void trajectory_png(const ToyTask& task, const std::vector<ToyEnvState>& states,
                    const std::vector<Tensor<float>>& plans, const std::filesystem::path& path);

}  // namespace crossway
