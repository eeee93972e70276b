#pragma once

#include <string>
#include <vector>

#include "crossway/model.hpp"
#include "crossway/toyenv.hpp"
#include "crossway/trainer.hpp"

namespace crossway {

// Malformed config or flags: exit code 2 at the CLI.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Human-editable sectioned key-value config. Unknown sections or keys are
// hard errors; round-trips through serialize()/parse() unchanged.
struct RunConfig {
    // [task]
    int img_res = 96;
    int crop_res = 84;
    int rec_res = 96;
    int action_dim = 2;
    int lowdim_dim = 2;
    int max_steps = 300;

    // [model]
    std::string variant = "crossway";
    std::string design = "A";
    double alpha = 0.1;
    int n_ahead = 0;
    int unet_width = 64;
    int enc_width = 16;
    int vis_emb = 64;
    int t_obs = 2;
    int t_act = 8;
    int k_steps = 100;
    std::string schedule = "squared_cosine";
    bool shallower_decoder = false;

    // [train]
    int epochs = 50;
    int batch = 64;
    double lr = 1e-4;
    double wd = 1e-6;
    double ema_decay = 0.999;
    int ema_warmup = 200;
    uint64_t seed = 1;

    // [eval]
    int episodes = 50;
    std::vector<uint64_t> eval_seeds = {1, 2, 3};
    int ddim_steps = 100;

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    std::string serialize() const;
    void validate() const;

    ModelConfig model_config() const;
    ToyTask task() const;
    TrainSettings train_settings() const;
    Schedule make_sched() const { return make_schedule(k_steps, schedule_kind_from_string(schedule)); }

    bool operator==(const RunConfig&) const = default;
};

}  // namespace crossway
