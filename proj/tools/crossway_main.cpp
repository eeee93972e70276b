#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>

#include "crossway/config.hpp"
#include "crossway/png.hpp"
#include "crossway/rollout.hpp"

namespace {

using namespace crossway;

constexpr int kExitUsage = 2;
constexpr int kExitIntegrity = 3;

void apply_env_seed(RunConfig& rc) {
    if (const char* s = std::getenv("CROSSWAY_SEED")) {
        rc.seed = std::strtoull(s, nullptr, 10);
        std::printf("seed overridden by CROSSWAY_SEED=%llu\n",
                    static_cast<unsigned long long>(rc.seed));
    }
}

void apply_overrides(RunConfig& rc, const std::vector<std::string>& sets) {
    if (sets.empty()) return;
    // Round-trip through the text form so overrides share the strict parser.
    std::string text = rc.serialize();
    for (const auto& kv : sets) {
        size_t dot = kv.find('.');
        size_t eq = kv.find('=');
        if (dot == std::string::npos || eq == std::string::npos || dot > eq)
            throw ConfigError("--set expects section.key=value, got '" + kv + "'");
        std::string section = kv.substr(0, dot);
        text += "\n[" + section + "]\n" + kv.substr(dot + 1, eq - dot - 1) + " = " +
                kv.substr(eq + 1) + "\n";
    }
    rc = RunConfig::parse(text);
}

// Stacked-CHW [3*T_s, H, W] floats -> T_s frames side by side, 8-bit RGB.
void write_stacked_png(const std::filesystem::path& path, const Tensor<float>& img) {
    const int64_t frames = img.shape[0] / 3, H = img.shape[1], W = img.shape[2];
    std::vector<unsigned char> rgb(static_cast<size_t>(H * W * frames * 3));
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c) {
                    float v = img[((f * 3 + c) * H + y) * W + x];
                    rgb[((static_cast<size_t>(y) * frames + f) * W + x) * 3 + c] =
                        static_cast<unsigned char>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
                }
    write_png(path, static_cast<int>(W * frames), static_cast<int>(H), rgb);
}

int cmd_gen_demos(int n, uint64_t seed, const std::string& out) {
    ToyTask task;
    std::printf("generating %d demonstrations (seed %llu)...\n", n,
                static_cast<unsigned long long>(seed));
    DemoDataset ds = generate_demos(task, n, seed);
    save_dataset(ds, out);
    std::printf("wrote %zu episodes (%lld steps) to %s\n", ds.episodes.size(),
                static_cast<long long>(ds.total_steps()), out.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& data, const std::string& out) {
    RunConfig rc = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
    apply_overrides(rc, sets);
    apply_env_seed(rc);
    rc.validate();
    DemoDataset ds = load_dataset(data);
    Schedule sched = rc.make_sched();
    std::string cfg_text = rc.serialize();
    std::filesystem::create_directories(out);
    write_file(std::filesystem::path(out) / "run_config.txt", cfg_text.data(), cfg_text.size());
    TrainResult res = train(rc.model_config(), sched, rc.train_settings(), ds, out);
    std::printf("trained %lld steps; last checkpoint %s\n", static_cast<long long>(res.steps),
                res.last_checkpoint.string().c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt, int episodes, std::vector<uint64_t> seeds, int ddim_steps,
             const std::string& sampler_name, int max_steps, const std::string& out,
             const std::string& traj_out) {
    LoadedPolicy lp = load_policy(ckpt, /*use_ema=*/true);
    ToyTask task;
    task.image_size = lp.cfg.img_h;
    task.max_steps = max_steps;
    if (ddim_steps <= 0) ddim_steps = lp.sched.K;
    SamplerKind sampler = sampler_name == "ddim" ? SamplerKind::ddim : SamplerKind::ddpm;
    if (sampler == SamplerKind::ddpm && ddim_steps != lp.sched.K)
        throw ConfigError("ddpm sampling requires --ddim-steps equal to K; use --sampler ddim");
    EvalReport rep = evaluate(*lp.model, lp.norm, task, lp.sched, episodes, seeds, ddim_steps, sampler);
    std::string js = rep.to_json_string();
    if (out.empty()) {
        std::printf("%s\n", js.c_str());
    } else {
        write_file(out, js.data(), js.size());
        std::printf("mean %.4f -> %s\n", rep.mean, out.c_str());
    }
    if (!traj_out.empty()) {
        std::vector<ToyEnvState> states;
        std::vector<Tensor<float>> plans;
        Rng rng = stream_rng(seeds.empty() ? 0 : seeds[0], "traj");
        run_episode(*lp.model, lp.norm, task, lp.sched, subsample_steps(lp.sched.K, ddim_steps),
                    sampler, stream_seed(seeds.empty() ? 0 : seeds[0], "env", 0), rng, &states,
                    &plans);
        trajectory_png(task, states, plans, traj_out);
    }
    return 0;
}

int cmd_recon(const std::string& ckpt, const std::string& data, int n, uint64_t seed,
              const std::string& out) {
    LoadedPolicy lp = load_policy(ckpt, /*use_ema=*/true);
    if (!lp.cfg.has_state_decoder())
        throw IntegrityError("checkpoint has no state decoder (baseline or curl variant)");
    DemoDataset ds = load_dataset(data);
    std::filesystem::create_directories(out);
    Rng rng = stream_rng(seed, "recon");
    const ModelConfig& cfg = lp.cfg;
    for (int i = 0; i < n; ++i) {
        int ep = static_cast<int>(rng.uniform_int(ds.episodes.size()));
        int64_t t = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(ds.episodes[ep].len)));
        std::vector<std::pair<int, int64_t>> picks{{ep, t}};
        Rng crop_rng = stream_rng(seed, "recon-crop", static_cast<uint64_t>(i));
        TrainBatch<float> batch = assemble_batch<float>(ds, cfg, picks, crop_rng, false);
        std::vector<int> ks{static_cast<int>(rng.uniform_int(static_cast<uint64_t>(lp.sched.K)))};
        Tensor<float> eps = rng.normal_tensor<float>(batch.actions.shape);
        Tensor<float> a_k = q_sample_batch(batch.actions, ks, eps, lp.sched);
        NoGradGuard ng;
        Var<float> cond = lp.model->condition(batch.images, batch.lowdim);
        auto X = lp.model->encode_actions(a_k, cond, ks);
        auto rec = lp.model->reconstruct(X, cond);
        for (int cam = 0; cam < cfg.n_cameras; ++cam) {
            std::string suffix = cfg.n_cameras > 1 ? "_cam" + std::to_string(cam) : "";
            write_stacked_png(std::filesystem::path(out) /
                                  ("recon_" + std::to_string(i) + suffix + "_orig.png"),
                              batch.target_images[cam].reshaped(
                                  {int64_t(3) * cfg.t_obs, cfg.rec_h, cfg.rec_w}));
            write_stacked_png(std::filesystem::path(out) /
                                  ("recon_" + std::to_string(i) + suffix + "_pred.png"),
                              rec.images[cam].val().reshaped(
                                  {int64_t(3) * cfg.t_obs, cfg.rec_h, cfg.rec_w}));
        }
    }
    std::printf("wrote %d reconstruction pairs to %s\n", n, out.c_str());
    return 0;
}

int cmd_sweep(const std::string& ckpt, int episodes, std::vector<uint64_t> seeds,
              const std::vector<int>& steps_list, int max_steps, const std::string& out_csv,
              const std::string& out_png) {
    LoadedPolicy lp = load_policy(ckpt, /*use_ema=*/true);
    ToyTask task;
    task.image_size = lp.cfg.img_h;
    task.max_steps = max_steps;
    std::vector<int> list = steps_list;
    if (list.empty())
        for (int s = 10; s <= lp.sched.K; s += 10) list.push_back(s);
    ddim_sweep(*lp.model, lp.norm, task, lp.sched, list, episodes, seeds, out_csv, out_png);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"crossway: diffusion-based behavioral cloning on a toy 2-D pusher"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-demos", "Generate scripted-expert demonstrations");
    int gen_n = 100;
    uint64_t gen_seed = 7;
    std::string gen_out;
    gen->add_option("--n", gen_n, "number of episodes");
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--out", gen_out, "output dataset directory")->required();

    auto* tr = app.add_subcommand("train", "Train a policy");
    std::string tr_config, tr_data, tr_out;
    std::vector<std::string> tr_sets;
    tr->add_option("--config", tr_config, "config file (defaults when omitted)");
    tr->add_option("--set", tr_sets, "override, e.g. --set model.variant=baseline");
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--out", tr_out, "output run directory")->required();

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string ev_ckpt, ev_out, ev_sampler = "ddpm", ev_traj;
    int ev_episodes = 50, ev_ddim = 0, ev_max_steps = 300;
    std::vector<uint64_t> ev_seeds = {1, 2, 3};
    ev->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
    ev->add_option("--episodes", ev_episodes, "episodes per seed");
    ev->add_option("--seeds", ev_seeds, "evaluation seeds")->delimiter(',');
    ev->add_option("--ddim-steps", ev_ddim, "denoising steps (default: full K)");
    ev->add_option("--sampler", ev_sampler, "ddpm | ddim")->check(CLI::IsMember({"ddpm", "ddim"}));
    ev->add_option("--max-steps", ev_max_steps, "episode step cap");
    ev->add_option("--out", ev_out, "write the report JSON here (default: stdout)");
    ev->add_option("--traj-out", ev_traj, "write a trajectory overlay PNG for episode 0");

    auto* rc = app.add_subcommand("recon", "Dump original/reconstruction image pairs");
    std::string rc_ckpt, rc_data, rc_out;
    int rc_n = 8;
    uint64_t rc_seed = 0;
    rc->add_option("--ckpt", rc_ckpt)->required();
    rc->add_option("--data", rc_data)->required();
    rc->add_option("--n", rc_n, "number of pairs");
    rc->add_option("--seed", rc_seed, "sample selection seed");
    rc->add_option("--out", rc_out, "output directory")->required();

    auto* sw = app.add_subcommand("sweep", "DDIM step sweep");
    std::string sw_ckpt, sw_csv = "sweep.csv", sw_png = "sweep.png";
    int sw_episodes = 50, sw_max_steps = 300;
    std::vector<uint64_t> sw_seeds = {1, 2, 3};
    std::vector<int> sw_steps;
    sw->add_option("--ckpt", sw_ckpt)->required();
    sw->add_option("--episodes", sw_episodes, "episodes per seed per entry");
    sw->add_option("--seeds", sw_seeds)->delimiter(',');
    sw->add_option("--steps", sw_steps, "step counts (default 10..K by 10)")->delimiter(',');
    sw->add_option("--max-steps", sw_max_steps, "episode step cap");
    sw->add_option("--out-csv", sw_csv);
    sw->add_option("--out-png", sw_png);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_demos(gen_n, gen_seed, gen_out);
        if (tr->parsed()) return cmd_train(tr_config, tr_sets, tr_data, tr_out);
        if (ev->parsed())
            return cmd_eval(ev_ckpt, ev_episodes, ev_seeds, ev_ddim, ev_sampler, ev_max_steps,
                            ev_out, ev_traj);
        if (rc->parsed()) return cmd_recon(rc_ckpt, rc_data, rc_n, rc_seed, rc_out);
        if (sw->parsed())
            return cmd_sweep(sw_ckpt, sw_episodes, sw_seeds, sw_steps, sw_max_steps, sw_csv, sw_png);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const IntegrityError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIntegrity;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
