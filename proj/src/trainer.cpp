#include "crossway/trainer.hpp"

#include <cstdio>

namespace crossway {

namespace {

int find_resume_epoch(const std::filesystem::path& out_dir, int epochs) {
    namespace fs = std::filesystem;
    for (int e = epochs; e >= 1; --e) {
        fs::path p = out_dir / ("ckpt_epoch" + zero_pad(e, 3));
        if (fs::exists(p / "manifest.json")) return e;
    }
    return 0;
}

}  // namespace

TrainResult train(const ModelConfig& mcfg, const Schedule& sched, const TrainSettings& ts,
                  const DemoDataset& ds, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    if (ds.episodes.empty()) throw std::invalid_argument("train: empty dataset");
    for (const auto& ep : ds.episodes)
        if (ep.len < mcfg.t_act)
            throw std::invalid_argument("train: dataset episode shorter than the action window");
    if (ds.img_h != mcfg.img_h || ds.img_w != mcfg.img_w || ds.n_cameras != mcfg.n_cameras ||
        ds.lowdim_dim != mcfg.lowdim || ds.action_dim != mcfg.action_dim)
        throw std::invalid_argument("train: dataset does not match the model config");

    fs::create_directories(out_dir);
    using S = float;
    PolicyModel<S> model(mcfg, ts.seed);
    PolicyModel<S> ema_model(mcfg, ts.seed);  // identical init: EMA starts equal
    AdamW<S> adam;
    adam.lr = ts.lr;
    adam.wd = ts.wd;
    adam.init(model.params);

    TrainResult result;
    int start_epoch = find_resume_epoch(out_dir, ts.epochs);
    if (start_epoch > 0) {
        fs::path p = out_dir / ("ckpt_epoch" + zero_pad(start_epoch, 3));
        load_checkpoint_params(p, model, /*use_ema=*/false, &ema_model, &adam);
        if (!ts.quiet) std::printf("resuming from %s\n", p.string().c_str());
    }
    result.start_epoch = start_epoch;

    fs::path csv_path = out_dir / "loss.csv";
    bool fresh_csv = !fs::exists(csv_path) || start_epoch == 0;
    std::FILE* csv = std::fopen(csv_path.string().c_str(), fresh_csv ? "w" : "a");
    if (!csv) throw std::runtime_error("cannot open loss log: " + csv_path.string());
    if (fresh_csv) std::fprintf(csv, "epoch,step,l_ddpm,l_recon,l_total,lr\n");

    std::vector<std::pair<int, int64_t>> picks;
    for (size_t i = 0; i < ds.episodes.size(); ++i)
        for (int64_t t = 0; t < ds.episodes[i].len; ++t)
            picks.emplace_back(static_cast<int>(i), t);

    int64_t gstep = adam.t;
    const bool curl = mcfg.variant == Variant::curl;
    const bool recon = mcfg.has_state_decoder();
    bool done = false;

    for (int e = start_epoch; e < ts.epochs && !done; ++e) {
        auto order = picks;
        Rng order_rng = stream_rng(ts.seed, "order", static_cast<uint64_t>(e));
        order_rng.shuffle(order);
        Rng aug_rng = stream_rng(ts.seed, "aug", static_cast<uint64_t>(e));
        Rng diff_rng = stream_rng(ts.seed, "diff", static_cast<uint64_t>(e));

        const int64_t n_batches = static_cast<int64_t>(order.size()) / ts.batch;
        double epoch_total = 0;
        int64_t epoch_steps = 0;
        for (int64_t ib = 0; ib < n_batches; ++ib) {
            std::vector<std::pair<int, int64_t>> bp(
                order.begin() + ib * ts.batch, order.begin() + (ib + 1) * ts.batch);
            TrainBatch<S> batch = assemble_batch<S>(ds, mcfg, bp, aug_rng, curl);

            auto ddpm = loss_ddpm(model, batch, sched, diff_rng);
            Var<S> total = ddpm.loss;
            double aux_value = 0;
            if (recon) {
                auto rec = model.reconstruct(ddpm.intersection, ddpm.cond);
                Var<S> lrec = loss_recon(model, rec, batch);
                aux_value = lrec.val()[0];
                total = loss_crossway_var(ddpm.loss, lrec, mcfg.alpha);
            } else if (curl) {
                Tensor<S> x2;
                {
                    NoGradGuard ng;
                    Var<S> cond2 = ema_model.condition(batch.images2, batch.lowdim);
                    auto x2i = ema_model.encode_actions(ddpm.noisy_actions, cond2, ddpm.ks);
                    x2 = ag::slice_time(x2i.deep, 0).val();
                }
                Var<S> x1 = ag::slice_time(ddpm.intersection.deep, 0);
                Var<S> lcurl = loss_curl(x1, x2, model.curl_w);
                aux_value = lcurl.val()[0];
                total = loss_crossway_var(ddpm.loss, lcurl, 0.1);
            }

            model.params.zero_grad();
            backward(total);
            adam.step(model.params);
            ++gstep;
            double decay = ts.ema_decay *
                           std::min(1.0, static_cast<double>(gstep) / std::max(1, ts.ema_warmup));
            for (size_t i = 0; i < model.params.items.size(); ++i)
                ema_update(ema_model.params.items[i].second.val(),
                           model.params.items[i].second.val(), decay);

            double lt = total.val()[0];
            result.step_total.push_back(lt);
            result.step_ddpm.push_back(ddpm.loss.val()[0]);
            std::fprintf(csv, "%d,%lld,%.17g,%.17g,%.17g,%.17g\n", e + 1,
                         static_cast<long long>(gstep), static_cast<double>(ddpm.loss.val()[0]),
                         aux_value, lt, ts.lr);
            std::fflush(csv);
            epoch_total += lt;
            ++epoch_steps;
            if (!ts.quiet && gstep % 10 == 0)
                std::printf("epoch %d step %lld l_total %.5f\n", e + 1,
                            static_cast<long long>(gstep), lt);
            if (ts.max_steps > 0 && gstep >= ts.max_steps) {
                done = true;
                break;
            }
        }
        result.epoch_mean_total.push_back(epoch_steps ? epoch_total / epoch_steps : 0.0);

        CheckpointMeta meta;
        meta.epoch = e + 1;
        meta.adam_t = adam.t;
        meta.ema_decay = ts.ema_decay;
        meta.train_seed = ts.seed;
        fs::path ck = out_dir / ("ckpt_epoch" + zero_pad(e + 1, 3));
        save_checkpoint(ck, model, &ema_model, &adam, sched, ds.norm, meta);
        result.last_checkpoint = ck;
    }
    std::fclose(csv);
    result.steps = gstep;
    return result;
}

}  // namespace crossway
