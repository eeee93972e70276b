// Acceptance suite: one PASS/FAIL line per criterion.
//
//   --fast       criteria 1-5, 8, 9 (property suites; minutes)
//   --endtoend   criteria 6-7 (demo generation, two 50-epoch trainings,
//                evaluation and the DDIM sweep; hours on one CPU core)
//   --work-dir   artifact directory for the end-to-end runs; reruns resume
//                from the checkpoints found there.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>

#include "crossway/config.hpp"
#include "crossway/rollout.hpp"
#include "crossway/trainer.hpp"

using namespace crossway;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("CRITERION %d: %s - %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------- fixtures

ModelConfig tiny_config(Variant v, Design d, int width) {
    ModelConfig c;
    c.img_h = c.img_w = 24;
    c.crop_h = c.crop_w = 20;
    c.rec_h = c.rec_w = 24;
    c.unet_width = width;
    c.enc_width = 4;
    c.vis_emb = 8;
    c.pe_channels = 8;
    c.variant = v;
    c.design = d;
    return c;
}

const DemoDataset& tiny_dataset() {
    static DemoDataset ds = [] {
        ToyTask t;
        t.image_size = 24;
        return generate_demos(t, 3, 7);
    }();
    return ds;
}

template <class S>
void perturb_params(PolicyModel<S>& m, uint64_t seed, double scale = 0.02) {
    Rng rng(seed);
    for (auto& [name, p] : m.params.items)
        for (auto& v : p.val().data) v = static_cast<S>(v + scale * rng.normal());
}

template <class S>
TrainBatch<S> make_batch(const DemoDataset& ds, const ModelConfig& cfg, int64_t B, uint64_t seed) {
    std::vector<std::pair<int, int64_t>> picks;
    Rng pick_rng(seed);
    for (int64_t i = 0; i < B; ++i) {
        int ep = static_cast<int>(pick_rng.uniform_int(ds.episodes.size()));
        picks.emplace_back(ep, static_cast<int64_t>(pick_rng.uniform_int(
                                   static_cast<uint64_t>(ds.episodes[ep].len))));
    }
    Rng aug(seed + 1);
    return assemble_batch<S>(ds, cfg, picks, aug, cfg.variant == Variant::curl);
}

template <class S>
double prefix_grad_norm(const PolicyModel<S>& m, const char* prefix) {
    double n = 0;
    for (const auto& [name, p] : m.params.items) {
        if (name.rfind(prefix, 0) != 0 || p.n->grad.data.empty()) continue;
        for (S v : p.n->grad.data) n += double(v) * double(v);
    }
    return n;
}

template <class S>
bool prefix_grad_exact_zero(const PolicyModel<S>& m, const char* prefix) {
    for (const auto& [name, p] : m.params.items) {
        if (name.rfind(prefix, 0) != 0) continue;
        for (size_t i = 0; i < p.n->grad.data.size(); ++i)
            if (p.n->grad.data[i] != S(0)) return false;
    }
    return true;
}

// -------------------------------------------------------------- criterion 1

void criterion_1() {
    Timer timer;
    bool ok = true;
    std::string why;

    // q_sample composition, Monte-Carlo, 3 sigma.
    {
        Schedule s = make_schedule(5, ScheduleKind::linear, 0.02, 0.3);
        const double x0 = 0.7;
        const int N = 100000;
        Rng rng(42);
        double m1 = 0, m2 = 0, c1 = 0, c2 = 0;
        for (int i = 0; i < N; ++i) {
            Tensor<double> x({1}, x0), e({1});
            e[0] = rng.normal();
            double a = q_sample(x, 4, e, s)[0];
            m1 += a;
            c1 += a * a;
            double v = x0;
            for (int k = 0; k < 5; ++k)
                v = std::sqrt(s.alphas[k]) * v + std::sqrt(1.0 - s.alphas[k]) * rng.normal();
            m2 += v;
            c2 += v * v;
        }
        m1 /= N;
        m2 /= N;
        double var1 = c1 / N - m1 * m1, var2 = c2 / N - m2 * m2;
        double se_mean = std::sqrt(var1 / N + var2 / N);
        double se_var = std::sqrt(2.0 / (N - 1)) * (var1 + var2);
        if (std::abs(m1 - m2) > 3 * se_mean) {
            ok = false;
            why += " q_sample mean off;";
        }
        if (std::abs(var1 - var2) > 3 * se_var) {
            ok = false;
            why += " q_sample variance off;";
        }
    }
    // ddpm_step k = 0 inversion at 1e-6.
    {
        Schedule s = make_schedule(100, ScheduleKind::squared_cosine);
        Rng rng(11);
        Tensor<double> x0 = rng.normal_tensor<double>({16, 2});
        Tensor<double> eps = rng.normal_tensor<double>({16, 2});
        Tensor<double> zero({16, 2});
        Tensor<double> rec = ddpm_step(q_sample(x0, 0, eps, s), eps, 0, zero, s);
        for (int64_t i = 0; i < x0.numel(); ++i)
            if (std::abs(rec[i] - x0[i]) >= 1e-6) {
                ok = false;
                why += " k=0 inversion off;";
                break;
            }
    }
    // DDIM vs noiseless DDPM x0 estimates at 1e-5 with a perfect-eps oracle.
    {
        Schedule s = make_schedule(100, ScheduleKind::squared_cosine);
        Rng rng(23);
        Tensor<double> x0 = rng.normal_tensor<double>({1, 6});
        Tensor<double> init = rng.normal_tensor<double>({1, 6});
        auto perfect = [&](const Tensor<double>& x, int k) {
            double a = std::sqrt(s.alpha_bars[k]), b = std::sqrt(1.0 - s.alpha_bars[k]);
            Tensor<double> e = x;
            for (int64_t i = 0; i < x.numel(); ++i) e[i] = (x[i] - a * x0[i]) / b;
            return e;
        };
        Tensor<double> xi = init, xp = init, zeros({1, 6});
        for (int k = 99; k >= 0; --k) {
            Tensor<double> e1 = perfect(xi, k), e2 = perfect(xp, k);
            Tensor<double> est1 = predict_x0(xi, e1, k, s), est2 = predict_x0(xp, e2, k, s);
            for (int64_t i = 0; i < x0.numel(); ++i)
                if (std::abs(est1[i] - est2[i]) >= 1e-5) {
                    ok = false;
                    why += " ddim/ddpm x0 estimates diverge;";
                    k = -1;
                    break;
                }
            if (k < 0) break;
            if (k > 0) xi = ddim_step(xi, e1, k, k - 1, s);
            xp = ddpm_step(xp, e2, k, zeros, s);
        }
    }
    double secs = timer.seconds();
    if (secs >= 60) {
        ok = false;
        why += " runtime over 1 minute;";
    }
    report(1, ok, "sampler oracles (q_sample 3-sigma, k=0 inversion 1e-6, ddim/ddpm 1e-5), " +
                      fmt(secs) + "s" + why);
}

// -------------------------------------------------------------- criterion 2

void criterion_2() {
    Timer timer;
    bool ok = true;
    std::string why;
    const DemoDataset& ds = tiny_dataset();
    Schedule sched = make_schedule(10);
    const int width = 16;

    auto ddpm_parts = [&](PolicyModel<double>& model, uint64_t seed) {
        auto batch = make_batch<double>(ds, model.cfg, 4, seed);
        Rng diff(seed + 7);
        return std::make_pair(loss_ddpm(model, batch, sched, diff), std::move(batch));
    };

    {
        PolicyModel<double> model(tiny_config(Variant::crossway, Design::A, width), 1);
        perturb_params(model, 101);
        auto [out, batch] = ddpm_parts(model, 11);
        model.params.zero_grad();
        backward(out.loss);
        if (!(prefix_grad_norm(model, "e_s.") > 0 && prefix_grad_norm(model, "e_a.") > 0 &&
              prefix_grad_norm(model, "d_a.") > 0)) {
            ok = false;
            why += " ddpm loss misses a module;";
        }
        if (!prefix_grad_exact_zero(model, "d_s.")) {
            ok = false;
            why += " ddpm loss leaks into D_S;";
        }
    }
    for (Design d : {Design::A, Design::B, Design::C}) {
        PolicyModel<double> model(tiny_config(Variant::crossway, d, width), 2);
        perturb_params(model, 102);
        auto [out, batch] = ddpm_parts(model, 12);
        auto rec = model.reconstruct(out.intersection, out.cond);
        Var<double> lrec = loss_recon(model, rec, batch);
        model.params.zero_grad();
        backward(lrec);
        if (!(prefix_grad_norm(model, "e_s.") > 0 && prefix_grad_norm(model, "e_a.") > 0 &&
              prefix_grad_norm(model, "d_s.") > 0)) {
            ok = false;
            why += std::string(" recon loss misses a module under design ") + design_letter(d) + ";";
        }
        if (!prefix_grad_exact_zero(model, "d_a.")) {
            ok = false;
            why += std::string(" recon loss leaks into D_A under design ") + design_letter(d) + ";";
        }
    }
    {
        PolicyModel<double> model(tiny_config(Variant::crossway, Design::D, width), 3);
        perturb_params(model, 103);
        auto [out, batch] = ddpm_parts(model, 13);
        auto rec = model.reconstruct(out.intersection, out.cond);
        Var<double> lrec = loss_recon(model, rec, batch);
        model.params.zero_grad();
        backward(lrec);
        if (!prefix_grad_exact_zero(model, "e_a.") || !prefix_grad_exact_zero(model, "emb_mlp")) {
            ok = false;
            why += " design D recon touches E_A;";
        }
        if (!(prefix_grad_norm(model, "e_s.") > 0 && prefix_grad_norm(model, "d_s.") > 0)) {
            ok = false;
            why += " design D recon misses E_S or D_S;";
        }
    }
    {
        PolicyModel<double> model(tiny_config(Variant::curl, Design::A, width), 4);
        PolicyModel<double> ema(tiny_config(Variant::curl, Design::A, width), 4);
        perturb_params(model, 104);
        perturb_params(ema, 105);
        auto [out, batch] = ddpm_parts(model, 14);
        Tensor<double> x2;
        {
            NoGradGuard ng;
            Var<double> cond2 = ema.condition(batch.images2, batch.lowdim);
            x2 = ag::slice_time(ema.encode_actions(out.noisy_actions, cond2, out.ks).deep, 0).val();
        }
        Var<double> lcurl = loss_curl(ag::slice_time(out.intersection.deep, 0), x2, model.curl_w);
        model.params.zero_grad();
        ema.params.zero_grad();
        backward(lcurl);
        for (const auto& [name, p] : ema.params.items)
            if (!p.n->grad.data.empty())
                for (double v : p.n->grad.data)
                    if (v != 0.0) {
                        ok = false;
                        why += " curl gradient reaches the EMA branch;";
                        break;
                    }
        if (!(prefix_grad_norm(model, "curl.w") > 0 && prefix_grad_norm(model, "e_a.") > 0)) {
            ok = false;
            why += " curl loss misses the learner branch;";
        }
    }
    double secs = timer.seconds();
    if (secs >= 120) {
        ok = false;
        why += " runtime over 2 minutes;";
    }
    report(2, ok, "gradient routing at channel width 16 (64-bit exact zeros), " + fmt(secs) + "s" + why);
}

// -------------------------------------------------------------- criterion 3

void criterion_3(const std::filesystem::path& work) {
    Timer timer;
    const DemoDataset& ds = tiny_dataset();
    Schedule sched = make_schedule(10);
    ModelConfig a = tiny_config(Variant::crossway, Design::A, 8);
    a.alpha = 0.0;
    ModelConfig b = tiny_config(Variant::baseline, Design::A, 8);
    TrainSettings ts;
    ts.epochs = 1000;
    ts.batch = 4;
    ts.max_steps = 50;
    ts.seed = 5;
    ts.quiet = true;
    std::filesystem::remove_all(work / "equiv_a");
    std::filesystem::remove_all(work / "equiv_b");
    auto ra = train(a, sched, ts, ds, work / "equiv_a");
    auto rb = train(b, sched, ts, ds, work / "equiv_b");
    std::filesystem::remove_all(work / "equiv_a");
    std::filesystem::remove_all(work / "equiv_b");
    bool ok = ra.step_total.size() == 50 && rb.step_total.size() == 50;
    double worst = 0;
    for (size_t i = 0; ok && i < 50; ++i) {
        double denom = std::max(std::abs(ra.step_total[i]), std::abs(rb.step_total[i]));
        double relerr = denom == 0 ? 0 : std::abs(ra.step_total[i] - rb.step_total[i]) / denom;
        worst = std::max(worst, relerr);
        if (relerr > 1e-12) ok = false;
    }
    report(3, ok, "alpha=0 crossway vs baseline, 50 steps, worst relative loss gap " + fmt(worst) +
                      " (tolerance 1e-12), " + fmt(timer.seconds()) + "s");
}

// -------------------------------------------------------------- criterion 4

void criterion_4() {
    Timer timer;
    bool ok = true;
    std::string why;
    Rng rng(7);
    for (int64_t C : {8, 64, 256}) {
        Intersection<double> X;
        X.deep = make_leaf(rng.normal_tensor<double>({2, C, 2}), false);
        Tensor<double> pe = pixel_pos_embedding<double>(24, 24, 64);
        Var<double> h = make_leaf(rng.normal_tensor<double>({2, 4}), false);
        Var<double> blk = transform_intersection<double>(X, h, Design::A, 96, 96, nullptr, pe);
        // Exhaustive tiling law on the 24 x 24 grid.
        for (int64_t b = 0; b < 2 && ok; ++b)
            for (int64_t c = 0; c < C / 4 && ok; ++c)
                for (int64_t y = 0; y < 24 && ok; ++y)
                    for (int64_t x = 0; x < 24 && ok; ++x) {
                        double got = blk.val()[((b * (C / 4 + 64) + c) * 24 + y) * 24 + x];
                        int64_t fold = (y % 2) * 2 + (x % 2);
                        double want = X.deep.val()[(b * C + fold * (C / 4) + c) * 2];
                        if (got != want) {
                            ok = false;
                            why += " tiling law violated at C=" + std::to_string(C) + ";";
                        }
                    }
        // Bit-exact insensitivity to X.deep[i > 0].
        Intersection<double> X2;
        X2.deep = make_leaf(rng.normal_tensor<double>({2, C, 2}), false);
        for (int64_t i = 0; i < 2 * C; ++i) X2.deep.val()[i * 2] = X.deep.val()[i * 2];
        Var<double> blk2 = transform_intersection<double>(X2, h, Design::A, 96, 96, nullptr, pe);
        if (blk.val().data != blk2.val().data) {
            ok = false;
            why += " design A depends on X.deep[i>0] at C=" + std::to_string(C) + ";";
        }
    }
    report(4, ok, "design-A transform laws for C in {8, 64, 256} on 24x24 grids, " +
                      fmt(timer.seconds()) + "s" + why);
}

// -------------------------------------------------------------- criterion 5

void criterion_5() {
    Timer timer;
    const DemoDataset& ds = tiny_dataset();
    Schedule sched = make_schedule(10);
    ModelConfig cfg = tiny_config(Variant::crossway, Design::A, 8);
    PolicyModel<double> model(cfg, 31);
    perturb_params(model, 131);
    auto batch = make_batch<double>(ds, cfg, 3, 231);
    auto loss_value = [&]() {
        Rng diff(77);
        auto out = loss_ddpm(model, batch, sched, diff);
        auto rec = model.reconstruct(out.intersection, out.cond);
        return loss_crossway_var(out.loss, loss_recon(model, rec, batch), cfg.alpha);
    };
    Var<double> loss = loss_value();
    model.params.zero_grad();
    backward(loss);

    Rng pick(41);
    bool ok = true;
    std::string why;
    double worst = 0;
    int checked = 0;
    while (checked < 10) {
        size_t pi = static_cast<size_t>(pick.uniform_int(model.params.items.size()));
        auto& p = model.params.items[pi].second;
        int64_t ei = static_cast<int64_t>(pick.uniform_int(static_cast<uint64_t>(p.numel())));
        double analytic = p.n->grad.data.empty() ? 0.0 : p.n->grad[ei];
        if (std::abs(analytic) < 1e-7) continue;
        double orig = p.val()[ei];
        double h = 1e-5 * std::max(1.0, std::abs(orig));
        double lp, lm;
        {
            NoGradGuard ng;
            p.val()[ei] = orig + h;
            lp = loss_value().val()[0];
            p.val()[ei] = orig - h;
            lm = loss_value().val()[0];
            p.val()[ei] = orig;
        }
        double numeric = (lp - lm) / (2 * h);
        double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
        worst = std::max(worst, rel);
        if (rel >= 1e-3) {
            ok = false;
            why += " " + model.params.items[pi].first + " rel " + fmt(rel) + ";";
        }
        ++checked;
    }
    double secs = timer.seconds();
    if (secs >= 120) {
        ok = false;
        why += " runtime over 2 minutes;";
    }
    report(5, ok, "finite-difference gradients on 10 random weights, worst relative " + fmt(worst) +
                      " (tolerance 1e-3), " + fmt(secs) + "s" + why);
}

// -------------------------------------------------------------- criterion 8

void criterion_8() {
    Timer timer;
    bool ok = true;
    std::string why;
    // Dataset round-trip with checksum verification.
    {
        ToyTask t;
        t.image_size = 24;
        DemoDataset ds = generate_demos(t, 2, 3);
        auto dir = std::filesystem::temp_directory_path() / "crossway_acc_ds";
        std::filesystem::remove_all(dir);
        save_dataset(ds, dir);
        DemoDataset back = load_dataset(dir);
        for (size_t i = 0; i < ds.episodes.size(); ++i)
            if (back.episodes[i].images[0].data != ds.episodes[i].images[0].data ||
                back.episodes[i].lowdim.data != ds.episodes[i].lowdim.data ||
                back.episodes[i].actions.data != ds.episodes[i].actions.data) {
                ok = false;
                why += " dataset round-trip not bit-exact;";
            }
        {
            std::fstream f(dir / "ep0" / "lowdim.bin", std::ios::in | std::ios::out | std::ios::binary);
            char junk = 0x11;
            f.seekp(2);
            f.write(&junk, 1);
        }
        bool threw = false;
        try {
            load_dataset(dir);
        } catch (const IntegrityError&) {
            threw = true;
        }
        if (!threw) {
            ok = false;
            why += " checksum corruption not detected;";
        }
        std::filesystem::remove_all(dir);
    }
    // Normalization round-trip over 1e4 random draws.
    {
        NormStats st;
        st.min = {0.2, -1.5};
        st.max = {0.8, 2.5};
        Rng rng(5);
        Tensor<float> a({10000, 2});
        for (int64_t i = 0; i < a.numel(); ++i)
            a[i] = static_cast<float>(rng.uniform(st.min[i % 2], st.max[i % 2]));
        Tensor<float> rt = denormalize_actions(normalize_actions(a, st), st);
        for (int64_t i = 0; i < a.numel(); ++i)
            if (std::abs(rt[i] - a[i]) > 1e-6f) {
                ok = false;
                why += " normalization round-trip over 1e-6;";
                break;
            }
    }
    // Windowing edge cases for every t.
    {
        ToyTask t;
        t.image_size = 24;
        DemoDataset ds = generate_demos(t, 1, 9);
        const Episode& ep = ds.episodes[0];
        for (int64_t tt = 0; tt < ep.len; ++tt) {
            auto [sw, aw] = window(ep, tt, 2, 8);
            for (int64_t idx : sw.indices)
                if (idx < 0 || idx >= ep.len) {
                    ok = false;
                    why += " window index out of bounds;";
                }
            if (sw.indices[0] != std::max<int64_t>(0, tt - 1) || sw.indices[1] != tt) {
                ok = false;
                why += " window state indices wrong;";
            }
            for (int i = 0; i < 8; ++i) {
                int64_t src = std::min(ep.len - 1, tt + i);
                if (aw.actions[i * 2] != ep.actions[src * 2]) {
                    ok = false;
                    why += " window action padding wrong;";
                    break;
                }
            }
        }
    }
    // Expert self-test: >= 95 of 100 random episodes reach 0.9 coverage.
    int solved = 0;
    {
        ToyTask task;
        for (int ep = 0; ep < 100; ++ep) {
            Rng rng = stream_rng(5000, "expert-selftest", static_cast<uint64_t>(ep));
            ToyEnvState s = sample_init(task, rng);
            for (int t = 0; t < task.max_steps; ++t) {
                s = toy_step(task, s, scripted_expert(task, s));
                if (coverage(task, s) >= 0.9) break;
            }
            if (coverage(task, s) >= 0.9) ++solved;
        }
        if (solved < 95) {
            ok = false;
            why += " expert solves only " + std::to_string(solved) + "/100;";
        }
    }
    report(8, ok, "data formats, normalization, windowing, expert self-test " +
                      std::to_string(solved) + "/100, " + fmt(timer.seconds()) + "s" + why);
}

// -------------------------------------------------------------- criterion 9

void criterion_9(const std::filesystem::path& work) {
    Timer timer;
    bool ok = true;
    std::string why;
    const DemoDataset& ds = tiny_dataset();
    Schedule sched = make_schedule(10);
    {
        ModelConfig cfg = tiny_config(Variant::crossway, Design::A, 8);
        PolicyModel<float> model(cfg, 66);
        NormStats norm = ds.norm;
        ToyTask task;
        task.image_size = 24;
        task.max_steps = 24;
        evaluate(model, norm, task, sched, 2, {1, 2}, 5, SamplerKind::ddim);
        if (model.ds_invocations != 0) {
            ok = false;
            why += " state decoder invoked " + std::to_string(model.ds_invocations) + " times;";
        }
    }
    {
        ModelConfig cfg = tiny_config(Variant::baseline, Design::A, 8);
        TrainSettings ts;
        ts.epochs = 1;
        ts.batch = 4;
        ts.max_steps = 1;
        ts.seed = 2;
        ts.quiet = true;
        std::filesystem::remove_all(work / "purity");
        auto res = train(cfg, sched, ts, ds, work / "purity");
        auto man = read_checkpoint_manifest(res.last_checkpoint);
        for (auto it = man.at("params").begin(); it != man.at("params").end(); ++it)
            if (it.key().rfind("d_s.", 0) == 0) {
                ok = false;
                why += " baseline checkpoint contains " + it.key() + ";";
            }
        std::filesystem::remove_all(work / "purity");
    }
    report(9, ok, "evaluation purity and baseline checkpoint contents, " + fmt(timer.seconds()) +
                      "s" + why);
}

// --------------------------------------------------- criteria 6 and 7 (slow)

std::map<int, std::vector<double>> epoch_totals_from_csv(const std::filesystem::path& csv) {
    auto buf = read_file(csv);
    std::stringstream ss(std::string(buf.begin(), buf.end()));
    std::string line;
    std::getline(ss, line);  // header
    std::map<int, std::vector<double>> by_epoch;
    while (std::getline(ss, line)) {
        int epoch;
        long long step;
        double ld, laux, lt, lr;
        if (std::sscanf(line.c_str(), "%d,%lld,%lf,%lf,%lf,%lf", &epoch, &step, &ld, &laux, &lt,
                        &lr) == 6)
            by_epoch[epoch].push_back(lt);
    }
    return by_epoch;
}

void criteria_6_and_7(const std::filesystem::path& work) {
    Timer timer;
    std::filesystem::create_directories(work);
    const auto demos_dir = work / "demos";

    RunConfig rc;  // Push-T-like defaults: 96/84/96, K=100, T_s=2, T_a=8, batch 64
    rc.unet_width = 64;
    rc.epochs = 50;
    rc.seed = 1;

    ToyTask task = rc.task();
    std::printf("[endtoend] demonstrations: 100 episodes, seed 7\n");
    std::fflush(stdout);
    DemoDataset ds;
    if (std::filesystem::exists(demos_dir / "manifest.json")) {
        ds = load_dataset(demos_dir);
    } else {
        ds = generate_demos(task, 100, 7);
        save_dataset(ds, demos_dir);
    }
    std::printf("[endtoend] dataset: %zu episodes, %lld steps\n", ds.episodes.size(),
                static_cast<long long>(ds.total_steps()));
    std::fflush(stdout);

    Schedule sched = rc.make_sched();
    RunConfig rc_base = rc;
    rc_base.variant = "baseline";

    std::printf("[endtoend] training crossway (design A, alpha 0.1, width 64, 50 epochs)...\n");
    std::fflush(stdout);
    auto res_cross = train(rc.model_config(), sched, rc.train_settings(), ds, work / "crossway");
    std::printf("[endtoend] training baseline...\n");
    std::fflush(stdout);
    auto res_base =
        train(rc_base.model_config(), sched, rc_base.train_settings(), ds, work / "baseline");

    // Gate (a): final epoch-mean loss < 25% of the epoch-1 mean, both runs.
    bool ok6 = true;
    std::string why6;
    for (auto& [name, dir] : std::map<std::string, std::filesystem::path>{
             {"crossway", work / "crossway"}, {"baseline", work / "baseline"}}) {
        auto by_epoch = epoch_totals_from_csv(dir / "loss.csv");
        if (by_epoch.count(1) == 0 || by_epoch.count(rc.epochs) == 0) {
            ok6 = false;
            why6 += " missing epochs in " + name + " loss log;";
            continue;
        }
        auto mean = [](const std::vector<double>& v) {
            double s = 0;
            for (double x : v) s += x;
            return v.empty() ? 0.0 : s / v.size();
        };
        double first = mean(by_epoch.at(1)), last = mean(by_epoch.at(rc.epochs));
        std::printf("[endtoend] %s: epoch-1 mean loss %.4f, final %.4f (ratio %.3f)\n",
                    name.c_str(), first, last, last / first);
        if (!(last < 0.25 * first)) {
            ok6 = false;
            why6 += " " + name + " loss ratio " + fmt(last / first) + " >= 0.25;";
        }
    }

    std::printf("[endtoend] evaluating crossway (50 episodes x 3 seeds, DDPM-100)...\n");
    std::fflush(stdout);
    LoadedPolicy cross = load_policy(res_cross.last_checkpoint, true);
    EvalReport rep_cross =
        evaluate(*cross.model, cross.norm, task, cross.sched, 50, {1, 2, 3}, 100, SamplerKind::ddpm);
    {
        std::string js = rep_cross.to_json_string();
        write_file(work / "eval_crossway.json", js.data(), js.size());
    }
    std::printf("[endtoend] crossway mean coverage %.4f\n", rep_cross.mean);
    std::fflush(stdout);

    std::printf("[endtoend] evaluating baseline...\n");
    std::fflush(stdout);
    LoadedPolicy base = load_policy(res_base.last_checkpoint, true);
    EvalReport rep_base =
        evaluate(*base.model, base.norm, task, base.sched, 50, {1, 2, 3}, 100, SamplerKind::ddpm);
    {
        std::string js = rep_base.to_json_string();
        write_file(work / "eval_baseline.json", js.data(), js.size());
    }
    std::printf("[endtoend] baseline mean coverage %.4f\n", rep_base.mean);
    std::printf("[endtoend] signed difference (crossway - baseline): %+.4f\n",
                rep_cross.mean - rep_base.mean);
    std::fflush(stdout);

    if (!(rep_cross.mean >= 0.6)) {
        ok6 = false;
        why6 += " crossway mean " + fmt(rep_cross.mean) + " < 0.6;";
    }
    if (!(rep_cross.mean >= rep_base.mean - 0.03)) {
        ok6 = false;
        why6 += " crossway regresses beyond noise (" + fmt(rep_cross.mean) + " vs baseline " +
                fmt(rep_base.mean) + ");";
    }
    report(6, ok6, "desk-scale end-to-end: crossway " + fmt(rep_cross.mean) + ", baseline " +
                       fmt(rep_base.mean) + ", diff " + fmt(rep_cross.mean - rep_base.mean) + ", " +
                       fmt(timer.seconds()) + "s" + why6);

    // Criterion 7: DDIM sweep on the crossway model.
    Timer timer7;
    std::printf("[endtoend] ddim sweep 10..100 by 10...\n");
    std::fflush(stdout);
    std::vector<int> steps_list;
    for (int s = 10; s <= 100; s += 10) steps_list.push_back(s);
    auto rows = ddim_sweep(*cross.model, cross.norm, task, cross.sched, steps_list, 50, {1, 2, 3},
                           work / "sweep.csv", work / "sweep.png");
    bool ok7 = rows.size() == 10;
    std::string why7;
    double m10 = rows.front().mean, m100 = rows.back().mean;
    if (!(m10 <= m100 + 0.05)) {
        ok7 = false;
        why7 += " 10-step mean " + fmt(m10) + " exceeds 100-step mean " + fmt(m100) + " + 0.05;";
    }
    if (!(std::abs(m100 - rep_cross.mean) <= 0.02)) {
        ok7 = false;
        why7 += " ddim-100 mean " + fmt(m100) + " differs from the full-step mean " +
                fmt(rep_cross.mean) + " by more than 0.02;";
    }
    report(7, ok7, "ddim sweep: 10-step " + fmt(m10) + ", 100-step " + fmt(m100) + ", full-step " +
                       fmt(rep_cross.mean) + ", " + fmt(timer7.seconds()) + "s" + why7);
}

}  // namespace

int main(int argc, char** argv) {
    bool fast = false, endtoend = false;
    std::filesystem::path work = std::filesystem::temp_directory_path() / "crossway_acceptance";
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--fast"))
            fast = true;
        else if (!std::strcmp(argv[i], "--endtoend"))
            endtoend = true;
        else if (!std::strcmp(argv[i], "--work-dir") && i + 1 < argc)
            work = argv[++i];
        else {
            std::fprintf(stderr, "usage: acceptance [--fast] [--endtoend] [--work-dir DIR]\n");
            return 2;
        }
    }
    if (!fast && !endtoend) fast = true;
    std::filesystem::create_directories(work);

    if (fast) {
        criterion_1();
        criterion_2();
        criterion_3(work);
        criterion_4();
        criterion_5();
        criterion_8();
        criterion_9(work);
    }
    if (endtoend) criteria_6_and_7(work);

    if (g_failures) {
        std::printf("%d criterion(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("all checked criteria PASS\n");
    return 0;
}
