#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "crossway/rollout.hpp"

namespace py = pybind11;
using namespace crossway;

namespace {

Tensor<double> to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Tensor<double> t;
    t.shape.assign(a.shape(), a.shape() + a.ndim());
    t.data.assign(a.data(), a.data() + a.size());
    return t;
}

py::array_t<double> to_array(const Tensor<double>& t) {
    py::array_t<double> a(t.shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

py::array_t<float> to_array_f(const Tensor<float>& t) {
    py::array_t<float> a(t.shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

// Inference-side wrapper around a checkpoint directory.
struct Policy {
    LoadedPolicy lp;

    explicit Policy(const std::string& dir, bool use_ema) : lp(load_policy(dir, use_ema)) {}

    py::array_t<float> act(
        py::array_t<float, py::array::c_style | py::array::forcecast> images,
        py::array_t<float, py::array::c_style | py::array::forcecast> lowdim, int n_steps,
        const std::string& sampler, uint64_t seed) {
        const ModelConfig& cfg = lp.cfg;
        if (images.ndim() != 4 || images.shape(0) != cfg.t_obs || images.shape(3) != 3)
            throw std::invalid_argument("images must be [T_s, H, W, 3]");
        // Center-crop to the encoder resolution, HWC -> CHW.
        Tensor<float> frames({cfg.t_obs, images.shape(1), images.shape(2), 3});
        std::copy(images.data(), images.data() + images.size(), frames.ptr());
        Tensor<float> cropped = center_crop(frames, cfg.crop_h, cfg.crop_w);
        Tensor<float> in({1, cfg.t_obs, cfg.n_cameras, 3, cfg.crop_h, cfg.crop_w});
        const int64_t hw = int64_t(cfg.crop_h) * cfg.crop_w;
        for (int t = 0; t < cfg.t_obs; ++t)
            for (int c = 0; c < 3; ++c)
                for (int64_t i = 0; i < hw; ++i)
                    in[(int64_t(t) * 3 + c) * hw + i] = cropped[(int64_t(t) * hw + i) * 3 + c];
        Tensor<float> ld({1, cfg.t_obs, cfg.lowdim});
        if (lowdim.size() != ld.numel()) throw std::invalid_argument("lowdim must be [T_s, L]");
        std::copy(lowdim.data(), lowdim.data() + lowdim.size(), ld.ptr());

        NoGradGuard ng;
        Var<float> cond = lp.model->condition(in, ld);
        Rng rng(seed);
        auto steps = subsample_steps(lp.sched.K, n_steps > 0 ? n_steps : lp.sched.K);
        SamplerKind sk = sampler == "ddim" ? SamplerKind::ddim : SamplerKind::ddpm;
        Tensor<float> plan = denoise_sequence(*lp.model, cond, 1, lp.sched, steps, rng, sk);
        Tensor<float> acts = denormalize_actions(plan, lp.norm);
        return to_array_f(acts.reshaped({int64_t(cfg.t_act), cfg.action_dim}));
    }

    py::dict evaluate_py(int episodes, std::vector<uint64_t> seeds, int n_steps,
                         const std::string& sampler, int max_steps) {
        ToyTask task;
        task.image_size = lp.cfg.img_h;
        task.max_steps = max_steps;
        SamplerKind sk = sampler == "ddim" ? SamplerKind::ddim : SamplerKind::ddpm;
        EvalReport rep = evaluate(*lp.model, lp.norm, task, lp.sched, episodes, seeds,
                                  n_steps > 0 ? n_steps : lp.sched.K, sk);
        py::dict d;
        d["mean"] = rep.mean;
        d["seed_means"] = rep.seed_means;
        d["scores"] = rep.scores;
        if (rep.std_seeds) d["std_seeds"] = *rep.std_seeds;
        return d;
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Diffusion-based behavioral cloning on a toy 2-D pusher";

    py::enum_<ScheduleKind>(m, "ScheduleKind")
        .value("squared_cosine", ScheduleKind::squared_cosine)
        .value("linear", ScheduleKind::linear);

    py::class_<Schedule>(m, "Schedule")
        .def_readonly("K", &Schedule::K)
        .def_readonly("betas", &Schedule::betas)
        .def_readonly("alphas", &Schedule::alphas)
        .def_readonly("alpha_bars", &Schedule::alpha_bars)
        .def_readonly("sigmas", &Schedule::sigmas);

    m.def("make_schedule", &make_schedule, py::arg("K"),
          py::arg("kind") = ScheduleKind::squared_cosine, py::arg("beta_start") = 1e-4,
          py::arg("beta_end") = 0.02);
    m.def("subsample_steps", &subsample_steps, py::arg("K"), py::arg("n"));
    m.def("q_sample", [](py::array_t<double> x0, int k, py::array_t<double> eps, const Schedule& s) {
        return to_array(q_sample(to_tensor(x0), k, to_tensor(eps), s));
    });
    m.def("ddpm_step", [](py::array_t<double> xk, py::array_t<double> eps, int k,
                          py::array_t<double> z, const Schedule& s) {
        return to_array(ddpm_step(to_tensor(xk), to_tensor(eps), k, to_tensor(z), s));
    });
    m.def("ddim_step", [](py::array_t<double> xk, py::array_t<double> eps, int k_from, int k_to,
                          const Schedule& s) {
        return to_array(ddim_step(to_tensor(xk), to_tensor(eps), k_from, k_to, s));
    });

    py::class_<Vec2>(m, "Vec2")
        .def_readwrite("x", &Vec2::x)
        .def_readwrite("y", &Vec2::y);
    py::class_<Pose>(m, "Pose")
        .def_readwrite("p", &Pose::p)
        .def_readwrite("theta", &Pose::theta);
    py::class_<ToyTask>(m, "ToyTask")
        .def(py::init<>())
        .def_readwrite("image_size", &ToyTask::image_size)
        .def_readwrite("max_steps", &ToyTask::max_steps)
        .def_readwrite("success_coverage", &ToyTask::success_coverage);
    py::class_<ToyEnvState>(m, "ToyEnvState")
        .def(py::init<>())
        .def_readwrite("agent", &ToyEnvState::agent)
        .def_readwrite("block", &ToyEnvState::block)
        .def_readwrite("step", &ToyEnvState::step);

    m.def("sample_init", [](const ToyTask& t, uint64_t seed) {
        Rng rng(seed);
        return sample_init(t, rng);
    });
    m.def("toy_step", [](const ToyTask& t, const ToyEnvState& s, double ax, double ay) {
        return toy_step(t, s, {ax, ay});
    });
    m.def("coverage", [](const ToyTask& t, const ToyEnvState& s) { return coverage(t, s); });
    m.def("scripted_expert", [](const ToyTask& t, const ToyEnvState& s) {
        auto a = scripted_expert(t, s);
        return py::make_tuple(a[0], a[1]);
    });
    m.def("render", [](const ToyTask& t, const ToyEnvState& s) { return to_array_f(render(t, s)); });

    m.def("generate_demos", [](int n, uint64_t seed, const std::string& out) {
        ToyTask task;
        DemoDataset ds = generate_demos(task, n, seed);
        save_dataset(ds, out);
        return ds.episodes.size();
    });

    py::class_<Policy>(m, "Policy")
        .def(py::init<const std::string&, bool>(), py::arg("checkpoint"), py::arg("use_ema") = true)
        .def("act", &Policy::act, py::arg("images"), py::arg("lowdim"), py::arg("n_steps") = 0,
             py::arg("sampler") = "ddpm", py::arg("seed") = 0)
        .def("evaluate", &Policy::evaluate_py, py::arg("episodes"), py::arg("seeds"),
             py::arg("n_steps") = 0, py::arg("sampler") = "ddpm", py::arg("max_steps") = 300);
}
