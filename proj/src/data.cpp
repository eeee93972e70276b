#include "crossway/data.hpp"

#include <json.hpp>

namespace crossway {

using nlohmann::json;

std::pair<StateWindow, ActionWindow> window(const Episode& ep, int64_t t, int t_obs, int t_act) {
    if (t < 0 || t >= ep.len) throw std::invalid_argument("window: t out of range");
    StateWindow sw;
    sw.t = t;
    for (int i = 0; i < t_obs; ++i) sw.indices.push_back(std::max<int64_t>(0, t - t_obs + 1 + i));

    const int64_t H = ep.images.empty() ? 0 : ep.images[0].shape[1];
    const int64_t W = ep.images.empty() ? 0 : ep.images[0].shape[2];
    for (const auto& cam : ep.images) {
        Tensor<float> frames({t_obs, H, W, 3});
        const int64_t fsz = H * W * 3;
        for (int i = 0; i < t_obs; ++i)
            std::copy(cam.ptr() + sw.indices[static_cast<size_t>(i)] * fsz,
                      cam.ptr() + (sw.indices[static_cast<size_t>(i)] + 1) * fsz,
                      frames.ptr() + i * fsz);
        sw.images.push_back(std::move(frames));
    }
    const int64_t L = ep.lowdim.shape[1];
    sw.lowdim = Tensor<float>({t_obs, L});
    for (int i = 0; i < t_obs; ++i)
        std::copy(ep.lowdim.ptr() + sw.indices[static_cast<size_t>(i)] * L,
                  ep.lowdim.ptr() + (sw.indices[static_cast<size_t>(i)] + 1) * L,
                  sw.lowdim.ptr() + i * L);

    ActionWindow aw;
    aw.t0 = t;
    const int64_t A = ep.actions.shape[1];
    aw.actions = Tensor<float>({t_act, A});
    for (int i = 0; i < t_act; ++i) {
        int64_t src = std::min<int64_t>(ep.len - 1, t + i);
        std::copy(ep.actions.ptr() + src * A, ep.actions.ptr() + (src + 1) * A,
                  aw.actions.ptr() + i * A);
    }
    return {std::move(sw), std::move(aw)};
}

namespace {

Tensor<float> crop_at(const Tensor<float>& frames, int64_t oy, int64_t ox, int ch, int cw) {
    const int64_t T = frames.shape[0], H = frames.shape[1], W = frames.shape[2];
    Tensor<float> out({T, ch, cw, 3});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t y = 0; y < ch; ++y)
            std::copy(frames.ptr() + ((t * H + oy + y) * W + ox) * 3,
                      frames.ptr() + ((t * H + oy + y) * W + ox + cw) * 3,
                      out.ptr() + ((t * ch + y) * cw) * 3);
    return out;
}

}  // namespace

Tensor<float> random_crop(const Tensor<float>& frames, int crop_h, int crop_w, Rng& rng) {
    const int64_t H = frames.shape[1], W = frames.shape[2];
    if (crop_h > H || crop_w > W) throw std::invalid_argument("random_crop: crop larger than image");
    int64_t oy = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(H - crop_h + 1)));
    int64_t ox = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(W - crop_w + 1)));
    return crop_at(frames, oy, ox, crop_h, crop_w);
}

Tensor<float> center_crop(const Tensor<float>& frames, int crop_h, int crop_w) {
    const int64_t H = frames.shape[1], W = frames.shape[2];
    if (crop_h > H || crop_w > W) throw std::invalid_argument("center_crop: crop larger than image");
    return crop_at(frames, (H - crop_h) / 2, (W - crop_w) / 2, crop_h, crop_w);
}

Tensor<float> resize_bilinear(const Tensor<float>& img, int out_h, int out_w) {
    const int64_t H = img.shape[0], W = img.shape[1];
    if (H == out_h && W == out_w) return img;
    Tensor<float> out({out_h, out_w, 3});
    const double sy = static_cast<double>(H) / out_h;
    const double sx = static_cast<double>(W) / out_w;
    for (int64_t y = 0; y < out_h; ++y) {
        double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
        int64_t y0 = static_cast<int64_t>(fy);
        int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
        double wy = fy - y0;
        for (int64_t x = 0; x < out_w; ++x) {
            double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
            int64_t x0 = static_cast<int64_t>(fx);
            int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
            double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                double v00 = img[(y0 * W + x0) * 3 + c], v01 = img[(y0 * W + x1) * 3 + c];
                double v10 = img[(y1 * W + x0) * 3 + c], v11 = img[(y1 * W + x1) * 3 + c];
                out[(y * out_w + x) * 3 + c] = static_cast<float>(
                    (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11));
            }
        }
    }
    return out;
}

ReconTarget build_target(const Episode& ep, const StateWindow& sw, int n_ahead, int rec_h,
                         int rec_w) {
    if (n_ahead < 0) throw std::invalid_argument("build_target: N must be >= 0");
    ReconTarget tgt;
    tgt.n_ahead = n_ahead;
    const int t_obs = static_cast<int>(sw.indices.size());
    std::vector<int64_t> idx(sw.indices);
    for (auto& i : idx) i = std::min<int64_t>(ep.len - 1, i + n_ahead);

    const int64_t H = ep.images.empty() ? 0 : ep.images[0].shape[1];
    const int64_t W = ep.images.empty() ? 0 : ep.images[0].shape[2];
    for (const auto& cam : ep.images) {
        Tensor<float> stacked({int64_t(3) * t_obs, rec_h, rec_w});
        for (int t = 0; t < t_obs; ++t) {
            Tensor<float> frame({H, W, 3});
            std::copy(cam.ptr() + idx[static_cast<size_t>(t)] * H * W * 3,
                      cam.ptr() + (idx[static_cast<size_t>(t)] + 1) * H * W * 3, frame.ptr());
            Tensor<float> r = resize_bilinear(frame, rec_h, rec_w);
            // HWC -> CHW into the stacked channel slots.
            for (int c = 0; c < 3; ++c)
                for (int64_t y = 0; y < rec_h; ++y)
                    for (int64_t x = 0; x < rec_w; ++x)
                        stacked[((int64_t(3) * t + c) * rec_h + y) * rec_w + x] =
                            r[(y * rec_w + x) * 3 + c];
        }
        tgt.images.push_back(std::move(stacked));
    }
    const int64_t L = ep.lowdim.shape[1];
    tgt.lowdim = Tensor<float>({t_obs * L});
    for (int t = 0; t < t_obs; ++t)
        std::copy(ep.lowdim.ptr() + idx[static_cast<size_t>(t)] * L,
                  ep.lowdim.ptr() + (idx[static_cast<size_t>(t)] + 1) * L, tgt.lowdim.ptr() + t * L);
    return tgt;
}

DemoDataset generate_demos(const ToyTask& task, int n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_demos: n must be >= 1");
    DemoDataset ds;
    ds.seed = seed;
    ds.img_h = ds.img_w = task.image_size;
    ds.n_cameras = 1;
    ds.lowdim_dim = 2;
    ds.action_dim = 2;

    int attempt = 0;
    while (static_cast<int>(ds.episodes.size()) < n) {
        Rng init_rng = stream_rng(seed, "demo-init", static_cast<uint64_t>(attempt++));
        ToyEnvState s = sample_init(task, init_rng);
        TensorStorage<float> imgs, low, act;
        int64_t len = 0;
        bool success = false;
        auto record = [&](const ToyEnvState& st, const std::array<double, 2>& a) {
            Tensor<float> frame = render(task, st);
            imgs.insert(imgs.end(), frame.data.begin(), frame.data.end());
            low.push_back(static_cast<float>(st.agent.x));
            low.push_back(static_cast<float>(st.agent.y));
            act.push_back(static_cast<float>(a[0]));
            act.push_back(static_cast<float>(a[1]));
            ++len;
        };
        for (int t = 0; t < task.max_steps; ++t) {
            auto a = scripted_expert(task, s);
            record(s, a);
            s = toy_step(task, s, a);
            if (coverage(task, s) >= task.success_coverage) {
                success = true;
                // A short hold tail teaches the policy to stay put on the target.
                for (int h = 0; h < 3; ++h) {
                    std::array<double, 2> hold{s.agent.x, s.agent.y};
                    record(s, hold);
                    s = toy_step(task, s, hold);
                }
                break;
            }
        }
        if (!success || len < 16) continue;
        Episode ep;
        ep.len = len;
        Tensor<float> im({len, task.image_size, task.image_size, 3});
        im.data = std::move(imgs);
        ep.images.push_back(std::move(im));
        ep.lowdim = Tensor<float>({len, 2});
        ep.lowdim.data = std::move(low);
        ep.actions = Tensor<float>({len, 2});
        ep.actions.data = std::move(act);
        ds.episodes.push_back(std::move(ep));
    }

    ds.norm.min.assign(static_cast<size_t>(ds.action_dim), 1e30);
    ds.norm.max.assign(static_cast<size_t>(ds.action_dim), -1e30);
    for (const auto& ep : ds.episodes)
        for (int64_t i = 0; i < ep.actions.numel(); ++i) {
            size_t d = static_cast<size_t>(i % ds.action_dim);
            ds.norm.min[d] = std::min(ds.norm.min[d], static_cast<double>(ep.actions[i]));
            ds.norm.max[d] = std::max(ds.norm.max[d], static_cast<double>(ep.actions[i]));
        }
    for (size_t d = 0; d < ds.norm.min.size(); ++d)
        if (!(ds.norm.max[d] > ds.norm.min[d])) ds.norm.max[d] = ds.norm.min[d] + 1e-6;
    return ds;
}

namespace {

json blob_meta(const std::filesystem::path& dir, const std::string& rel,
               const Tensor<float>& t) {
    write_blob(dir / rel, t.data);
    json j;
    j["path"] = rel;
    j["shape"] = t.shape;
    j["dtype"] = "f32le";
    j["crc32"] = crc32(t.data.data(), t.data.size() * sizeof(float));
    return j;
}

Tensor<float> load_blob(const std::filesystem::path& dir, const json& meta) {
    std::vector<int64_t> shape = meta.at("shape").get<std::vector<int64_t>>();
    if (meta.at("dtype").get<std::string>() != "f32le")
        throw IntegrityError("dataset blob: unexpected dtype");
    Tensor<float> t(shape, Tensor<float>::Uninit{});
    read_blob_into(dir / meta.at("path").get<std::string>(), t.ptr(),
                   static_cast<size_t>(t.numel()));
    uint32_t crc = crc32(t.ptr(), static_cast<size_t>(t.numel()) * sizeof(float));
    if (crc != meta.at("crc32").get<uint32_t>())
        throw IntegrityError("dataset blob checksum mismatch: " +
                             meta.at("path").get<std::string>());
    return t;
}

}  // namespace

void save_dataset(const DemoDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json man;
    man["format"] = "crossway-demos-1";
    man["seed"] = ds.seed;
    man["img_h"] = ds.img_h;
    man["img_w"] = ds.img_w;
    man["n_cameras"] = ds.n_cameras;
    man["lowdim_dim"] = ds.lowdim_dim;
    man["action_dim"] = ds.action_dim;
    man["norm"] = {{"min", ds.norm.min}, {"max", ds.norm.max}};
    man["episodes"] = json::array();
    for (size_t i = 0; i < ds.episodes.size(); ++i) {
        const Episode& ep = ds.episodes[i];
        std::string sub = "ep" + std::to_string(i);
        std::filesystem::create_directories(dir / sub);
        json j;
        j["len"] = ep.len;
        for (size_t cam = 0; cam < ep.images.size(); ++cam)
            j["images_cam" + std::to_string(cam)] =
                blob_meta(dir, sub + "/images_cam" + std::to_string(cam) + ".bin", ep.images[cam]);
        j["lowdim"] = blob_meta(dir, sub + "/lowdim.bin", ep.lowdim);
        j["actions"] = blob_meta(dir, sub + "/actions.bin", ep.actions);
        man["episodes"].push_back(std::move(j));
    }
    std::string text = man.dump(2);
    write_file(dir / "manifest.json", text.data(), text.size());
}

DemoDataset load_dataset(const std::filesystem::path& dir) {
    json man;
    try {
        man = json::parse(read_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw IntegrityError("dataset manifest parse error: " + std::string(e.what()));
    }
    if (man.value("format", "") != "crossway-demos-1")
        throw IntegrityError("dataset manifest: unknown format");
    DemoDataset ds;
    ds.seed = man.at("seed").get<uint64_t>();
    ds.img_h = man.at("img_h").get<int>();
    ds.img_w = man.at("img_w").get<int>();
    ds.n_cameras = man.at("n_cameras").get<int>();
    ds.lowdim_dim = man.at("lowdim_dim").get<int>();
    ds.action_dim = man.at("action_dim").get<int>();
    ds.norm.min = man.at("norm").at("min").get<std::vector<double>>();
    ds.norm.max = man.at("norm").at("max").get<std::vector<double>>();
    ds.norm.validate();
    int64_t rows = 0;
    for (const auto& j : man.at("episodes")) {
        Episode ep;
        ep.len = j.at("len").get<int64_t>();
        for (int cam = 0; cam < ds.n_cameras; ++cam)
            ep.images.push_back(load_blob(dir, j.at("images_cam" + std::to_string(cam))));
        ep.lowdim = load_blob(dir, j.at("lowdim"));
        ep.actions = load_blob(dir, j.at("actions"));
        if (ep.images[0].shape[0] != ep.len || ep.lowdim.shape[0] != ep.len ||
            ep.actions.shape[0] != ep.len)
            throw IntegrityError("dataset episode length inconsistent with arrays");
        rows += ep.len;
        ds.episodes.push_back(std::move(ep));
    }
    (void)rows;
    return ds;
}

}  // namespace crossway
