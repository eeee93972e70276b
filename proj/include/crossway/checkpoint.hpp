#pragma once

#include <json.hpp>

#include "crossway/data.hpp"
#include "crossway/model.hpp"
#include "crossway/objectives.hpp"

namespace crossway {

// Checkpoint directory layout:
//   manifest.json        architecture config, schedule meta, norm stats, EMA
//                        decay, epoch, optimizer step count
//   schedule_betas.bin   float64 LE beta array (sampling is bit-reproducible)
//   params/<name>.bin    one float32 LE row-major blob per named parameter
//   ema/<name>.bin       the EMA shadow copy
//   opt/<name>.{m,v}.bin optimizer moments (present when saved by training)

namespace ckptdet {

inline nlohmann::json model_config_json(const ModelConfig& c) {
    nlohmann::json j;
    j["n_cameras"] = c.n_cameras;
    j["img_h"] = c.img_h;
    j["img_w"] = c.img_w;
    j["crop_h"] = c.crop_h;
    j["crop_w"] = c.crop_w;
    j["rec_h"] = c.rec_h;
    j["rec_w"] = c.rec_w;
    j["lowdim"] = c.lowdim;
    j["action_dim"] = c.action_dim;
    j["t_obs"] = c.t_obs;
    j["t_act"] = c.t_act;
    j["unet_width"] = c.unet_width;
    j["enc_width"] = c.enc_width;
    j["vis_emb"] = c.vis_emb;
    j["pe_channels"] = c.pe_channels;
    j["shallower_decoder"] = c.shallower_decoder;
    j["design"] = std::string(1, design_letter(c.design));
    j["variant"] = to_string(c.variant);
    j["alpha"] = c.alpha;
    j["n_ahead"] = c.n_ahead;
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_cameras = j.at("n_cameras").get<int>();
    c.img_h = j.at("img_h").get<int>();
    c.img_w = j.at("img_w").get<int>();
    c.crop_h = j.at("crop_h").get<int>();
    c.crop_w = j.at("crop_w").get<int>();
    c.rec_h = j.at("rec_h").get<int>();
    c.rec_w = j.at("rec_w").get<int>();
    c.lowdim = j.at("lowdim").get<int>();
    c.action_dim = j.at("action_dim").get<int>();
    c.t_obs = j.at("t_obs").get<int>();
    c.t_act = j.at("t_act").get<int>();
    c.unet_width = j.at("unet_width").get<int>();
    c.enc_width = j.at("enc_width").get<int>();
    c.vis_emb = j.at("vis_emb").get<int>();
    c.pe_channels = j.at("pe_channels").get<int>();
    c.shallower_decoder = j.at("shallower_decoder").get<bool>();
    c.design = design_from_string(j.at("design").get<std::string>());
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.alpha = j.at("alpha").get<double>();
    c.n_ahead = j.at("n_ahead").get<int>();
    return c;
}

template <class S>
void write_param_blob(const std::filesystem::path& path, const Tensor<S>& t) {
    std::vector<float> v(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) v[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    write_blob(path, v);
}

template <class S>
void read_param_blob(const std::filesystem::path& path, Tensor<S>& t) {
    auto v = read_blob<float>(path, static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(v[static_cast<size_t>(i)]);
}

}  // namespace ckptdet

struct CheckpointMeta {
    int epoch = 0;
    int64_t adam_t = 0;
    double ema_decay = 0.999;
    uint64_t train_seed = 0;
    bool has_optimizer = false;
};

template <class S>
void save_checkpoint(const std::filesystem::path& dir, const PolicyModel<S>& model,
                     const PolicyModel<S>* ema_model, const AdamW<S>* adam, const Schedule& sched,
                     const NormStats& norm, const CheckpointMeta& meta) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "params");
    if (ema_model) fs::create_directories(dir / "ema");
    if (adam) fs::create_directories(dir / "opt");

    nlohmann::json man;
    man["format"] = "crossway-ckpt-1";
    man["model"] = ckptdet::model_config_json(model.cfg);
    man["schedule"] = {{"K", sched.K}, {"kind", to_string(sched.kind)}, {"betas_file", "schedule_betas.bin"}};
    man["norm"] = {{"min", norm.min}, {"max", norm.max}};
    man["epoch"] = meta.epoch;
    man["ema_decay"] = meta.ema_decay;
    man["train_seed"] = meta.train_seed;
    man["adam_t"] = meta.adam_t;
    man["has_optimizer"] = adam != nullptr;
    man["has_ema"] = ema_model != nullptr;
    write_blob(dir / "schedule_betas.bin", sched.betas);

    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, p] : model.params.items) {
        ckptdet::write_param_blob(dir / "params" / (name + ".bin"), p.val());
        params[name] = p.val().shape;
    }
    man["params"] = params;
    if (ema_model) {
        if (ema_model->params.items.size() != model.params.items.size())
            throw std::logic_error("ema model parameter mismatch");
        for (const auto& [name, p] : ema_model->params.items)
            ckptdet::write_param_blob(dir / "ema" / (name + ".bin"), p.val());
    }
    if (adam) {
        for (size_t i = 0; i < model.params.items.size(); ++i) {
            const auto& name = model.params.items[i].first;
            ckptdet::write_param_blob(dir / "opt" / (name + ".m.bin"), adam->m[i]);
            ckptdet::write_param_blob(dir / "opt" / (name + ".v.bin"), adam->v[i]);
        }
    }
    std::string text = man.dump(2);
    write_file(dir / "manifest.json", text.data(), text.size());
}

inline nlohmann::json read_checkpoint_manifest(const std::filesystem::path& dir) {
    nlohmann::json man;
    try {
        man = nlohmann::json::parse(read_file(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("checkpoint manifest parse error: " + std::string(e.what()));
    }
    if (man.value("format", "") != "crossway-ckpt-1")
        throw IntegrityError("checkpoint manifest: unknown format");
    return man;
}

// Loads blobs into an existing model. The stored parameter-name set must
// equal the model's.
template <class S>
CheckpointMeta load_checkpoint_params(const std::filesystem::path& dir, PolicyModel<S>& model,
                                      bool use_ema, PolicyModel<S>* ema_out = nullptr,
                                      AdamW<S>* adam_out = nullptr) {
    auto man = read_checkpoint_manifest(dir);
    const auto& params = man.at("params");
    if (params.size() != model.params.items.size())
        throw IntegrityError("checkpoint parameter-name set differs from model");
    for (const auto& [name, p] : model.params.items) {
        if (!params.contains(name))
            throw IntegrityError("checkpoint missing parameter: " + name);
        if (params.at(name).template get<std::vector<int64_t>>() != p.val().shape)
            throw IntegrityError("checkpoint parameter shape mismatch: " + name);
    }
    const char* sub = use_ema ? "ema" : "params";
    if (use_ema && !man.value("has_ema", false))
        throw IntegrityError("checkpoint has no EMA weights");
    for (auto& [name, p] : model.params.items)
        ckptdet::read_param_blob(dir / sub / (name + ".bin"), p.val());
    if (ema_out) {
        for (auto& [name, p] : ema_out->params.items)
            ckptdet::read_param_blob(dir / "ema" / (name + ".bin"), p.val());
    }
    CheckpointMeta meta;
    meta.epoch = man.at("epoch").get<int>();
    meta.adam_t = man.at("adam_t").get<int64_t>();
    meta.ema_decay = man.at("ema_decay").get<double>();
    meta.train_seed = man.at("train_seed").get<uint64_t>();
    meta.has_optimizer = man.value("has_optimizer", false);
    if (adam_out) {
        if (!meta.has_optimizer) throw IntegrityError("checkpoint has no optimizer state");
        adam_out->init(model.params);
        adam_out->t = meta.adam_t;
        for (size_t i = 0; i < model.params.items.size(); ++i) {
            const auto& name = model.params.items[i].first;
            ckptdet::read_param_blob(dir / "opt" / (name + ".m.bin"), adam_out->m[i]);
            ckptdet::read_param_blob(dir / "opt" / (name + ".v.bin"), adam_out->v[i]);
        }
    }
    return meta;
}

// Everything evaluation needs from a checkpoint directory.
struct LoadedPolicy {
    ModelConfig cfg;
    Schedule sched;
    NormStats norm;
    std::unique_ptr<PolicyModel<float>> model;
    CheckpointMeta meta;
};

inline LoadedPolicy load_policy(const std::filesystem::path& dir, bool use_ema = true) {
    auto man = read_checkpoint_manifest(dir);
    LoadedPolicy lp;
    lp.cfg = ckptdet::model_config_from_json(man.at("model"));
    int K = man.at("schedule").at("K").get<int>();
    auto betas = read_blob<double>(dir / man.at("schedule").at("betas_file").get<std::string>(),
                                   static_cast<size_t>(K));
    lp.sched = schedule_from_betas(std::move(betas),
                                   schedule_kind_from_string(man.at("schedule").at("kind").get<std::string>()));
    lp.norm.min = man.at("norm").at("min").get<std::vector<double>>();
    lp.norm.max = man.at("norm").at("max").get<std::vector<double>>();
    lp.model = std::make_unique<PolicyModel<float>>(lp.cfg, /*init_seed=*/0);
    lp.meta = load_checkpoint_params(dir, *lp.model, use_ema);
    return lp;
}

}  // namespace crossway
