#include "crossway/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "crossway/util.hpp"

namespace crossway {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int parse_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        unsigned long long r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    }
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("config: bad bool for " + key + ": '" + v + "'");
}

std::vector<uint64_t> parse_u64_list(const std::string& v, const std::string& key) {
    std::vector<uint64_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_u64(item, key));
    }
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig c;
    using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
    static const std::map<std::string, std::map<std::string, Setter>> schema = {
        {"task",
         {
             {"img_res", [](RunConfig& c, const std::string& v, const std::string& k) { c.img_res = parse_int(v, k); }},
             {"crop_res", [](RunConfig& c, const std::string& v, const std::string& k) { c.crop_res = parse_int(v, k); }},
             {"rec_res", [](RunConfig& c, const std::string& v, const std::string& k) { c.rec_res = parse_int(v, k); }},
             {"action_dim", [](RunConfig& c, const std::string& v, const std::string& k) { c.action_dim = parse_int(v, k); }},
             {"lowdim_dim", [](RunConfig& c, const std::string& v, const std::string& k) { c.lowdim_dim = parse_int(v, k); }},
             {"max_steps", [](RunConfig& c, const std::string& v, const std::string& k) { c.max_steps = parse_int(v, k); }},
         }},
        {"model",
         {
             {"variant", [](RunConfig& c, const std::string& v, const std::string&) { c.variant = v; }},
             {"design", [](RunConfig& c, const std::string& v, const std::string&) { c.design = v; }},
             {"alpha", [](RunConfig& c, const std::string& v, const std::string& k) { c.alpha = parse_double(v, k); }},
             {"n_ahead", [](RunConfig& c, const std::string& v, const std::string& k) { c.n_ahead = parse_int(v, k); }},
             {"unet_width", [](RunConfig& c, const std::string& v, const std::string& k) { c.unet_width = parse_int(v, k); }},
             {"enc_width", [](RunConfig& c, const std::string& v, const std::string& k) { c.enc_width = parse_int(v, k); }},
             {"vis_emb", [](RunConfig& c, const std::string& v, const std::string& k) { c.vis_emb = parse_int(v, k); }},
             {"t_obs", [](RunConfig& c, const std::string& v, const std::string& k) { c.t_obs = parse_int(v, k); }},
             {"t_act", [](RunConfig& c, const std::string& v, const std::string& k) { c.t_act = parse_int(v, k); }},
             {"k", [](RunConfig& c, const std::string& v, const std::string& k) { c.k_steps = parse_int(v, k); }},
             {"schedule", [](RunConfig& c, const std::string& v, const std::string&) { c.schedule = v; }},
             {"shallower_decoder", [](RunConfig& c, const std::string& v, const std::string& k) { c.shallower_decoder = parse_bool(v, k); }},
         }},
        {"train",
         {
             {"epochs", [](RunConfig& c, const std::string& v, const std::string& k) { c.epochs = parse_int(v, k); }},
             {"batch", [](RunConfig& c, const std::string& v, const std::string& k) { c.batch = parse_int(v, k); }},
             {"lr", [](RunConfig& c, const std::string& v, const std::string& k) { c.lr = parse_double(v, k); }},
             {"wd", [](RunConfig& c, const std::string& v, const std::string& k) { c.wd = parse_double(v, k); }},
             {"ema_decay", [](RunConfig& c, const std::string& v, const std::string& k) { c.ema_decay = parse_double(v, k); }},
             {"ema_warmup", [](RunConfig& c, const std::string& v, const std::string& k) { c.ema_warmup = parse_int(v, k); }},
             {"seed", [](RunConfig& c, const std::string& v, const std::string& k) { c.seed = parse_u64(v, k); }},
         }},
        {"eval",
         {
             {"episodes", [](RunConfig& c, const std::string& v, const std::string& k) { c.episodes = parse_int(v, k); }},
             {"seeds", [](RunConfig& c, const std::string& v, const std::string& k) { c.eval_seeds = parse_u64_list(v, k); }},
             {"ddim_steps", [](RunConfig& c, const std::string& v, const std::string& k) { c.ddim_steps = parse_int(v, k); }},
         }},
    };

    std::string section;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string t = trim(line);
        size_t hash = t.find('#');
        if (hash != std::string::npos) t = trim(t.substr(0, hash));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
            section = trim(t.substr(1, t.size() - 2));
            if (!schema.count(section))
                throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" + section + "]");
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (section.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": key outside a section");
        const auto& keys = schema.at(section);
        auto it = keys.find(key);
        if (it == keys.end())
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                              "' in section [" + section + "]");
        it->second(c, value, section + "." + key);
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    auto buf = read_file(path);
    return parse(std::string(buf.begin(), buf.end()));
}

std::string RunConfig::serialize() const {
    std::ostringstream o;
    o << "[task]\n";
    o << "img_res = " << img_res << "\n";
    o << "crop_res = " << crop_res << "\n";
    o << "rec_res = " << rec_res << "\n";
    o << "action_dim = " << action_dim << "\n";
    o << "lowdim_dim = " << lowdim_dim << "\n";
    o << "max_steps = " << max_steps << "\n";
    o << "\n[model]\n";
    o << "variant = " << variant << "\n";
    o << "design = " << design << "\n";
    o << "alpha = " << fmt_double(alpha) << "\n";
    o << "n_ahead = " << n_ahead << "\n";
    o << "unet_width = " << unet_width << "\n";
    o << "enc_width = " << enc_width << "\n";
    o << "vis_emb = " << vis_emb << "\n";
    o << "t_obs = " << t_obs << "\n";
    o << "t_act = " << t_act << "\n";
    o << "k = " << k_steps << "\n";
    o << "schedule = " << schedule << "\n";
    o << "shallower_decoder = " << (shallower_decoder ? "true" : "false") << "\n";
    o << "\n[train]\n";
    o << "epochs = " << epochs << "\n";
    o << "batch = " << batch << "\n";
    o << "lr = " << fmt_double(lr) << "\n";
    o << "wd = " << fmt_double(wd) << "\n";
    o << "ema_decay = " << fmt_double(ema_decay) << "\n";
    o << "ema_warmup = " << ema_warmup << "\n";
    o << "seed = " << seed << "\n";
    o << "\n[eval]\n";
    o << "episodes = " << episodes << "\n";
    o << "seeds = ";
    for (size_t i = 0; i < eval_seeds.size(); ++i) o << (i ? "," : "") << eval_seeds[i];
    o << "\n";
    o << "ddim_steps = " << ddim_steps << "\n";
    return o.str();
}

void RunConfig::validate() const {
    try {
        model_config().validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (epochs < 1 || batch < 1 || episodes < 0) throw ConfigError("config: bad train/eval sizes");
    if (ddim_steps < 1 || ddim_steps > k_steps)
        throw ConfigError("config: ddim_steps must be in [1, k]");
    (void)variant_from_string(variant);
    (void)design_from_string(design);
    (void)schedule_kind_from_string(schedule);
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.img_h = m.img_w = img_res;
    m.crop_h = m.crop_w = crop_res;
    m.rec_h = m.rec_w = rec_res;
    m.action_dim = action_dim;
    m.lowdim = lowdim_dim;
    m.t_obs = t_obs;
    m.t_act = t_act;
    m.unet_width = unet_width;
    m.enc_width = enc_width;
    m.vis_emb = vis_emb;
    m.shallower_decoder = shallower_decoder;
    m.design = design_from_string(design);
    m.variant = variant_from_string(variant);
    m.alpha = alpha;
    m.n_ahead = n_ahead;
    return m;
}

ToyTask RunConfig::task() const {
    ToyTask t;
    t.image_size = img_res;
    t.max_steps = max_steps;
    return t;
}

TrainSettings RunConfig::train_settings() const {
    TrainSettings ts;
    ts.epochs = epochs;
    ts.batch = batch;
    ts.lr = lr;
    ts.wd = wd;
    ts.ema_decay = ema_decay;
    ts.ema_warmup = ema_warmup;
    ts.seed = seed;
    return ts;
}

}  // namespace crossway
