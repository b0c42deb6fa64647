#include <fstream>
#include <sstream>

#include "json.hpp"
#include "soundedit/trainer.hpp"

namespace soundedit {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "soundedit-checkpoint";
constexpr int kVersion = 1;

json tensor_to_json(const Tensor& t) {
    return json{{"shape", t.shape}, {"data", t.data}};
}

Tensor tensor_from_json(const json& j, const std::string& what) {
    if (!j.is_object() || !j.contains("shape") || !j.contains("data"))
        throw IoError("checkpoint: malformed tensor at " + what);
    Tensor t;
    try {
        t.shape = j.at("shape").get<Shape>();
        t.data = j.at("data").get<std::vector<double>>();
    } catch (const json::exception&) {
        throw IoError("checkpoint: malformed tensor at " + what);
    }
    if (t.size() != static_cast<int64_t>(t.data.size()))
        throw IoError("checkpoint: tensor shape/data mismatch at " + what);
    return t;
}

json store_to_json(const ParamStore& store) {
    json arr = json::array();
    for (const auto& [name, t] : store.items) {
        json entry = tensor_to_json(t);
        entry["name"] = name;
        arr.push_back(std::move(entry));
    }
    return json{{"params", std::move(arr)}};
}

ParamStore store_from_json(const json& j, const std::string& what) {
    if (!j.is_object() || !j.contains("params") || !j.at("params").is_array())
        throw IoError("checkpoint: malformed parameter store at " + what);
    ParamStore store;
    for (const json& entry : j.at("params")) {
        if (!entry.contains("name") || !entry.at("name").is_string())
            throw IoError("checkpoint: unnamed parameter in " + what);
        std::string name = entry.at("name").get<std::string>();
        store.add(name, tensor_from_json(entry, what + "." + name));
    }
    return store;
}

GlobalConfig snapshot_config(const Checkpoint& ckpt) {
    GlobalConfig g;
    g.seed = ckpt.train_config.seed;
    g.encoders = ckpt.model_config.encoders;
    g.mapping = ckpt.model_config.mapping;
    g.autoencoder = ckpt.model_config.autoencoder;
    g.schedule = ckpt.model_config.schedule;
    g.denoiser = ckpt.model_config.denoiser;
    g.lora = ckpt.model_config.lora;
    g.train = ckpt.train_config;
    return g;
}

void install_params(ParamStore& dst, const ParamStore& src, const std::string& what) {
    if (dst.count() != src.count())
        throw ConfigError("checkpoint: " + what + " parameter count mismatch");
    for (size_t i = 0; i < dst.items.size(); ++i) {
        if (dst.items[i].first != src.items[i].first)
            throw ConfigError("checkpoint: " + what + " parameter order mismatch at " +
                              src.items[i].first);
        if (!dst.items[i].second.same_shape(src.items[i].second))
            throw ConfigError("checkpoint: " + what + " shape mismatch at " +
                              src.items[i].first);
        dst.items[i].second = src.items[i].second;
    }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    ckpt.validate();
    json root;
    root["format"] = kFormat;
    root["version"] = kVersion;
    root["tag"] = ckpt.tag;
    root["step"] = ckpt.step;
    root["config"] = json::parse(dump_global_config(snapshot_config(ckpt)));
    root["mapping_network"] = store_to_json(ckpt.mapping_params);
    root["lora"] = store_to_json(ckpt.lora_params);
    // Frozen modules travel as reconstruction seeds plus fingerprints — never
    // as weights.
    root["encoders"] = {{"seed", ckpt.model_config.encoders.seed},
                        {"fingerprint", ckpt.encoders_fingerprint}};
    root["autoencoder"] = {{"seed", ckpt.model_config.autoencoder.seed},
                           {"fingerprint", ckpt.autoencoder_fingerprint}};
    root["denoiser"] = {{"seed", ckpt.model_config.denoiser.seed},
                        {"fingerprint", ckpt.denoiser_fingerprint}};
    root["schedule"] = {{"timesteps", ckpt.model_config.schedule.timesteps},
                        {"kind", ckpt.model_config.schedule.kind},
                        {"beta_start", ckpt.model_config.schedule.beta_start},
                        {"beta_end", ckpt.model_config.schedule.beta_end}};
    root["frozen_fingerprint"] = ckpt.frozen_fingerprint;
    json slots = json::array();
    for (const auto& [name, mv] : ckpt.adam_slots)
        slots.push_back(json{{"name", name},
                             {"m", tensor_to_json(mv.first)},
                             {"v", tensor_to_json(mv.second)}});
    root["optimizer"] = {{"kind", "adam"},
                         {"learning_rate", ckpt.adam_config.learning_rate},
                         {"beta1", ckpt.adam_config.beta1},
                         {"beta2", ckpt.adam_config.beta2},
                         {"eps", ckpt.adam_config.eps},
                         {"t", ckpt.adam_step},
                         {"slots", std::move(slots)}};
    root["rng"] = ckpt.rng_state;
    json tail = json::array();
    for (const TrainLogEntry& e : ckpt.log_tail)
        tail.push_back(json{{"step", e.step},
                            {"l_ldm", e.l_ldm},
                            {"l_nce", e.l_nce},
                            {"l_l1", e.l_l1},
                            {"l_total", e.l_total},
                            {"wall_ms", e.wall_ms}});
    root["log_tail"] = std::move(tail);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << root.dump(1) << "\n";
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    json root;
    try {
        root = json::parse(buf.str());
    } catch (const json::exception& e) {
        throw IoError("checkpoint: invalid JSON in " + path + ": " + e.what());
    }
    try {
        if (!root.is_object() || root.value("format", std::string{}) != kFormat)
            throw IoError("checkpoint: unrecognized format in " + path);
        if (root.value("version", 0) != kVersion)
            throw IoError("checkpoint: unsupported version in " + path);

        Checkpoint c;
        c.tag = root.value("tag", std::string{});
        c.step = root.at("step").get<int64_t>();
        GlobalConfig g = parse_global_config(root.at("config").dump());
        c.model_config = g.model();
        c.train_config = g.train;
        c.mapping_params = store_from_json(root.at("mapping_network"), "mapping_network");
        c.lora_params = store_from_json(root.at("lora"), "lora");
        c.encoders_fingerprint = root.at("encoders").at("fingerprint").get<uint64_t>();
        c.autoencoder_fingerprint = root.at("autoencoder").at("fingerprint").get<uint64_t>();
        c.denoiser_fingerprint = root.at("denoiser").at("fingerprint").get<uint64_t>();
        c.frozen_fingerprint = root.at("frozen_fingerprint").get<uint64_t>();
        const json& opt = root.at("optimizer");
        c.adam_config = AdamConfig{opt.at("learning_rate").get<double>(),
                                   opt.at("beta1").get<double>(), opt.at("beta2").get<double>(),
                                   opt.at("eps").get<double>()};
        c.adam_step = opt.at("t").get<int64_t>();
        for (const json& s : opt.at("slots"))
            c.adam_slots[s.at("name").get<std::string>()] = {
                tensor_from_json(s.at("m"), "optimizer.m"),
                tensor_from_json(s.at("v"), "optimizer.v")};
        c.rng_state = root.at("rng").get<std::string>();
        for (const json& e : root.value("log_tail", json::array()))
            c.log_tail.push_back({e.at("step").get<int64_t>(), e.at("l_ldm").get<double>(),
                                  e.at("l_nce").get<double>(), e.at("l_l1").get<double>(),
                                  e.at("l_total").get<double>(), e.at("wall_ms").get<double>()});
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw IoError("checkpoint: missing or mistyped field in " + path + ": " + e.what());
    }
}

EditModel load_model(const Checkpoint& ckpt) {
    ckpt.validate();
    EditModel m = EditModel::build(ckpt.model_config);
    if (m.suite.fingerprint() != ckpt.encoders_fingerprint)
        throw ConfigError("checkpoint: encoder fingerprint mismatch — wrong frozen stack");
    if (m.codec->fingerprint() != ckpt.autoencoder_fingerprint)
        throw ConfigError("checkpoint: autoencoder fingerprint mismatch — wrong frozen stack");
    if (m.denoiser.fingerprint() != ckpt.denoiser_fingerprint)
        throw ConfigError("checkpoint: denoiser fingerprint mismatch — wrong frozen stack");
    install_params(m.mapping.params(), ckpt.mapping_params, "mapping_network");
    install_params(m.lora, ckpt.lora_params, "lora");
    return m;
}

}  // namespace soundedit
