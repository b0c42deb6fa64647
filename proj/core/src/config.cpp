#include "soundedit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace soundedit {

namespace {

using nlohmann::json;

std::string join_path(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

/// Walks an object with a fixed key set; absent keys keep defaults, unknown
/// keys are a ConfigError naming the full path.
struct BlockReader {
    const json& obj;
    std::string path;
    std::set<std::string> seen;

    BlockReader(const json& o, std::string p) : obj(o), path(std::move(p)) {
        if (!o.is_object()) throw ConfigError("config: " + path + " must be an object");
    }

    template <typename T>
    void field(const char* key, T& out) {
        seen.insert(key);
        auto it = obj.find(key);
        if (it == obj.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: wrong type at " + join_path(path, key));
        }
    }

    const json* block(const char* key) {
        seen.insert(key);
        auto it = obj.find(key);
        return it == obj.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (!seen.count(it.key()))
                throw ConfigError("config: unknown key " + join_path(path, it.key()));
    }
};

void read_encoders(const json& j, const std::string& path, EncoderConfig& c) {
    BlockReader r(j, path);
    r.field("backend", c.backend);
    r.field("seed", c.seed);
    r.field("d_audio", c.d_audio);
    r.field("d_joint", c.d_joint);
    r.field("d_av", c.d_av);
    r.field("d_cond", c.d_cond);
    r.field("n_ctx", c.n_ctx);
    r.field("cond_layers", c.cond_layers);
    r.field("cond_heads", c.cond_heads);
    r.field("positional_encoding", c.positional_encoding);
    r.field("n_bands", c.n_bands);
    r.field("n_fft", c.n_fft);
    r.field("hop", c.hop);
    r.finish();
}

void read_mapping(const json& j, const std::string& path, MappingConfig& c) {
    BlockReader r(j, path);
    r.field("d_audio", c.d_audio);
    r.field("d_token", c.d_token);
    r.field("n_tokens", c.n_tokens);
    r.field("n_layers", c.n_layers);
    r.field("n_heads", c.n_heads);
    r.field("ffn_mult", c.ffn_mult);
    r.field("seed", c.seed);
    r.finish();
}

void read_autoencoder(const json& j, const std::string& path, AutoencoderConfig& c) {
    BlockReader r(j, path);
    r.field("factor", c.factor);
    r.field("c_lat", c.c_lat);
    r.field("seed", c.seed);
    r.finish();
}

void read_schedule(const json& j, const std::string& path, ScheduleConfig& c) {
    BlockReader r(j, path);
    r.field("timesteps", c.timesteps);
    r.field("kind", c.kind);
    r.field("beta_start", c.beta_start);
    r.field("beta_end", c.beta_end);
    r.finish();
}

void read_denoiser(const json& j, const std::string& path, DenoiserConfig& c) {
    BlockReader r(j, path);
    r.field("c_lat", c.c_lat);
    r.field("base_width", c.base_width);
    r.field("d_cond", c.d_cond);
    r.field("temb_dim", c.temb_dim);
    r.field("seed", c.seed);
    r.finish();
}

void read_lora(const json& j, const std::string& path, LoraConfig& c) {
    BlockReader r(j, path);
    r.field("rank", c.rank);
    r.field("alpha", c.alpha);
    r.field("targets", c.targets);
    r.field("seed", c.seed);
    r.finish();
}

void read_sampler(const json& j, const std::string& path, SamplerConfig& c) {
    BlockReader r(j, path);
    r.field("steps", c.steps);
    r.field("cond_scale", c.cond_scale);
    r.field("image_scale", c.image_scale);
    r.finish();
}

void read_losses(const json& j, const std::string& path, LossWeights& c) {
    BlockReader r(j, path);
    r.field("lambda_nce", c.lambda_nce);
    r.field("lambda_l1", c.lambda_l1);
    r.finish();
}

void read_train(const json& j, const std::string& path, TrainConfig& c) {
    BlockReader r(j, path);
    r.field("steps", c.steps);
    r.field("batch_size", c.batch_size);
    r.field("resolution", c.resolution);
    r.field("learning_rate", c.learning_rate);
    r.field("early_stop_patience", c.early_stop_patience);
    r.field("val_every", c.val_every);
    r.field("val_fraction", c.val_fraction);
    r.field("checkpoint_every", c.checkpoint_every);
    r.field("seed", c.seed);
    r.field("n_tokens", c.n_tokens);
    r.field("use_nce", c.use_nce);
    r.field("cond_dropout", c.cond_dropout);
    r.finish();
}

void read_thresholds(const json& j, const std::string& path, FilterThresholds& c) {
    BlockReader r(j, path);
    r.field("directional_min", c.directional_min);
    r.field("iis_min", c.iis_min);
    r.field("avs_min", c.avs_min);
    r.field("real_iis_discard_above", c.real_iis_discard_above);
    r.field("real_audio_rule", c.real_audio_rule);
    r.finish();
}

void read_paths(const json& j, const std::string& path, GlobalConfig& c) {
    BlockReader r(j, path);
    r.field("data_dir", c.data_dir);
    r.field("out_dir", c.out_dir);
    r.finish();
}

}  // namespace

void ModelConfig::validate() const {
    encoders.validate();
    autoencoder.validate();
    schedule.validate();
    mapping.validate();
    denoiser.validate();
    lora.validate();
    if (mapping.d_audio != encoders.d_audio)
        throw ConfigError("config: mapping.d_audio must equal encoders.d_audio");
    if (mapping.d_token != encoders.d_cond)
        throw ConfigError("config: mapping.d_token must equal encoders.d_cond");
    if (denoiser.d_cond != encoders.d_cond)
        throw ConfigError("config: denoiser.d_cond must equal encoders.d_cond");
    if (denoiser.c_lat != autoencoder.c_lat)
        throw ConfigError("config: denoiser.c_lat must equal autoencoder.c_lat");
    if (mapping.n_tokens > encoders.n_ctx)
        throw ConfigError("config: mapping.n_tokens exceeds encoders.n_ctx");
}

void TrainConfig::validate() const {
    if (steps < 1) throw ConfigError("train: steps must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (resolution < 1) throw ConfigError("train: resolution must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (early_stop_patience < 0) throw ConfigError("train: early_stop_patience must be >= 0");
    if (val_every < 1) throw ConfigError("train: val_every must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ConfigError("train: val_fraction must lie in [0, 1)");
    if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
    if (n_tokens < 1) throw ConfigError("train: n_tokens must be >= 1");
    if (cond_dropout < 0.0 || cond_dropout >= 1.0)
        throw ConfigError("train: cond_dropout must lie in [0, 1)");
    if (early_stop_patience > 0 && val_fraction == 0.0)
        throw ConfigError("train: early stopping needs val_fraction > 0");
    weights.validate();
}

ModelConfig GlobalConfig::model() const {
    ModelConfig m;
    m.encoders = encoders;
    m.autoencoder = autoencoder;
    m.schedule = schedule;
    m.mapping = mapping;
    m.mapping.n_tokens = train.n_tokens;
    m.denoiser = denoiser;
    m.lora = lora;
    return m;
}

void GlobalConfig::validate() const {
    train.validate();
    sampler.validate();
    thresholds.validate();
    model().validate();
}

GlobalConfig parse_global_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }

    GlobalConfig cfg;
    BlockReader r(root, "");
    r.field("seed", cfg.seed);
    if (const json* b = r.block("encoders")) read_encoders(*b, "encoders", cfg.encoders);
    if (const json* b = r.block("mapping")) read_mapping(*b, "mapping", cfg.mapping);
    if (const json* b = r.block("diffusion")) {
        BlockReader d(*b, "diffusion");
        if (const json* s = d.block("autoencoder"))
            read_autoencoder(*s, "diffusion.autoencoder", cfg.autoencoder);
        if (const json* s = d.block("schedule"))
            read_schedule(*s, "diffusion.schedule", cfg.schedule);
        if (const json* s = d.block("denoiser"))
            read_denoiser(*s, "diffusion.denoiser", cfg.denoiser);
        if (const json* s = d.block("lora")) read_lora(*s, "diffusion.lora", cfg.lora);
        if (const json* s = d.block("sampler")) read_sampler(*s, "diffusion.sampler", cfg.sampler);
        d.finish();
    }
    if (const json* b = r.block("losses")) read_losses(*b, "losses", cfg.train.weights);
    if (const json* b = r.block("train")) read_train(*b, "train", cfg.train);
    if (const json* b = r.block("thresholds"))
        read_thresholds(*b, "thresholds", cfg.thresholds);
    if (const json* b = r.block("paths")) read_paths(*b, "paths", cfg);
    r.finish();

    cfg.validate();
    return cfg;
}

GlobalConfig load_global_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_global_config(buf.str());
}

std::string dump_global_config(const GlobalConfig& cfg, int indent) {
    json root;
    root["seed"] = cfg.seed;
    root["encoders"] = {{"backend", cfg.encoders.backend},
                        {"seed", cfg.encoders.seed},
                        {"d_audio", cfg.encoders.d_audio},
                        {"d_joint", cfg.encoders.d_joint},
                        {"d_av", cfg.encoders.d_av},
                        {"d_cond", cfg.encoders.d_cond},
                        {"n_ctx", cfg.encoders.n_ctx},
                        {"cond_layers", cfg.encoders.cond_layers},
                        {"cond_heads", cfg.encoders.cond_heads},
                        {"positional_encoding", cfg.encoders.positional_encoding},
                        {"n_bands", cfg.encoders.n_bands},
                        {"n_fft", cfg.encoders.n_fft},
                        {"hop", cfg.encoders.hop}};
    root["mapping"] = {{"d_audio", cfg.mapping.d_audio},   {"d_token", cfg.mapping.d_token},
                       {"n_tokens", cfg.mapping.n_tokens}, {"n_layers", cfg.mapping.n_layers},
                       {"n_heads", cfg.mapping.n_heads},   {"ffn_mult", cfg.mapping.ffn_mult},
                       {"seed", cfg.mapping.seed}};
    root["diffusion"] = {
        {"autoencoder",
         {{"factor", cfg.autoencoder.factor},
          {"c_lat", cfg.autoencoder.c_lat},
          {"seed", cfg.autoencoder.seed}}},
        {"schedule",
         {{"timesteps", cfg.schedule.timesteps},
          {"kind", cfg.schedule.kind},
          {"beta_start", cfg.schedule.beta_start},
          {"beta_end", cfg.schedule.beta_end}}},
        {"denoiser",
         {{"c_lat", cfg.denoiser.c_lat},
          {"base_width", cfg.denoiser.base_width},
          {"d_cond", cfg.denoiser.d_cond},
          {"temb_dim", cfg.denoiser.temb_dim},
          {"seed", cfg.denoiser.seed}}},
        {"lora",
         {{"rank", cfg.lora.rank},
          {"alpha", cfg.lora.alpha},
          {"targets", cfg.lora.targets},
          {"seed", cfg.lora.seed}}},
        {"sampler",
         {{"steps", cfg.sampler.steps},
          {"cond_scale", cfg.sampler.cond_scale},
          {"image_scale", cfg.sampler.image_scale}}}};
    root["losses"] = {{"lambda_nce", cfg.train.weights.lambda_nce},
                      {"lambda_l1", cfg.train.weights.lambda_l1}};
    root["train"] = {{"steps", cfg.train.steps},
                     {"batch_size", cfg.train.batch_size},
                     {"resolution", cfg.train.resolution},
                     {"learning_rate", cfg.train.learning_rate},
                     {"early_stop_patience", cfg.train.early_stop_patience},
                     {"val_every", cfg.train.val_every},
                     {"val_fraction", cfg.train.val_fraction},
                     {"checkpoint_every", cfg.train.checkpoint_every},
                     {"seed", cfg.train.seed},
                     {"n_tokens", cfg.train.n_tokens},
                     {"use_nce", cfg.train.use_nce},
                     {"cond_dropout", cfg.train.cond_dropout}};
    root["thresholds"] = {{"directional_min", cfg.thresholds.directional_min},
                          {"iis_min", cfg.thresholds.iis_min},
                          {"avs_min", cfg.thresholds.avs_min},
                          {"real_iis_discard_above", cfg.thresholds.real_iis_discard_above},
                          {"real_audio_rule", cfg.thresholds.real_audio_rule}};
    root["paths"] = {{"data_dir", cfg.data_dir}, {"out_dir", cfg.out_dir}};
    return root.dump(indent) + "\n";
}

}  // namespace soundedit
