#include "soundedit/lora.hpp"

#include <cmath>

namespace soundedit {

void LoraConfig::validate() const {
    if (rank < 1) throw ConfigError("lora.rank must be positive");
    if (!(alpha > 0.0)) throw ConfigError("lora.alpha must be positive");
    for (size_t i = 0; i < targets.size(); ++i)
        for (size_t j = i + 1; j < targets.size(); ++j)
            if (targets[i] == targets[j])
                throw ConfigError("lora.targets lists \"" + targets[i] + "\" twice");
}

namespace {

const Tensor& target_weight(const ParamStore& base, const std::string& name) {
    if (!base.has(name)) throw ConfigError("lora target \"" + name + "\" is not a base weight");
    const Tensor& w = base.at(name);
    if (!w.is_matrix()) throw ConfigError("lora target \"" + name + "\" is not a matrix");
    return w;
}

}  // namespace

ParamStore init_lora(const ParamStore& base, const LoraConfig& cfg) {
    cfg.validate();
    if (cfg.targets.empty()) throw ConfigError("lora.targets must not be empty");
    ParamStore lora;
    RandomStream rng = RandomStream(cfg.seed).fork("lora");
    for (const auto& name : cfg.targets) {
        const Tensor& w = target_weight(base, name);
        int d_out = w.rows(), d_in = w.cols();
        lora.add("lora." + name + ".a",
                 Tensor::randn({cfg.rank, d_in}, rng, 1.0 / std::sqrt(static_cast<double>(d_in))));
        lora.add("lora." + name + ".b", Tensor::zeros({d_out, cfg.rank}));
    }
    return lora;
}

void apply_lora(Tape& t, BoundParams& bound, const BoundParams& lora_bound,
                const LoraConfig& cfg) {
    cfg.validate();
    for (const auto& name : cfg.targets) {
        Var w = bound.at(name);
        Var a = lora_bound.at("lora." + name + ".a");
        Var b = lora_bound.at("lora." + name + ".b");
        bound.vars[name] = t.add(w, t.scale(t.matmul_op(b, a), cfg.scale()));
    }
}

void merge_lora(ParamStore& base, const ParamStore& lora, const LoraConfig& cfg) {
    cfg.validate();
    for (const auto& name : cfg.targets) {
        Tensor& w = base.at(name);
        const Tensor& a = lora.at("lora." + name + ".a");
        const Tensor& b = lora.at("lora." + name + ".b");
        Tensor delta = matmul(b, a);
        if (!delta.same_shape(w)) throw ShapeError("lora merge shape mismatch for " + name);
        for (int64_t i = 0; i < w.size(); ++i) w[i] += cfg.scale() * delta[i];
    }
}

int64_t lora_parameter_count(const ParamStore& base, const LoraConfig& cfg) {
    int64_t n = 0;
    for (const auto& name : cfg.targets) {
        const Tensor& w = target_weight(base, name);
        n += static_cast<int64_t>(cfg.rank) * (w.rows() + w.cols());
    }
    return n;
}

}  // namespace soundedit
