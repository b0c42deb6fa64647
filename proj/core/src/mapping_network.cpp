#include "soundedit/mapping_network.hpp"

#include <cmath>

namespace soundedit {

void MappingConfig::validate() const {
    if (d_audio < 1) throw ConfigError("mapping.d_audio must be positive");
    if (d_token < 2) throw ConfigError("mapping.d_token must be at least 2");
    if (n_tokens < 1) throw ConfigError("mapping.n_tokens must be positive");
    if (n_layers < 1) throw ConfigError("mapping.n_layers must be positive");
    if (ffn_mult < 1) throw ConfigError("mapping.ffn_mult must be positive");
    if (n_heads < 1 || d_token % n_heads != 0)
        throw ConfigError("mapping.d_token must be divisible by mapping.n_heads");
}

MappingNetwork::MappingNetwork(const MappingConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    RandomStream rng = RandomStream(cfg_.seed).fork("mapping");
    params_.add("map.in.w", Tensor::randn({cfg_.d_token, cfg_.d_audio}, rng,
                                          1.0 / std::sqrt(static_cast<double>(cfg_.d_audio))));
    params_.add("map.in.b", Tensor::zeros({1, cfg_.d_token}));
    params_.add("map.tokens", Tensor::randn({cfg_.n_tokens, cfg_.d_token}, rng, 0.02));
    for (int l = 0; l < cfg_.n_layers; ++l)
        init_encoder_layer(params_, "map.layer" + std::to_string(l), cfg_.d_token, cfg_.ffn_mult,
                           rng);
    params_.add("map.final.g", Tensor::full({1, cfg_.d_token}, 1.0));
    params_.add("map.final.b", Tensor::zeros({1, cfg_.d_token}));
}

Var MappingNetwork::forward_t(Tape& t, const BoundParams& p, Var audio) const {
    const Tensor& a = t.val(audio);
    if (!a.is_matrix() || a.rows() != 1 || a.cols() != cfg_.d_audio)
        throw ShapeError("mapping input must be 1 x d_audio, got " + a.shape_str());

    Var head = linear(t, audio, p.at("map.in.w"), p.at("map.in.b"));
    Var x = t.concat_rows({head, p.at("map.tokens")});
    for (int l = 0; l < cfg_.n_layers; ++l)
        x = encoder_layer_forward(t, p, "map.layer" + std::to_string(l), x, cfg_.d_token,
                                  cfg_.n_heads);
    x = t.layer_norm_rows(x, p.at("map.final.g"), p.at("map.final.b"));
    return t.slice_rows(x, 1, 1 + cfg_.n_tokens);
}

Tensor MappingNetwork::forward(const Tensor& audio) const {
    Tape t;
    BoundParams p = bind_params(t, params_, false);
    Var out = forward_t(t, p, t.constant(audio));
    return t.val(out);
}

}  // namespace soundedit
