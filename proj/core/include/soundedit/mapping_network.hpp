#pragma once

#include "soundedit/transformer.hpp"

namespace soundedit {

struct MappingConfig {
    int d_audio = 16;   ///< input audio embedding width
    int d_token = 24;   ///< output token width (condition space)
    int n_tokens = 5;   ///< learnable output tokens
    int n_layers = 2;
    int n_heads = 4;
    int ffn_mult = 4;
    uint64_t seed = 11;

    void validate() const;
};

/// Translates one audio embedding into n_tokens condition-space tokens.
/// The embedding is affinely projected to token width and prepended to a
/// bank of learnable tokens (init N(0, 0.02)); the stack runs pre-LN
/// transformer layers with no positional encoding (the audio slot is
/// distinguishable by content, and token order is free); the learnable-token
/// positions after a final layer norm are the output.
class MappingNetwork {
  public:
    explicit MappingNetwork(const MappingConfig& cfg);

    /// audio: 1 x d_audio -> n_tokens x d_token. Differentiable w.r.t. both
    /// the bound parameters and the audio input.
    Var forward_t(Tape& t, const BoundParams& p, Var audio) const;

    /// Inference convenience; binds parameters as constants.
    Tensor forward(const Tensor& audio) const;

    const MappingConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    int64_t parameter_count() const { return params_.total_elements(); }
    uint64_t fingerprint() const { return params_.fingerprint(); }

  private:
    MappingConfig cfg_;
    ParamStore params_;
};

}  // namespace soundedit
