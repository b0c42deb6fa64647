#pragma once

#include "soundedit/transformer.hpp"

namespace soundedit {

struct DenoiserConfig {
    int c_lat = 4;
    int base_width = 32;
    int d_cond = 24;    ///< width of the condition sequence it attends to
    int temb_dim = 32;
    uint64_t seed = 13;

    void validate() const;
};

/// Small U-Net over latent grids, conditioned two ways: the source-image
/// latent is channel-concatenated with the noisy latent (so the first conv
/// sees 2 * c_lat channels), and a token sequence enters through single-head
/// cross-attention at every resolution. Normalization is per-position layer
/// norm; activations are SiLU; timesteps enter as a sinusoidal embedding
/// through a small MLP, added per res-block. The output conv is zero-
/// initialized, so a fresh network predicts exactly zero noise.
class Denoiser {
  public:
    explicit Denoiser(const DenoiserConfig& cfg);

    /// z_concat: {h*w, 2*c_lat} (noisy latent columns first, image-condition
    /// latent columns second); cond: {n_ctx, d_cond}; h and w must be
    /// divisible by 4 (two stride-2 stages). Returns {h*w, c_lat}.
    Var forward_t(Tape& t, const BoundParams& p, Var z_concat, int h, int w, double timestep,
                  Var cond) const;

    /// Inference convenience; binds parameters as constants.
    Tensor forward(const Tensor& z_concat, int h, int w, double timestep,
                   const Tensor& cond) const;

    const DenoiserConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    int64_t parameter_count() const { return params_.total_elements(); }
    uint64_t fingerprint() const { return params_.fingerprint(); }

    /// The 16 cross-attention projection matrices (wq/wk/wv/wo at each of
    /// the four attention sites) — the default adapter targets.
    std::vector<std::string> cross_attention_projection_names() const;
    /// Everything an adapter may legally wrap: the projections above plus
    /// all conv kernels and the timestep MLP matrices.
    std::vector<std::string> adapter_targetable_names() const;

  private:
    DenoiserConfig cfg_;
    ParamStore params_;

    Var res_block(Tape& t, const BoundParams& p, const std::string& prefix, Var x, Var temb,
                  int c_in, int c_out, int h, int w) const;
    Var attn_block(Tape& t, const BoundParams& p, const std::string& prefix, Var x,
                   Var cond) const;
    Var conv(Tape& t, const BoundParams& p, const std::string& prefix, Var x, int h, int w,
             int c_in, int k, int stride, int pad) const;
};

}  // namespace soundedit
