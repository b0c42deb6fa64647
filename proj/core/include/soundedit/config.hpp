#pragma once

#include <string>

#include "soundedit/autoencoder.hpp"
#include "soundedit/dataset.hpp"
#include "soundedit/denoiser.hpp"
#include "soundedit/encoders.hpp"
#include "soundedit/lora.hpp"
#include "soundedit/losses.hpp"
#include "soundedit/mapping_network.hpp"
#include "soundedit/sampler.hpp"
#include "soundedit/schedule.hpp"

namespace soundedit {

/// Everything needed to construct the model stack. Cross-field consistency
/// (widths, channel counts, token budget vs context length) is checked here
/// rather than in the individual blocks.
struct ModelConfig {
    EncoderConfig encoders;
    AutoencoderConfig autoencoder;
    ScheduleConfig schedule;
    MappingConfig mapping;
    DenoiserConfig denoiser;
    LoraConfig lora;  ///< empty targets -> denoiser cross-attention projections

    void validate() const;
};

struct TrainConfig {
    int steps = 5000;
    int batch_size = 48;      ///< toy runs use 8
    int resolution = 256;     ///< toy runs use 32
    double learning_rate = 1e-4;
    int early_stop_patience = 0;  ///< consecutive non-improving evals; 0 disables
    int val_every = 50;           ///< steps between validation evaluations
    double val_fraction = 0.1;    ///< held-out share; 0 disables validation
    int checkpoint_every = 0;     ///< emit a checkpoint every K steps; 0 = final only
    uint64_t seed = 1;
    LossWeights weights;
    int n_tokens = 5;    ///< overrides mapping.n_tokens at assembly
    bool use_nce = true; ///< off: l_nce is reported but excluded from l_total
    double cond_dropout = 0.0;  ///< chance of training a sample unconditioned

    void validate() const;
};

/// Top-level JSON config. Every field has the documented default; absent
/// blocks keep defaults, unknown keys anywhere are rejected with their path.
struct GlobalConfig {
    uint64_t seed = 1;
    EncoderConfig encoders;
    MappingConfig mapping;
    AutoencoderConfig autoencoder;
    ScheduleConfig schedule;
    DenoiserConfig denoiser;
    LoraConfig lora;
    SamplerConfig sampler;
    TrainConfig train;  ///< weights filled from the "losses" block
    FilterThresholds thresholds;
    std::string data_dir;
    std::string out_dir;

    /// Assemble the model block; train.n_tokens wins over mapping.n_tokens.
    ModelConfig model() const;
    void validate() const;
};

/// Strict parse: unknown keys raise ConfigError naming the full key path
/// (e.g. "diffusion.denoiser.base_widht"); wrong stored types likewise.
GlobalConfig parse_global_config(const std::string& json_text);
GlobalConfig load_global_config(const std::string& path);

/// Serialization used by config round-trips and checkpoints. Emits every
/// field, so a dump documents the effective defaults.
std::string dump_global_config(const GlobalConfig& cfg, int indent = 2);

}  // namespace soundedit
