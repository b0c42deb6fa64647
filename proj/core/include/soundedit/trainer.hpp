#pragma once

#include <functional>
#include <map>

#include "soundedit/config.hpp"
#include "soundedit/metrics.hpp"

namespace soundedit {

// ============================ model bundle ============================

/// The full editing stack built from one ModelConfig: frozen encoder suite,
/// codec, schedule and base denoiser, plus the trainable mapping network and
/// adapter factors. Frozen pieces are reconstructable from config seeds; the
/// trainable stores are what checkpoints carry.
struct EditModel {
    ModelConfig config;
    EncoderSuite suite;
    std::unique_ptr<Autoencoder> codec;
    NoiseSchedule schedule;
    MappingNetwork mapping;
    Denoiser denoiser;
    ParamStore lora;

    /// Empty lora targets in the config resolve to the denoiser's
    /// cross-attention projections (the resolved list is written back).
    static EditModel build(ModelConfig cfg);

    /// audio -> mapping tokens -> encoded condition sequence {n_ctx, d_cond}.
    Tensor condition_for(const AudioClip& audio) const;

    /// One full edit with the adapted denoiser; rng drives the sampler noise.
    Image edit(const Image& source, const AudioClip& audio, const SamplerConfig& scfg,
               RandomStream& rng) const;

    /// Combined fingerprint of everything training must not touch.
    uint64_t frozen_fingerprint() const;
};

/// Deterministic edit closure for sweeps and the CLI: every call reseeds from
/// `seed`, so one gain's edit never perturbs another's.
EditFn make_edit_fn(const EditModel& model, const SamplerConfig& scfg, uint64_t seed);

// ============================ optimizer ============================

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// One named parameter store plus its gradients for a step.
struct GradientUpdate {
    std::string group;  ///< moment-slot namespace ("mapping", "lora")
    ParamStore* store;
    const std::vector<std::pair<std::string, Tensor>>* grads;
};

/// Adaptive-moment optimizer over any number of named stores. Moment slots
/// are keyed "group/param" and created on first sight; the bias-correction
/// step count advances once per step() regardless of group count.
class Adam {
  public:
    Adam() = default;
    explicit Adam(AdamConfig cfg);

    void step(const std::vector<GradientUpdate>& updates);

    int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    const std::map<std::string, std::pair<Tensor, Tensor>>& slots() const { return slots_; }
    void restore(int64_t t, std::map<std::string, std::pair<Tensor, Tensor>> slots);

  private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> slots_;  ///< name -> (m, v)
};

// ============================ trainer ============================

struct TrainLogEntry {
    int64_t step = 0;
    double l_ldm = 0.0;
    double l_nce = 0.0;
    double l_l1 = 0.0;
    double l_total = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    int64_t steps_run = 0;
    bool early_stopped = false;
    LossReport first;
    LossReport last;
    std::vector<TrainLogEntry> log;        ///< one entry per step
    std::vector<double> val_history;       ///< validation l_total per evaluation
};

class Trainer;

/// Serializable training state: trainable parameters, optimizer moments, rng
/// position, step index, config snapshot, and the tail of the training log.
/// Frozen modules are stored as config seeds plus a fingerprint to verify
/// reconstruction — never as weights.
struct Checkpoint {
    std::string tag;  ///< e.g. ablation row letter; empty for plain runs
    int64_t step = 0;
    ModelConfig model_config;
    TrainConfig train_config;
    ParamStore mapping_params;
    ParamStore lora_params;
    AdamConfig adam_config;
    int64_t adam_step = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> adam_slots;
    std::string rng_state;
    uint64_t encoders_fingerprint = 0;
    uint64_t autoencoder_fingerprint = 0;
    uint64_t denoiser_fingerprint = 0;
    uint64_t frozen_fingerprint = 0;  ///< combined, as EditModel reports it
    std::vector<TrainLogEntry> log_tail;  ///< last <= 50 entries

    void validate() const;
};

/// Joint optimization of {mapping network, LoRA factors} under the three-term
/// objective; everything else stays frozen. Single-threaded and deterministic
/// under a fixed config seed.
class Trainer {
  public:
    Trainer(EditModel& model, TrainConfig cfg);

    /// One gradient step on one batch. Per sample: embed audio, map to
    /// tokens, encode the condition; denoising MSE on the noised after-image
    /// latent conditioned on the before-image latent; InfoNCE between the
    /// projected condition and the after-image embedding; l1 on the tokens.
    /// The report holds batch means; l_nce is always reported but only
    /// enters l_total when use_nce is set.
    LossReport train_step(const std::vector<const EditTriplet*>& batch);

    /// Epoch loop over `data` with a seeded shuffle, validation split,
    /// early stopping, and periodic checkpoints through `sink` (also called
    /// once at the end; pass nullptr to skip).
    TrainResult run(const std::vector<EditTriplet>& data,
                    const std::function<void(const Checkpoint&)>& sink = nullptr);

    /// Losses only, no parameter update; `draw` supplies the timestep/noise
    /// randomness, so resetting it replays the identical objective.
    LossReport evaluate(const std::vector<const EditTriplet*>& batch, RandomStream& draw);

    /// Forward/backward without an optimizer update; fills the gradients of
    /// l_total for both trainable groups. Randomness as in evaluate().
    LossReport gradients(const std::vector<const EditTriplet*>& batch, RandomStream& draw,
                         std::vector<std::pair<std::string, Tensor>>& mapping_grads,
                         std::vector<std::pair<std::string, Tensor>>& lora_grads);

    Checkpoint make_checkpoint() const;
    /// Restore optimizer, rng, and step from a checkpoint written by this
    /// config (the model itself is restored via load_model).
    void resume(const Checkpoint& ckpt);

    const TrainConfig& config() const { return cfg_; }
    int64_t step() const { return step_; }
    RandomStream& rng() { return rng_; }
    Adam& optimizer() { return adam_; }

  private:
    EditModel& model_;
    TrainConfig cfg_;
    Adam adam_;
    RandomStream rng_;
    int64_t step_ = 0;
    std::vector<TrainLogEntry> log_;

    double validation_loss(const std::vector<const EditTriplet*>& val);
    LossReport batch_losses(const std::vector<const EditTriplet*>& batch, RandomStream& draw,
                            bool want_grads, bool apply_update,
                            std::vector<std::pair<std::string, Tensor>>* mapping_grads,
                            std::vector<std::pair<std::string, Tensor>>* lora_grads);
};

// ============================ checkpoint I/O ============================

/// JSON on disk; tensors round-trip bit-exactly. Layout keys: step, tag,
/// config blocks, "mapping_network" and "lora" parameter entries, frozen
/// "encoders"/"autoencoder"/"denoiser"/"schedule" entries (seed +
/// fingerprint only), optimizer state, rng, log tail.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Rebuild the full model a checkpoint describes: frozen stack from config
/// seeds (verified against the stored fingerprint), trainable parameters
/// installed from the checkpoint.
EditModel load_model(const Checkpoint& ckpt);

// ============================ ablation matrix ============================

struct AblationRow {
    std::string tag;
    int n_tokens = 5;
    bool use_nce = true;
};

/// The four-row configuration matrix: token count and contrastive term
/// on/off. A = 1 token with NCE, B = 5 without, C = 5 with, D = 10 with.
std::vector<AblationRow> ablation_rows();

struct AblationOutcome {
    AblationRow row;
    Checkpoint checkpoint;
    MetricsReport metrics;
    TrainResult train;
};

/// Train one model per row from a shared base config (frozen stacks
/// identical across rows) and evaluate edits on the training triplets.
/// Requires base.encoders.n_ctx to fit the largest row. Category text
/// embeddings come from flat canonical-bin images via `categories`; a
/// category without a toy bin falls back to the after-image embedding.
std::vector<AblationOutcome> run_ablation(const GlobalConfig& base,
                                          const std::vector<EditTriplet>& data,
                                          const CategorySet& categories);

}  // namespace soundedit
