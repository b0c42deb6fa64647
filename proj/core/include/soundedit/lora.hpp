#pragma once

#include "soundedit/autodiff.hpp"

namespace soundedit {

struct LoraConfig {
    int rank = 2;
    double alpha = 2.0;  ///< effective update scale is alpha / rank
    std::vector<std::string> targets;
    uint64_t seed = 17;

    double scale() const { return alpha / rank; }
    void validate() const;
};

/// Create adapter parameters for each target W (shape out x in) in `base`:
/// lora.{name}.a is rank x in, N(0, 1/sqrt(in)); lora.{name}.b is out x rank,
/// zero — so the adapted model starts exactly equal to the base model.
ParamStore init_lora(const ParamStore& base, const LoraConfig& cfg);

/// Rewrite `bound` entries for each target to W + scale * B A, on tape.
/// `bound` holds the (typically frozen) base weights; `lora_bound` holds the
/// trainable adapter factors.
void apply_lora(Tape& t, BoundParams& bound, const BoundParams& lora_bound,
                const LoraConfig& cfg);

/// Fold the adapter into the base weights in place (inference shortcut).
void merge_lora(ParamStore& base, const ParamStore& lora, const LoraConfig& cfg);

/// Sum over targets of rank * (d_in + d_out).
int64_t lora_parameter_count(const ParamStore& base, const LoraConfig& cfg);

}  // namespace soundedit
