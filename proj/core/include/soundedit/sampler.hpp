#pragma once

#include <functional>

#include "soundedit/autoencoder.hpp"
#include "soundedit/denoiser.hpp"
#include "soundedit/lora.hpp"
#include "soundedit/schedule.hpp"

namespace soundedit {

/// One noise-prediction evaluation: (z_concat, h, w, timestep, cond) -> eps.
using DenoiserFn =
    std::function<Tensor(const Tensor&, int, int, double, const Tensor&)>;

DenoiserFn make_denoiser_fn(const Denoiser& d);
/// Denoiser with a live adapter (nothing is merged; factors bind as constants
/// on a throwaway tape per call).
DenoiserFn make_adapted_denoiser_fn(const Denoiser& d, const ParamStore& lora,
                                    const LoraConfig& cfg);

struct SamplerConfig {
    int steps = 100;
    double cond_scale = 1.0;   ///< weight on the token condition
    double image_scale = 1.0;  ///< weight on the source-image condition

    void validate() const;
};

/// Descending timestep indices for a run of `steps` (T-1 down to 0).
std::vector<int> sample_timesteps(const NoiseSchedule& sched, int steps);

/// sigma(t_i) for each index, with a trailing 0 for the final step.
std::vector<double> ancestral_sigmas(const NoiseSchedule& sched, const std::vector<int>& ts);

/// Two-way guided noise estimate at one point:
///   e = e(z, 0, null) + s_img * (e(z, zI, null) - e(z, 0, null))
///               + s_cond * (e(z, zI, c) - e(z, zI, null)).
/// Collapses to the single evaluation e(z, zI, c) when both scales are 1,
/// which the implementation exploits.
Tensor guided_eps(const DenoiserFn& f, const SamplerConfig& cfg, const Tensor& z_in,
                  const Tensor& image_latent, const Tensor& cond, const Tensor& null_cond,
                  int h, int w, double timestep);

/// Ancestral Euler sampling in sigma-space, starting from x = sigma_0 * eps
/// with eps drawn from `rng` (then one fresh normal draw per non-final step).
/// Returns the final clean latent.
Tensor sample_latent(const DenoiserFn& f, const NoiseSchedule& sched, const SamplerConfig& cfg,
                     const Tensor& image_latent, const Tensor& cond, const Tensor& null_cond,
                     int h, int w, RandomStream& rng);

struct EditResult {
    Image image;
    Tensor latent;
};

/// Full edit: encode the source, sample a latent under both conditionings,
/// decode. `rng` is consumed exactly as sample_latent documents.
EditResult sample_edit(const DenoiserFn& f, const NoiseSchedule& sched, const SamplerConfig& cfg,
                       const Autoencoder& codec, const Image& source, const Tensor& cond,
                       const Tensor& null_cond, RandomStream& rng);

}  // namespace soundedit
