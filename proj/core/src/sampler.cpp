#include "soundedit/sampler.hpp"

#include <cmath>

namespace soundedit {

DenoiserFn make_denoiser_fn(const Denoiser& d) {
    return [&d](const Tensor& z, int h, int w, double t, const Tensor& cond) {
        return d.forward(z, h, w, t, cond);
    };
}

DenoiserFn make_adapted_denoiser_fn(const Denoiser& d, const ParamStore& lora,
                                    const LoraConfig& cfg) {
    return [&d, &lora, cfg](const Tensor& z, int h, int w, double ts, const Tensor& cond) {
        Tape t;
        BoundParams p = bind_params(t, d.params(), false);
        BoundParams lp = bind_params(t, lora, false);
        apply_lora(t, p, lp, cfg);
        Var out = d.forward_t(t, p, t.constant(z), h, w, ts, t.constant(cond));
        return t.val(out);
    };
}

void SamplerConfig::validate() const {
    if (steps < 1) throw ConfigError("sampler.steps must be positive");
    if (!std::isfinite(cond_scale) || !std::isfinite(image_scale))
        throw ConfigError("sampler guidance scales must be finite");
}

std::vector<int> sample_timesteps(const NoiseSchedule& sched, int steps) {
    if (steps < 1) throw ConfigError("sampler.steps must be positive");
    int top = sched.timesteps() - 1;
    std::vector<int> ts(static_cast<size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        double u = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        ts[static_cast<size_t>(i)] = static_cast<int>(std::lround(top * (1.0 - u)));
    }
    return ts;
}

std::vector<double> ancestral_sigmas(const NoiseSchedule& sched, const std::vector<int>& ts) {
    std::vector<double> sigmas;
    sigmas.reserve(ts.size() + 1);
    for (int t : ts) sigmas.push_back(sched.sigma(t));
    sigmas.push_back(0.0);
    return sigmas;
}

Tensor guided_eps(const DenoiserFn& f, const SamplerConfig& cfg, const Tensor& z_in,
                  const Tensor& image_latent, const Tensor& cond, const Tensor& null_cond,
                  int h, int w, double timestep) {
    if (!z_in.same_shape(image_latent)) throw ShapeError("guided_eps: latent shape mismatch");
    auto with_image = [&](const Tensor& img, const Tensor& c) {
        Tensor z = Tensor::zeros({z_in.rows(), 2 * z_in.cols()});
        for (int r = 0; r < z_in.rows(); ++r) {
            for (int cc = 0; cc < z_in.cols(); ++cc) {
                z.at(r, cc) = z_in.at(r, cc);
                z.at(r, z_in.cols() + cc) = img.at(r, cc);
            }
        }
        return f(z, h, w, timestep, c);
    };

    if (cfg.image_scale == 1.0 && cfg.cond_scale == 1.0) return with_image(image_latent, cond);

    Tensor zero_img = Tensor::zeros(image_latent.shape);
    Tensor e_uu = with_image(zero_img, null_cond);
    Tensor e_iu = with_image(image_latent, null_cond);
    Tensor e_ic = with_image(image_latent, cond);
    Tensor out = e_uu;
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = e_uu[i] + cfg.image_scale * (e_iu[i] - e_uu[i]) +
                 cfg.cond_scale * (e_ic[i] - e_iu[i]);
    return out;
}

Tensor sample_latent(const DenoiserFn& f, const NoiseSchedule& sched, const SamplerConfig& cfg,
                     const Tensor& image_latent, const Tensor& cond, const Tensor& null_cond,
                     int h, int w, RandomStream& rng) {
    cfg.validate();
    if (!image_latent.is_matrix() || image_latent.rows() != h * w)
        throw ShapeError("sample_latent: image latent must be {h*w, c_lat}");

    std::vector<int> ts = sample_timesteps(sched, cfg.steps);
    std::vector<double> sigmas = ancestral_sigmas(sched, ts);

    Tensor x = Tensor::randn(image_latent.shape, rng);
    for (int64_t i = 0; i < x.size(); ++i) x[i] *= sigmas[0];

    for (size_t i = 0; i < ts.size(); ++i) {
        double s = sigmas[i], s_next = sigmas[i + 1];
        // z fed to the network lives in the schedule's scaled space
        double in_scale = std::sqrt(sched.alpha_bar(ts[i]));
        Tensor z_in = x;
        for (int64_t j = 0; j < z_in.size(); ++j) z_in[j] *= in_scale;

        Tensor eps = guided_eps(f, cfg, z_in, image_latent, cond, null_cond, h, w,
                                static_cast<double>(ts[i]));
        if (!eps.same_shape(x)) throw ShapeError("denoiser returned a mismatched latent");

        double sigma_up = 0.0, sigma_down = 0.0;
        if (s_next > 0.0 && s > 0.0) {
            sigma_up = std::sqrt(s_next * s_next * (s * s - s_next * s_next) / (s * s));
            sigma_down = std::sqrt(s_next * s_next - sigma_up * sigma_up);
        }
        for (int64_t j = 0; j < x.size(); ++j) x[j] += eps[j] * (sigma_down - s);
        if (sigma_up > 0.0) {
            Tensor noise = Tensor::randn(x.shape, rng);
            for (int64_t j = 0; j < x.size(); ++j) x[j] += sigma_up * noise[j];
        }
    }
    if (!x.all_finite()) throw NumericError("sampler produced non-finite latent");
    return x;
}

EditResult sample_edit(const DenoiserFn& f, const NoiseSchedule& sched, const SamplerConfig& cfg,
                       const Autoencoder& codec, const Image& source, const Tensor& cond,
                       const Tensor& null_cond, RandomStream& rng) {
    Tensor z_img = codec.encode(source);
    int h = source.height / codec.factor(), w = source.width / codec.factor();
    EditResult res;
    res.latent = sample_latent(f, sched, cfg, z_img, cond, null_cond, h, w, rng);
    res.image = codec.decode(res.latent, h, w);
    return res;
}

}  // namespace soundedit
