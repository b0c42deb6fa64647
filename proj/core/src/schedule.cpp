#include "soundedit/schedule.hpp"

#include <cmath>

namespace soundedit {

void ScheduleConfig::validate() const {
    if (timesteps < 1) throw ConfigError("diffusion.timesteps must be positive");
    if (kind != "linear" && kind != "scaled_linear")
        throw ConfigError("diffusion.schedule must be \"linear\" or \"scaled_linear\", got \"" +
                          kind + "\"");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw ConfigError("diffusion.beta range must satisfy 0 < beta_start <= beta_end < 1");
}

NoiseSchedule::NoiseSchedule(const ScheduleConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    int n = cfg_.timesteps;
    betas_.resize(static_cast<size_t>(n));
    alpha_bars_.resize(static_cast<size_t>(n));
    double s0 = std::sqrt(cfg_.beta_start), s1 = std::sqrt(cfg_.beta_end);
    double acc = 1.0;
    for (int t = 0; t < n; ++t) {
        double u = n == 1 ? 0.0 : static_cast<double>(t) / (n - 1);
        double b;
        if (cfg_.kind == "linear") {
            b = cfg_.beta_start + (cfg_.beta_end - cfg_.beta_start) * u;
        } else {  // scaled_linear: linear in sqrt(beta)
            double r = s0 + (s1 - s0) * u;
            b = r * r;
        }
        betas_[static_cast<size_t>(t)] = b;
        acc *= 1.0 - b;
        alpha_bars_[static_cast<size_t>(t)] = acc;
    }
}

double NoiseSchedule::beta(int t) const {
    if (t < 0 || t >= cfg_.timesteps) throw ShapeError("schedule: timestep out of range");
    return betas_[static_cast<size_t>(t)];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t >= cfg_.timesteps) throw ShapeError("schedule: timestep out of range");
    return alpha_bars_[static_cast<size_t>(t)];
}

double NoiseSchedule::sigma(int t) const {
    double ab = alpha_bar(t);
    return std::sqrt((1.0 - ab) / ab);
}

Tensor NoiseSchedule::add_noise(const Tensor& z0, const Tensor& eps, int t) const {
    if (!z0.same_shape(eps)) throw ShapeError("add_noise: latent/noise shape mismatch");
    double ab = alpha_bar(t);
    double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
    Tensor out = z0;
    for (int64_t i = 0; i < out.size(); ++i) out[i] = cs * z0[i] + cn * eps[i];
    return out;
}

}  // namespace soundedit
