#pragma once

#include <string>

#include "soundedit/tensor.hpp"

namespace soundedit {

struct ScheduleConfig {
    int timesteps = 50;
    std::string kind = "linear";  ///< "linear" | "scaled_linear"
    double beta_start = 1e-4;
    double beta_end = 2e-2;

    void validate() const;
};

/// Forward-process constants. alpha_bar(t) is the cumulative signal fraction;
/// sigma(t) = sqrt((1 - alpha_bar) / alpha_bar) is the matching
/// variance-exploding noise level used by the ancestral sampler.
class NoiseSchedule {
  public:
    explicit NoiseSchedule(const ScheduleConfig& cfg);

    int timesteps() const { return cfg_.timesteps; }
    const ScheduleConfig& config() const { return cfg_; }
    double beta(int t) const;
    double alpha_bar(int t) const;
    double sigma(int t) const;

    /// z_t = sqrt(alpha_bar) z0 + sqrt(1 - alpha_bar) eps, elementwise.
    Tensor add_noise(const Tensor& z0, const Tensor& eps, int t) const;

  private:
    ScheduleConfig cfg_;
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
};

}  // namespace soundedit
