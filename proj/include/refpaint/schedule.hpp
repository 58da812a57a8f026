#pragma once

#include <vector>

#include "refpaint/tensor.hpp"

namespace refpaint {

class Rng;

enum class ScheduleKind { linear };

/// Variance-preserving schedule: alpha[t]^2 + sigma[t]^2 == 1.
struct NoiseSchedule {
    int steps = 0;              ///< T
    std::vector<double> beta;   ///< per-step variance
    std::vector<double> alpha;  ///< sqrt of the cumulative product of (1 - beta)
    std::vector<double> sigma;  ///< sqrt(1 - alpha^2)

    double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t)]; }
    double sigma_at(int t) const { return sigma[static_cast<std::size_t>(t)]; }
};

NoiseSchedule build_schedule(ScheduleKind kind, int steps, double beta_min, double beta_max);

/// Serializable description of a linear schedule.
struct ScheduleSpec {
    int steps = 200;
    double beta_min = 5e-4;
    double beta_max = 0.1;

    /// The classic [1e-4, 0.02] range rescaled by 1000 / steps (beta_max capped at 0.999).
    static ScheduleSpec defaults(int steps = 200);
    NoiseSchedule build() const { return build_schedule(ScheduleKind::linear, steps, beta_min, beta_max); }
};

/// ScheduleSpec::defaults(steps).build(); short schedules still end near pure noise.
NoiseSchedule default_schedule(int steps = 200);

/// alpha_t * x0 + sigma_t * eps.
Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

/// One reverse update t -> t-1 in the epsilon parameterization. `eta` = 0 is
/// deterministic DDIM and `eta` = 1 is ancestral DDPM. At t = 0 the predicted
/// clean image is returned and `rng` is not touched.
Tensor reverse_step(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched, double eta,
                    Rng& rng);

/// (x_t - sigma_t eps_hat) / alpha_t.
Tensor predict_x0(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched);

}  // namespace refpaint
