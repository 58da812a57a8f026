#include "refpaint/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "refpaint/error.hpp"
#include "refpaint/rng.hpp"

namespace refpaint {

NoiseSchedule build_schedule(ScheduleKind kind, int steps, double beta_min, double beta_max) {
    require(kind == ScheduleKind::linear, ErrorKind::parameter, "unsupported schedule kind");
    require(steps >= 2, ErrorKind::parameter, "schedule needs at least 2 steps");
    require(beta_min >= 0.0 && beta_min <= beta_max && beta_max < 1.0, ErrorKind::parameter,
            "schedule betas must satisfy 0 <= beta_min <= beta_max < 1");

    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(static_cast<std::size_t>(steps));
    s.alpha.resize(s.beta.size());
    s.sigma.resize(s.beta.size());
    double cumprod = 1.0;
    for (int i = 0; i < steps; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(steps - 1);
        const double b = beta_min + (beta_max - beta_min) * frac;
        const auto ui = static_cast<std::size_t>(i);
        s.beta[ui] = b;
        cumprod *= 1.0 - b;
        s.alpha[ui] = std::sqrt(cumprod);
        s.sigma[ui] = std::sqrt(1.0 - cumprod);
    }
    return s;
}

ScheduleSpec ScheduleSpec::defaults(int steps) {
    require(steps >= 2, ErrorKind::parameter, "schedule needs at least 2 steps");
    const double scale = 1000.0 / static_cast<double>(steps);
    return ScheduleSpec{steps, 1e-4 * scale, std::min(0.02 * scale, 0.999)};
}

NoiseSchedule default_schedule(int steps) {
    return ScheduleSpec::defaults(steps).build();
}

namespace {

void check_t(int t, const NoiseSchedule& sched) {
    require(t >= 0 && t < sched.steps, ErrorKind::parameter,
            "timestep " + std::to_string(t) + " outside [0, " + std::to_string(sched.steps) + ")");
}

}  // namespace

Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    check_same_shape(x0, eps, "forward_sample");
    check_t(t, sched);
    const double a = sched.alpha_at(t);
    const double s = sched.sigma_at(t);
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        out[i] = a * x0[i] + s * eps[i];
    }
    return out;
}

Tensor predict_x0(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched) {
    check_same_shape(x_t, eps_hat, "predict_x0");
    check_t(t, sched);
    const double a = sched.alpha_at(t);
    const double s = sched.sigma_at(t);
    Tensor out(x_t.shape());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        out[i] = (x_t[i] - s * eps_hat[i]) / a;
    }
    return out;
}

Tensor reverse_step(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched, double eta,
                    Rng& rng) {
    require(eta >= 0.0 && eta <= 1.0, ErrorKind::parameter, "eta must lie in [0, 1]");
    Tensor x0 = predict_x0(x_t, eps_hat, t, sched);
    if (t == 0) {
        return x0;
    }
    const double a_t = sched.alpha_at(t);
    const double s_t = sched.sigma_at(t);
    const double a_prev = sched.alpha_at(t - 1);
    const double s_prev = sched.sigma_at(t - 1);

    // DDIM noise scale; eta = 1 recovers the DDPM posterior variance.
    double sigma_eta = 0.0;
    if (eta > 0.0 && s_t > 0.0) {
        sigma_eta = eta * (s_prev / s_t) * std::sqrt(std::max(0.0, 1.0 - (a_t * a_t) / (a_prev * a_prev)));
    }
    const double dir = std::sqrt(std::max(0.0, s_prev * s_prev - sigma_eta * sigma_eta));

    Tensor out(x_t.shape());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        out[i] = a_prev * x0[i] + dir * eps_hat[i];
    }
    if (sigma_eta > 0.0) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] += sigma_eta * rng.normal();
        }
    }
    return out;
}

}  // namespace refpaint
