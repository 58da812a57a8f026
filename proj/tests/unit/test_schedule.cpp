#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "refpaint/error.hpp"
#include "refpaint/rng.hpp"
#include "refpaint/schedule.hpp"

using namespace refpaint;
using refpaint::testing::uniform_tensor;

TEST_SUITE("schedule") {
TEST_CASE("zero-beta schedule is noiseless") {
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 2, 0.0, 0.0);
    CHECK(s.alpha == std::vector<double>{1.0, 1.0});
    CHECK(s.sigma == std::vector<double>{0.0, 0.0});
}

TEST_CASE("T=1000 linear schedule matches a scalar product loop") {
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 1000, 1e-4, 0.02);
    double prod = 1.0;
    for (int i = 0; i < 1000; ++i) {
        prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * i / 999.0);
        CHECK(std::abs(s.alpha[i] * s.alpha[i] - prod) < 1e-12);
    }
}

TEST_CASE("variance preserving, monotone, terminal state near pure noise") {
    for (int T : {10, 50, 200, 1000}) {
        const NoiseSchedule s = default_schedule(T);
        for (int i = 0; i < T; ++i) {
            CHECK(std::abs(s.alpha_at(i) * s.alpha_at(i) + s.sigma_at(i) * s.sigma_at(i) - 1.0) < 1e-12);
            if (i > 0) {
                CHECK(s.alpha_at(i) < s.alpha_at(i - 1));
                CHECK(s.sigma_at(i) > s.sigma_at(i - 1));
            }
        }
        CHECK(s.sigma_at(T - 1) > 0.99);
    }
}

TEST_CASE("invalid ranges are parameter errors") {
    auto kind_of = [](auto fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::io;
    };
    CHECK(kind_of([] { build_schedule(ScheduleKind::linear, 1, 1e-4, 0.02); }) == ErrorKind::parameter);
    CHECK(kind_of([] { build_schedule(ScheduleKind::linear, 10, 0.1, 0.01); }) == ErrorKind::parameter);
    CHECK(kind_of([] { build_schedule(ScheduleKind::linear, 10, -0.1, 0.01); }) == ErrorKind::parameter);
    CHECK(kind_of([] { build_schedule(ScheduleKind::linear, 10, 0.1, 1.0); }) == ErrorKind::parameter);
}

TEST_CASE("forward_sample identities and affinity") {
    Rng r(3);
    const NoiseSchedule zero = build_schedule(ScheduleKind::linear, 4, 0.0, 0.0);
    const Tensor x0 = uniform_tensor({3, 4, 4}, r), eps = Tensor::normal({3, 4, 4}, r);
    CHECK(forward_sample(x0, 0, eps, zero) == x0);

    const NoiseSchedule s = default_schedule(50);
    const Tensor out = forward_sample(Tensor::zeros({3, 4, 4}), 20, eps, s);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == s.sigma_at(20) * eps[i]);

    const Tensor x1 = uniform_tensor({3, 4, 4}, r), e1 = Tensor::normal({3, 4, 4}, r);
    Tensor xs = x0, es = eps;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] += x1[i];
        es[i] += e1[i];
    }
    const Tensor a = forward_sample(x0, 7, eps, s), b = forward_sample(x1, 7, e1, s), c = forward_sample(xs, 7, es, s);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(c[i] - a[i] - b[i]) < 1e-12);

    CHECK_THROWS_AS(forward_sample(x0, 50, eps, s), Error);
    CHECK_THROWS_AS(forward_sample(x0, 0, Tensor::zeros({3, 4, 5}), s), Error);
}

TEST_CASE("DDIM with the true noise recovers x0") {
    Rng r(11);
    const NoiseSchedule s = default_schedule(50);
    const Tensor x0 = uniform_tensor({3, 8, 8}, r), eps = Tensor::normal({3, 8, 8}, r);
    Tensor x = forward_sample(x0, 49, eps, s);
    Rng unused(0);
    for (int t = 49; t >= 0; --t) x = reverse_step(x, eps, t, s, 0.0, unused);
    CHECK(max_abs_diff(x, x0) < 1e-4);
}

TEST_CASE("t=0 returns x0-hat and eta=0 is deterministic") {
    Rng r(5);
    const NoiseSchedule s = default_schedule(20);
    const Tensor xt = Tensor::normal({3, 4, 4}, r);
    Rng g(1);
    const Tensor out = reverse_step(xt, Tensor::zeros({3, 4, 4}), 0, s, 0.0, g);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(xt[i] / s.alpha_at(0)).epsilon(1e-15));

    const Tensor eps = Tensor::normal({3, 4, 4}, r);
    Rng g1(7), g2(99);
    CHECK(reverse_step(xt, eps, 10, s, 0.0, g1) == reverse_step(xt, eps, 10, s, 0.0, g2));
}

TEST_CASE("eta=1 ancestral step has the DDPM posterior variance") {
    const NoiseSchedule s = default_schedule(20);
    const Tensor xt = Tensor::zeros({1, 1, 1}), eps = Tensor::zeros({1, 1, 1});
    Rng g(4);
    const int t = 10;
    double m = 0, m2 = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double v = reverse_step(xt, eps, t, s, 1.0, g)[0];
        m += v;
        m2 += v * v;
    }
    m /= n;
    const double var = m2 / n - m * m;
    const double a_t = s.alpha_at(t), a_p = s.alpha_at(t - 1);
    const double expected = (s.sigma_at(t - 1) * s.sigma_at(t - 1)) / (s.sigma_at(t) * s.sigma_at(t)) *
                            (1.0 - (a_t * a_t) / (a_p * a_p));
    CHECK(std::abs(m) < 5.0 * std::sqrt(expected / n));
    CHECK(std::abs(var - expected) < 5.0 * expected * std::sqrt(2.0 / n));
}
}
