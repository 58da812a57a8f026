#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "refpaint/error.hpp"
#include "refpaint/sampler.hpp"

using namespace refpaint;
using namespace refpaint::testing;

namespace {

Mask half_mask(int n) {
    Mask m = Mask::ones(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = n / 4; x < 3 * n / 4; ++x) m.set(y, x, y >= n / 4 && y < 3 * n / 4 ? 0 : 1);
    return m;
}

struct Scene {
    Tensor bg, ref;
    Mask m_bg, m_o;
};

Scene scene(int res) {
    const Dataset ds = procedural_corpus(99, 3, res);
    return {ds.images[0], ds.images[1], half_mask(res), half_mask(res).complement()};
}

BranchFn zero_branches() {
    return [](const Tensor& x, int) {
        const Tensor z(x.shape());
        return std::array<Tensor, 3>{z, z, z};
    };
}

}  // namespace

TEST_SUITE("sampler") {
TEST_CASE("combine_guidance limits are exact and the interior matches the weighted sum") {
    Rng r(1);
    const Tensor a = uniform_tensor({3, 4, 4}, r), b = uniform_tensor({3, 4, 4}, r), c = uniform_tensor({3, 4, 4}, r);
    CHECK(combine_guidance(a, b, c, 0.0, 0.3) == a);
    CHECK(combine_guidance(a, b, c, 1.0, 1.0) == b);
    CHECK(combine_guidance(a, b, c, 1.0, 0.0) == c);
    for (double omega : {0.5, 2.0, 7.5}) {
        for (double gamma : {0.0, 0.25, 1.0}) {
            const Tensor out = combine_guidance(a, b, c, omega, gamma);
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double ref = (1 - omega) * a[i] + omega * gamma * b[i] + omega * (1 - gamma) * c[i];
                CHECK(std::abs(out[i] - ref) < 1e-12);
            }
        }
    }
}

TEST_CASE("blend_step replaces known pixels by the noised background") {
    const NoiseSchedule s = default_schedule(10);
    Rng r(2);
    const Tensor x = uniform_tensor({3, 8, 8}, r), bg = uniform_tensor({3, 8, 8}, r), e = uniform_tensor({3, 8, 8}, r);
    const Mask m = half_mask(8);
    const Tensor out = blend_step(x, bg, m, 4, s, e);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
            for (int xx = 0; xx < 8; ++xx) {
                const double want = m.at(y, xx) ? s.alpha_at(4) * bg.at(c, y, xx) + s.sigma_at(4) * e.at(c, y, xx)
                                                : x.at(c, y, xx);
                CHECK(std::abs(out.at(c, y, xx) - want) < 1e-14);
            }
    CHECK_THROWS_AS(blend_step(x, bg, Mask::ones(4, 4), 4, s, e), Error);
}

TEST_CASE("composite clamps the hole and copies the background") {
    Tensor x0({3, 2, 2}, 3.0);
    x0[1] = -5.0;
    x0[2] = 0.25;
    Rng r(3);
    const Tensor bg = uniform_tensor({3, 2, 2}, r);
    Mask m = Mask::zeros(2, 2);
    m.set(1, 1, 1);
    const Tensor out = composite(x0, bg, m);
    CHECK(out[0] == 1.0);
    CHECK(out[1] == -1.0);
    CHECK(out[2] == 0.25);
    CHECK(out[3] == bg[3]);
}

TEST_CASE("zero-epsilon DDIM loop ends at the rescaled initial noise") {
    const NoiseSchedule s = default_schedule(6);
    const int n = 8;
    const Tensor bg(Shape{3, n, n}, 0.5);
    GuidanceParams g;
    g.rho = 1.0;  // no blending
    const Tensor out = sample_loop(zero_branches(), bg, half_mask(n), s, g, 11);
    Rng init = Rng::derive(11, {0x5A3E, 0});
    const Tensor xT = Tensor::normal(bg.shape(), init);
    const Mask m = half_mask(n);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool keep = m.cells()[i % m.size()];
        const double want = keep ? 0.5 : std::clamp(xT[i] / s.alpha_at(5), -1.0, 1.0);
        CHECK(std::abs(out[i] - want) < 1e-9);
    }
}

TEST_CASE("no-hole mask returns the background bit-exactly") {
    const Checkpoint ck = make_test_checkpoint();
    const Scene sc = scene(16);
    const Tensor out = inpaint(ck, sc.bg, Mask::ones(16, 16), sc.ref, sc.m_o, GuidanceParams{}, 1);
    CHECK(out == sc.bg);
}

TEST_CASE("sampling is deterministic in the seed") {
    const Checkpoint ck = make_test_checkpoint();
    const Scene sc = scene(16);
    GuidanceParams g;
    g.eta = 1.0;
    const Tensor a = inpaint(ck, sc.bg, sc.m_bg, sc.ref, sc.m_o, g, 5);
    const Tensor b = inpaint(ck, sc.bg, sc.m_bg, sc.ref, sc.m_o, g, 5);
    const Tensor c = inpaint(ck, sc.bg, sc.m_bg, sc.ref, sc.m_o, g, 6);
    CHECK(a == b);
    CHECK(max_abs_diff(a, c) > 1e-3);
    CHECK(a.all_finite());
}

TEST_CASE("omega=0 ignores the reference") {
    const Checkpoint ck = make_test_checkpoint();
    const Scene sc = scene(16);
    GuidanceParams g;
    g.omega = 0.0;
    const Tensor a = inpaint(ck, sc.bg, sc.m_bg, sc.ref, sc.m_o, g, 3);
    Rng r(9);
    const Tensor other = uniform_tensor({3, 16, 16}, r);
    const Tensor b = inpaint(ck, sc.bg, sc.m_bg, other, Mask::ones(16, 16), g, 3);
    CHECK(a == b);
}

TEST_CASE("output is continuous in gamma") {
    const Checkpoint ck = make_test_checkpoint();
    const Scene sc = scene(16);
    GuidanceParams g;
    g.gamma = 0.5;
    const Tensor a = inpaint(ck, sc.bg, sc.m_bg, sc.ref, sc.m_o, g, 3);
    g.gamma = 0.5 + 1e-7;
    const Tensor b = inpaint(ck, sc.bg, sc.m_bg, sc.ref, sc.m_o, g, 3);
    CHECK(max_abs_diff(a, b) < 1e-4);
}

TEST_CASE("batched branches agree with identical contexts") {
    const Checkpoint ck = make_test_checkpoint();
    const Scene sc = scene(16);
    const Embedding zero = Embedding::zeros(static_cast<std::size_t>(ck.model.embed_dim));
    const auto e = make_branches(ck, zero, zero, apply_mask(sc.bg, sc.m_bg), sc.m_bg)(sc.bg, 4);
    CHECK(max_abs_diff(e[0], e[1]) < 1e-12);
    CHECK(max_abs_diff(e[0], e[2]) < 1e-12);
}

TEST_CASE("missing basis and bad parameters are reported") {
    Checkpoint ck = make_test_checkpoint();
    ck.pca.reset();
    const Scene sc = scene(16);
    try {
        inpaint(ck, sc.bg, sc.m_bg, sc.ref, sc.m_o, GuidanceParams{}, 0);
        FAIL("expected a configuration error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::configuration);
    }
    GuidanceParams g;
    g.gamma = 1.5;
    CHECK_THROWS_AS(g.validate(), Error);
    g = GuidanceParams{};
    g.omega = -1;
    CHECK_THROWS_AS(g.validate(), Error);
}
}
