#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "helpers.hpp"
#include "refpaint/error.hpp"
#include "refpaint/image_io.hpp"
#include "refpaint/mask.hpp"
#include "refpaint/rng.hpp"

using namespace refpaint;

namespace {

// Independent rasterizer: distance from pixel centre to each segment via the
// closest point, computed with hypot.
Mask reference_stroke(int h, int w, const std::vector<std::pair<double, double>>& pts, double width) {
    Mask m = Mask::ones(h, w);
    const double r = width / 2.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            double best = 1e300;
            for (const auto& [vx, vy] : pts) best = std::min(best, std::hypot(px - vx, py - vy));
            for (std::size_t i = 1; i < pts.size(); ++i) {
                const auto [ax, ay] = pts[i - 1];
                const auto [bx, by] = pts[i];
                const double len = std::hypot(bx - ax, by - ay);
                if (len == 0.0) continue;
                const double ux = (bx - ax) / len, uy = (by - ay) / len;
                const double along = (px - ax) * ux + (py - ay) * uy;
                if (along >= 0.0 && along <= len) best = std::min(best, std::abs((px - ax) * uy - (py - ay) * ux));
            }
            if (best <= r + 1e-9) m.set(y, x, 0);
        }
    return m;
}

}  // namespace

TEST_SUITE("mask") {
TEST_CASE("zero strokes give an all-ones mask") {
    Rng r(1);
    StrokeParams p = StrokeParams::defaults_for(32, 32);
    p.min_strokes = p.max_strokes = 0;
    CHECK(generate_freeform(r, 32, 32, p).all_ones());
}

TEST_CASE("golden mask for seed 42 at 32x32") {
    Rng r(42);
    const Mask m = generate_freeform(r, 32, 32, StrokeParams::defaults_for(32, 32));
    const std::filesystem::path golden = std::filesystem::path(REFPAINT_FIXTURE_DIR) / "mask_seed42_32x32.pgm";
    if (std::getenv("REFPAINT_REGEN_FIXTURES")) {
        write_mask(golden, m);
    }
    REQUIRE(std::filesystem::exists(golden));
    CHECK(read_mask(golden) == m);
    Rng again(42);
    CHECK(generate_freeform(again, 32, 32, StrokeParams::defaults_for(32, 32)) == m);
}

TEST_CASE("draw_stroke agrees with a scalar rasterization reference") {
    Rng r(8);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<double, double>> pts;
        const int n = static_cast<int>(r.uniform_int(1, 5));
        for (int i = 0; i < n; ++i) pts.emplace_back(r.uniform(-4.0, 36.0), r.uniform(-4.0, 36.0));
        const double width = r.uniform(1.0, 7.0);
        Mask m = Mask::ones(32, 32);
        draw_stroke(m, pts, width);
        CHECK(m == reference_stroke(32, 32, pts, width));
    }
}

TEST_CASE("coverage band holds on every accepted draw") {
    Rng r(2024);
    const StrokeParams p = StrokeParams::defaults_for(32, 32);
    double total = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Mask m = generate_freeform(r, 32, 32, p);
        const double c = m.hole_fraction();
        REQUIRE(c >= p.min_coverage);
        REQUIRE(c <= p.max_coverage);
        for (auto v : m.cells()) REQUIRE((v == 0 || v == 1));
        total += c;
    }
    CHECK(total / n >= p.min_coverage);
    CHECK(total / n <= p.max_coverage);
}

TEST_CASE("unreachable coverage and bad params raise the right errors") {
    Rng r(3);
    StrokeParams p = StrokeParams::defaults_for(32, 32);
    p.min_coverage = 0.99;
    p.max_coverage = 1.0;
    p.max_retries = 5;
    try {
        generate_freeform(r, 32, 32, p);
        FAIL("expected a generation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::generation);
    }
    StrokeParams bad = StrokeParams::defaults_for(32, 32);
    bad.min_width = -1.0;
    try {
        generate_freeform(r, 32, 32, bad);
        FAIL("expected a parameter error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::parameter);
    }
    CHECK_THROWS_AS(generate_freeform(r, 4, 32, StrokeParams{}), Error);
}

TEST_CASE("maybe_full_hole probabilities") {
    Rng r(77);
    const Mask m = Mask::ones(8, 8);
    for (int i = 0; i < 100; ++i) {
        CHECK(maybe_full_hole(r, m, 0.0) == m);
        CHECK(maybe_full_hole(r, m, 1.0).all_zeros());
    }
    int zeros = 0;
    for (int i = 0; i < 10000; ++i) zeros += maybe_full_hole(r, m, 0.25).all_zeros();
    CHECK(std::abs(zeros / 10000.0 - 0.25) <= 0.02);
}

TEST_CASE("quadruplet identities") {
    Rng r(4);
    const Tensor img = refpaint::testing::uniform_tensor({3, 16, 16}, r);
    const Quadruplet all = make_quadruplet(img, Mask::ones(16, 16));
    CHECK(all.background == img);
    CHECK(all.object == Tensor::zeros(img.shape()));
    CHECK(all.object_mask.all_zeros());
    const Quadruplet none = make_quadruplet(img, Mask::zeros(16, 16));
    CHECK(none.background == Tensor::zeros(img.shape()));
    CHECK(none.object == img);

    for (int trial = 0; trial < 20; ++trial) {
        Mask m(16, 16, 1);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) m.set(y, x, r.bernoulli(0.5));
        const Quadruplet q = make_quadruplet(img, m);
        CHECK(q.object_mask == m.complement());
        CHECK(q.background_mask == m);
        for (std::size_t i = 0; i < img.size(); ++i) {
            CHECK(q.background[i] + q.object[i] == img[i]);
            CHECK(q.background[i] * q.object[i] == 0.0);
        }
    }
    CHECK_THROWS_AS(make_quadruplet(img, Mask::ones(8, 8)), Error);
}

TEST_CASE("downsample_mask") {
    Mask checker(4, 4, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) checker.set(y, x, (x + y) % 2 == 0);
    const Mask d = downsample_mask(checker, 2);
    REQUIRE(d.height() == 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) CHECK(d.at(y, x) == checker.at(2 * y, 2 * x));

    CHECK(downsample_mask(checker, 1) == checker);
    CHECK(downsample_mask(Mask::ones(16, 16), 4).all_ones());
    CHECK(downsample_mask(Mask::zeros(16, 16), 8).all_zeros());

    Rng r(6);
    Mask m(16, 16, 1);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) m.set(y, x, r.bernoulli(0.4));
    for (int f : {1, 2, 4, 8, 16}) CHECK(downsample_mask(m.complement(), f) == downsample_mask(m, f).complement());

    CHECK_THROWS_AS(downsample_mask(Mask::ones(6, 6), 4), Error);
    CHECK_THROWS_AS(downsample_mask(Mask::ones(6, 6), 3), Error);
}

TEST_CASE("tensor conversion thresholds at 0.5") {
    Tensor t({1, 2, 2}, std::vector<double>{0.0, 0.49, 0.5, 1.0});
    const Mask m = Mask::from_tensor(t);
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(0, 1) == 0);
    CHECK(m.at(1, 0) == 1);
    CHECK(Mask::from_tensor(m.to_tensor()) == m);
    CHECK_THROWS_AS(Mask::from_tensor(Tensor::zeros({3, 2, 2})), Error);
}
}
