#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "refpaint/dataset.hpp"
#include "refpaint/denoiser.hpp"
#include "refpaint/error.hpp"
#include "refpaint/schedule.hpp"
#include "refpaint/trainer.hpp"

using namespace refpaint;
using namespace refpaint::testing;

namespace {

PatchTokens random_tokens(Rng& r, int count, int d, std::vector<std::uint8_t> valid) {
    PatchTokens t;
    t.rows = 1;
    t.cols = count;
    t.tokens = uniform_tensor({count, d}, r);
    t.valid = std::move(valid);
    return t;
}

Mask random_mask(Rng& r, int h, int w) {
    Mask m(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(y, x, r.bernoulli(0.5));
    return m;
}

}  // namespace

TEST_SUITE("denoiser") {
TEST_CASE("output shape equals input shape") {
    for (const auto& [res, ch] : {std::pair{32, 3}, std::pair{64, 1}}) {
        DenoiserConfig cfg;
        cfg.resolution = res;
        cfg.in_channels = ch;
        const ParamTable p = perturbed(init_params(cfg, 1), 2, 0.02);
        Rng r(3);
        const Tensor x = uniform_tensor({ch, res, res}, r);
        const PatchTokens ctx = encode(x, p, cfg).tokens;
        const Tensor out = denoise(p, cfg, x, 5, ctx, x, Mask::ones(res, res));
        CHECK(out.shape() == x.shape());
        CHECK(out.all_finite());
    }
}

TEST_CASE("zero-initialised output layer predicts zero noise at init") {
    const DenoiserConfig cfg = small_config();
    const ParamTable p = init_params(cfg, 7);
    Rng r(1);
    const Tensor x = uniform_tensor({3, 16, 16}, r);
    const Tensor out = denoise(p, cfg, x, 3, encode(x, p, cfg).tokens, x, random_mask(r, 16, 16));
    for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic and sensitive to every input") {
    const DenoiserConfig cfg = small_config();
    const ParamTable p = perturbed(init_params(cfg, 7), 8);
    const ParamTable p2 = perturbed(init_params(cfg, 7), 8);
    CHECK(p == p2);
    Rng r(2);
    const Tensor x = uniform_tensor({3, 16, 16}, r), side = uniform_tensor({3, 16, 16}, r);
    const Mask m = random_mask(r, 16, 16);
    const PatchTokens ctx = encode(side, p, cfg).tokens;
    const Tensor a = denoise(p, cfg, x, 4, ctx, side, m);
    CHECK(a == denoise(p2, cfg, x, 4, ctx, side, m));
    CHECK_FALSE(a == denoise(p, cfg, x, 5, ctx, side, m));
    CHECK_FALSE(a == denoise(p, cfg, x, 4, ctx, uniform_tensor({3, 16, 16}, r), m));
    CHECK_FALSE(a == denoise(p, cfg, uniform_tensor({3, 16, 16}, r), 4, ctx, side, m));
    CHECK_THROWS_AS(denoise(p, cfg, uniform_tensor({3, 8, 8}, r), 4, ctx, side, m), Error);
}

TEST_CASE("ablation wiring") {
    Rng r(4);
    DenoiserConfig no_side = small_config();
    no_side.enable_ladder_side = false;
    const ParamTable p = perturbed(init_params(no_side, 1), 2);
    CHECK(std::none_of(p.begin(), p.end(), [](const auto& kv) { return kv.first.rfind("side.", 0) == 0; }));
    const Tensor x = uniform_tensor({3, 16, 16}, r);
    const PatchTokens ctx = encode(x, p, no_side).tokens;
    const Mask m = random_mask(r, 16, 16);
    const Tensor a = denoise(p, no_side, x, 2, ctx, x, m);
    CHECK(a.all_finite());
    // Without the side branch the side input is ignored.
    CHECK(a == denoise(p, no_side, x, 2, ctx, uniform_tensor({3, 16, 16}, r), m));

    DenoiserConfig no_fuse = small_config();
    no_fuse.enable_mask_fusion = false;
    const ParamTable q = perturbed(init_params(no_fuse, 1), 2);
    // Plain addition ignores the mask.
    CHECK(denoise(q, no_fuse, x, 2, ctx, x, m) == denoise(q, no_fuse, x, 2, ctx, x, random_mask(r, 16, 16)));
}

TEST_CASE("masked_fuse limits and scalar oracle") {
    Rng r(5);
    const Tensor side = uniform_tensor({2, 4, 4}, r), enc = uniform_tensor({2, 4, 4}, r), dec = uniform_tensor({3, 4, 4}, r);
    const Tensor ones = masked_fuse(side, enc, dec, Mask::ones(4, 4));
    const Tensor zeros = masked_fuse(side, enc, dec, Mask::zeros(4, 4));
    REQUIRE(ones.shape() == Shape{5, 4, 4});
    for (std::size_t i = 0; i < 32; ++i) {
        CHECK(ones[i] == enc[i]);
        CHECK(zeros[i] == side[i]);
    }
    for (std::size_t i = 0; i < 48; ++i) {
        CHECK(ones[32 + i] == dec[i]);
        CHECK(zeros[32 + i] == dec[i]);
    }
    Mask checker(4, 4, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) checker.set(y, x, ((y / 2) + (x / 2)) % 2 == 0);
    const Tensor f = masked_fuse(side, enc, dec, checker);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const double mv = checker.at(y, x);
                CHECK(f.at(c, y, x) == side.at(c, y, x) * (1 - mv) + enc.at(c, y, x) * mv);
            }
    const Tensor side2 = uniform_tensor({2, 4, 4}, r);
    Tensor sum = side;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += side2[i];
    const Tensor fa = masked_fuse(side, enc, dec, checker), fb = masked_fuse(side2, Tensor::zeros(enc.shape()), Tensor::zeros(dec.shape()), checker);
    const Tensor fs = masked_fuse(sum, enc, dec, checker);
    for (std::size_t i = 0; i < fs.size(); ++i) CHECK(std::abs(fs[i] - fa[i] - fb[i]) < 1e-12);
    CHECK_THROWS_AS(masked_fuse(side, uniform_tensor({2, 4, 2}, r), dec, checker), Error);
}

TEST_CASE("cross_attend identities") {
    const DenoiserConfig cfg = small_config();
    const ParamTable p = perturbed(init_params(cfg, 1), 3, 0.3);
    Rng r(6);
    const int c = cfg.channels_at(1), d = cfg.embed_dim;
    const Tensor h = uniform_tensor({c, 8, 8}, r);
    const std::string prefix = "dec.level1.attn";

    CHECK(cross_attend(p, prefix, cfg, h, random_tokens(r, 3, d, {0, 0, 0})) == h);

    const PatchTokens one = random_tokens(r, 1, d, {1});
    const Tensor out = cross_attend(p, prefix, cfg, h, one);
    const Tensor& wv = p.at(prefix + ".wv");
    for (int ch = 0; ch < c; ++ch) {
        double v = 0;
        for (int j = 0; j < d; ++j) v += wv[static_cast<std::size_t>(ch * d + j)] * one.tokens[static_cast<std::size_t>(j)];
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) CHECK(out.at(ch, y, x) == doctest::Approx(h.at(ch, y, x) + v).epsilon(1e-12));
    }

    const PatchTokens many = random_tokens(r, 4, d, {1, 0, 1, 1});
    PatchTokens perm = many;
    const int order[4] = {2, 0, 3, 1};
    for (int i = 0; i < 4; ++i) {
        perm.valid[static_cast<std::size_t>(i)] = many.valid[static_cast<std::size_t>(order[i])];
        for (int j = 0; j < d; ++j)
            perm.tokens[static_cast<std::size_t>(i * d + j)] = many.tokens[static_cast<std::size_t>(order[i] * d + j)];
    }
    CHECK(max_abs_diff(cross_attend(p, prefix, cfg, h, many), cross_attend(p, prefix, cfg, h, perm)) < 1e-12);
}

TEST_CASE("analytic gradients of the training loss match finite differences") {
    for (const auto& [side, fuse] : {std::pair{true, true}, std::pair{false, false}}) {
        DenoiserConfig cfg = tiny_config();
        cfg.enable_ladder_side = side;
        cfg.enable_mask_fusion = fuse;
        const ParamTable p = perturbed(init_params(cfg, 1), 2, 0.2);
        const Dataset ds = procedural_corpus(3, 4, 8);
        TrainConfig tc;
        tc.p_drop = 0.0;
        tc.p_full_hole = 0.0;
        const auto batch = prepare_batch(ds.images, 0, 2, default_schedule(20), cfg, tc);
        ParamTable grads;
        train_step(batch, p, grads, 1.0, cfg);
        Rng r(9);
        std::vector<std::string> names;
        for (const auto& kv : p) names.push_back(kv.first);
        double worst = 0;
        for (int i = 0; i < 20; ++i) {
            const std::string& name = names[static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(names.size()) - 1))];
            const auto idx = static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(p.at(name).size()) - 1));
            ParamTable plus = p, minus = p;
            plus[name][idx] += 1e-3;
            minus[name][idx] -= 1e-3;
            const double fd = (evaluate_loss(batch, plus, cfg) - evaluate_loss(batch, minus, cfg)) / 2e-3;
            const double an = grads.at(name)[idx];
            worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}));
        }
        CHECK(worst < 1e-3);
    }
}
}
