#include <doctest.h>

#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "refpaint/autograd.hpp"
#include "refpaint/rng.hpp"

using namespace refpaint;
using refpaint::testing::uniform_tensor;

namespace {

using Builder = std::function<ag::Var(const std::vector<ag::Var>&)>;

double loss_of(const std::vector<Tensor>& inputs, const Builder& build, const Tensor& target) {
    ag::Graph g(false);
    std::vector<ag::Var> vs;
    for (const auto& t : inputs) vs.push_back(g.constant(t));
    return ag::mse(build(vs), target).value()[0];
}

/// Worst relative error between analytic and central-difference gradients
/// over every entry of every input.
double grad_check(std::vector<Tensor> inputs, const Builder& build, std::uint64_t seed = 1) {
    Rng r(seed);
    Tensor target;
    {
        ag::Graph g(false);
        std::vector<ag::Var> vs;
        for (const auto& t : inputs) vs.push_back(g.constant(t));
        target = uniform_tensor(build(vs).shape(), r);
    }
    ag::Graph g(true);
    std::vector<ag::Var> leaves;
    for (const auto& t : inputs) leaves.push_back(g.leaf(t));
    g.backward(ag::mse(build(leaves), target));

    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor analytic = g.grad(leaves[k]);
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double keep = inputs[k][i];
            inputs[k][i] = keep + h;
            const double fp = loss_of(inputs, build, target);
            inputs[k][i] = keep - h;
            const double fm = loss_of(inputs, build, target);
            inputs[k][i] = keep;
            const double fd = (fp - fm) / (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-7});
            worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
        }
    }
    return worst;
}

double conv_ref(const Tensor& x, const Tensor& w, const Tensor& b, int n, int o, int y, int xx, int stride, int pad) {
    const auto ci = x.dim(1), hh = x.dim(2), ww = x.dim(3), k = w.dim(2);
    double acc = b.empty() ? 0.0 : b[static_cast<std::size_t>(o)];
    for (std::int64_t c = 0; c < ci; ++c)
        for (std::int64_t ky = 0; ky < k; ++ky)
            for (std::int64_t kx = 0; kx < k; ++kx) {
                const std::int64_t iy = y * stride - pad + ky, ix = xx * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= hh || ix >= ww) continue;
                acc += w[static_cast<std::size_t>(((o * ci + c) * k + ky) * k + kx)] *
                       x[static_cast<std::size_t>(((n * ci + c) * hh + iy) * ww + ix)];
            }
    return acc;
}

}  // namespace

TEST_SUITE("autograd") {
TEST_CASE("conv2d forward matches a direct loop") {
    Rng r(2);
    struct Case { int ci, co, h, k, stride, pad; };
    for (const Case cs : {Case{2, 3, 5, 3, 1, 1}, Case{3, 4, 8, 3, 2, 1}, Case{4, 2, 4, 1, 1, 0}, Case{3, 5, 8, 4, 4, 0},
                          Case{1, 2, 6, 3, 1, 0}}) {
        const Tensor x = uniform_tensor({2, cs.ci, cs.h, cs.h}, r);
        const Tensor w = uniform_tensor({cs.co, cs.ci, cs.k, cs.k}, r);
        const Tensor b = uniform_tensor({cs.co}, r);
        ag::Graph g(false);
        const Tensor out = ag::conv2d(g.constant(x), g.constant(w), g.constant(b), cs.stride, cs.pad).value();
        const auto ho = out.dim(2);
        CHECK(ho == (cs.h + 2 * cs.pad - cs.k) / cs.stride + 1);
        for (int n = 0; n < 2; ++n)
            for (int o = 0; o < cs.co; ++o)
                for (int y = 0; y < ho; ++y)
                    for (int xx = 0; xx < ho; ++xx)
                        CHECK(out[static_cast<std::size_t>(((n * cs.co + o) * ho + y) * ho + xx)] ==
                              doctest::Approx(conv_ref(x, w, b, n, o, y, xx, cs.stride, cs.pad)).epsilon(1e-12));
    }
}

TEST_CASE("group_norm forward matches a scalar reference") {
    Rng r(3);
    const Tensor x = uniform_tensor({2, 6, 3, 3}, r, -2, 3), gm = uniform_tensor({6}, r), bt = uniform_tensor({6}, r);
    ag::Graph g(false);
    const Tensor out = ag::group_norm(g.constant(x), g.constant(gm), g.constant(bt), 3).value();
    for (int n = 0; n < 2; ++n)
        for (int grp = 0; grp < 3; ++grp) {
            double mean = 0, var = 0;
            for (int c = grp * 2; c < grp * 2 + 2; ++c)
                for (int i = 0; i < 9; ++i) mean += x[static_cast<std::size_t>((n * 6 + c) * 9 + i)];
            mean /= 18;
            for (int c = grp * 2; c < grp * 2 + 2; ++c)
                for (int i = 0; i < 9; ++i) {
                    const double d = x[static_cast<std::size_t>((n * 6 + c) * 9 + i)] - mean;
                    var += d * d;
                }
            var /= 18;
            for (int c = grp * 2; c < grp * 2 + 2; ++c)
                for (int i = 0; i < 9; ++i) {
                    const auto idx = static_cast<std::size_t>((n * 6 + c) * 9 + i);
                    CHECK(out[idx] == doctest::Approx((x[idx] - mean) / std::sqrt(var + 1e-5) * gm[c] + bt[c]).epsilon(1e-12));
                }
        }
}

TEST_CASE("cross_attention forward matches a scalar reference") {
    Rng r(4);
    const int c = 3, hw = 4, d = 5, l = 3, dk = 2;
    const Tensor h = uniform_tensor({1, c, 2, 2}, r), q = uniform_tensor({1, c, 2, 2}, r), ctx = uniform_tensor({1, d, l}, r);
    const Tensor wq = uniform_tensor({dk, c}, r), wk = uniform_tensor({dk, d}, r), wv = uniform_tensor({c, d}, r);
    const std::vector<std::uint8_t> valid{1, 0, 1};
    ag::Graph g(false);
    const Tensor out = ag::cross_attention(g.constant(h), g.constant(q), g.constant(ctx), valid, g.constant(wq),
                                           g.constant(wk), g.constant(wv))
                           .value();
    for (int p = 0; p < hw; ++p) {
        std::vector<double> score(l, 0.0);
        double z = 0, mx = -1e300;
        for (int t = 0; t < l; ++t) {
            if (!valid[t]) continue;
            for (int a = 0; a < dk; ++a) {
                double qa = 0, ka = 0;
                for (int j = 0; j < c; ++j) qa += wq[a * c + j] * q[j * hw + p];
                for (int j = 0; j < d; ++j) ka += wk[a * d + j] * ctx[j * l + t];
                score[t] += qa * ka / std::sqrt(double(dk));
            }
            mx = std::max(mx, score[t]);
        }
        for (int t = 0; t < l; ++t) z += valid[t] ? std::exp(score[t] - mx) : 0.0;
        for (int ch = 0; ch < c; ++ch) {
            double acc = h[ch * hw + p];
            for (int t = 0; t < l; ++t) {
                if (!valid[t]) continue;
                double v = 0;
                for (int j = 0; j < d; ++j) v += wv[ch * d + j] * ctx[j * l + t];
                acc += std::exp(score[t] - mx) / z * v;
            }
            CHECK(out[ch * hw + p] == doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("gradients of every op match central differences") {
    Rng r(5);
    using V = std::vector<ag::Var>;
    CHECK(grad_check({uniform_tensor({2, 3}, r), uniform_tensor({2, 3}, r)}, [](const V& v) { return ag::add(v[0], v[1]); }) < 1e-6);
    CHECK(grad_check({uniform_tensor({7}, r)}, [](const V& v) { return ag::scale(v[0], -1.7); }) < 1e-6);
    CHECK(grad_check({uniform_tensor({2, 5}, r, -3, 3)}, [](const V& v) { return ag::silu(v[0]); }) < 1e-6);
    CHECK(grad_check({uniform_tensor({2, 6}, r)}, [](const V& v) { return ag::reshape(v[0], {3, 4}); }) < 1e-6);

    const Tensor m = uniform_tensor({2, 1, 3, 3}, r, 0, 1);
    CHECK(grad_check({uniform_tensor({2, 2, 3, 3}, r)}, [&](const V& v) { return ag::mul_spatial(v[0], m); }) < 1e-6);
    CHECK(grad_check({uniform_tensor({2, 2, 3, 3}, r), uniform_tensor({2, 3, 3, 3}, r)},
                     [](const V& v) { return ag::concat_channels(v[0], v[1]); }) < 1e-6);
    CHECK(grad_check({uniform_tensor({2, 3, 2, 2}, r), uniform_tensor({2, 3}, r)},
                     [](const V& v) { return ag::add_channel_bias(v[0], v[1]); }) < 1e-6);
    CHECK(grad_check({uniform_tensor({1, 2, 3, 3}, r)}, [](const V& v) { return ag::upsample_nearest2x(v[0]); }) < 1e-6);
    CHECK(grad_check({uniform_tensor({3, 4}, r), uniform_tensor({5, 4}, r), uniform_tensor({5}, r)},
                     [](const V& v) { return ag::linear(v[0], v[1], v[2]); }) < 1e-6);

    for (const auto& [stride, pad, k] : {std::tuple{1, 1, 3}, std::tuple{2, 1, 3}, std::tuple{1, 0, 1}, std::tuple{2, 0, 2}}) {
        CHECK(grad_check({uniform_tensor({2, 2, 4, 4}, r), uniform_tensor({3, 2, k, k}, r), uniform_tensor({3}, r)},
                         [stride = stride, pad = pad](const V& v) { return ag::conv2d(v[0], v[1], v[2], stride, pad); }) < 1e-6);
    }
    CHECK(grad_check({uniform_tensor({2, 4, 3, 3}, r, -2, 2), uniform_tensor({4}, r), uniform_tensor({4}, r)},
                     [](const V& v) { return ag::group_norm(v[0], v[1], v[2], 2); }) < 1e-5);

    const std::vector<double> keep{1, 0, 1, 1, 1, 0};
    CHECK(grad_check({uniform_tensor({2, 2, 3}, r)}, [&](const V& v) { return ag::mul_tokens(v[0], keep); }) < 1e-6);

    const std::vector<std::uint8_t> valid{1, 1, 0, 0, 1, 1};
    CHECK(grad_check({uniform_tensor({2, 3, 2, 2}, r), uniform_tensor({2, 3, 2, 2}, r), uniform_tensor({2, 4, 3}, r),
                      uniform_tensor({2, 3}, r), uniform_tensor({2, 4}, r), uniform_tensor({3, 4}, r)},
                     [&](const V& v) { return ag::cross_attention(v[0], v[1], v[2], valid, v[3], v[4], v[5]); }) < 1e-6);
}

TEST_CASE("shared inputs accumulate gradients") {
    Rng r(6);
    CHECK(grad_check({uniform_tensor({4}, r)}, [](const std::vector<ag::Var>& v) {
              return ag::add(ag::silu(v[0]), ag::scale(v[0], 3.0));
          }) < 1e-6);
}

TEST_CASE("no-grad graphs and constants") {
    ag::Graph g(false);
    const ag::Var a = g.leaf(Tensor::ones({2}));
    CHECK_FALSE(a.requires_grad());
    ag::Graph h(true);
    const ag::Var c = h.constant(Tensor::ones({2}));
    const ag::Var l = h.leaf(Tensor::ones({2}));
    const ag::Var out = ag::mse(ag::add(c, l), Tensor::zeros({2}));
    h.backward(out);
    CHECK(h.grad(c) == Tensor::zeros({2}));
    CHECK(h.grad(l) == Tensor({2}, std::vector<double>{2.0, 2.0}));
}
}
