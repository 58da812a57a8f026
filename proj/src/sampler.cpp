#include "refpaint/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "refpaint/denoiser.hpp"
#include "refpaint/error.hpp"
#include "refpaint/rng.hpp"

namespace refpaint {

void GuidanceParams::validate() const {
    require(std::isfinite(omega) && omega >= 0.0, ErrorKind::parameter, "omega must be >= 0");
    require(gamma >= 0.0 && gamma <= 1.0, ErrorKind::parameter, "gamma must lie in [0, 1]");
    require(eta >= 0.0 && eta <= 1.0, ErrorKind::parameter, "eta must lie in [0, 1]");
    require(rho >= 0.0 && rho <= 1.0, ErrorKind::parameter, "rho must lie in [0, 1]");
}

Tensor combine_guidance(const Tensor& e_phi, const Tensor& e_sem, const Tensor& e_sty, double omega, double gamma) {
    check_same_shape(e_phi, e_sem, "combine_guidance");
    check_same_shape(e_phi, e_sty, "combine_guidance");
    Tensor out(e_phi.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::lerp(e_phi[i], std::lerp(e_sty[i], e_sem[i], gamma), omega);
    }
    return out;
}

namespace {

void check_image(const Tensor& img, const DenoiserConfig& cfg, const char* what) {
    require(img.rank() == 3 && img.dim(0) == cfg.in_channels && img.dim(1) == cfg.resolution &&
                img.dim(2) == cfg.resolution,
            ErrorKind::shape, std::string(what) + " must be [" + std::to_string(cfg.in_channels) + "," +
                                  std::to_string(cfg.resolution) + "," + std::to_string(cfg.resolution) + "], got " +
                                  shape_str(img.shape()));
}

}  // namespace

BranchFn make_branches(const Checkpoint& ckpt, const Embedding& c_ref_sem, const Embedding& c_bg_sty,
                       const Tensor& side, const Mask& m_bg) {
    const auto d = static_cast<std::size_t>(ckpt.model.embed_dim);
    require(c_ref_sem.dim() == d && c_bg_sty.dim() == d, ErrorKind::shape, "conditioning embeddings must have embed_dim");
    const std::array<Embedding, 3> ctx{Embedding::zeros(d), c_ref_sem, c_bg_sty};
    const Tensor context = single_token_context(ctx);
    const Tensor side3 = stack(std::array<Tensor, 3>{side, side, side});
    return [&ckpt, context, side3, m_bg](const Tensor& x_t, int t) {
        ag::Graph g(false);
        ParamScope scope(g, ckpt.params);
        DenoiserInputs in;
        in.x_t = g.constant(stack(std::array<Tensor, 3>{x_t, x_t, x_t}));
        in.t = {t, t, t};
        in.context = ContextBatch{g.constant(context), {1, 1, 1}};
        in.side = g.constant(side3);
        in.masks = {m_bg, m_bg, m_bg};
        const Tensor out = denoiser_forward(scope, ckpt.model, in).value();
        return std::array<Tensor, 3>{out.slice0(0), out.slice0(1), out.slice0(2)};
    };
}

Tensor guided_epsilon(const Tensor& x_t, int t, const Embedding& c_ref_sem, const Embedding& c_bg_sty,
                      const Tensor& side, const Mask& m_bg, const GuidanceParams& g, const Checkpoint& ckpt) {
    g.validate();
    check_image(x_t, ckpt.model, "x_t");
    const auto e = make_branches(ckpt, c_ref_sem, c_bg_sty, side, m_bg)(x_t, t);
    return combine_guidance(e[0], e[1], e[2], g.omega, g.gamma);
}

Tensor blend_step(const Tensor& x_t, const Tensor& i_bg, const Mask& m_bg, int t, const NoiseSchedule& sched,
                  const Tensor& eps_bg) {
    check_same_shape(x_t, i_bg, "blend_step");
    check_same_shape(x_t, eps_bg, "blend_step");
    require(x_t.rank() == 3 && x_t.dim(1) == m_bg.height() && x_t.dim(2) == m_bg.width(), ErrorKind::shape,
            "blend_step mask size does not match image");
    require(t >= 0 && t < sched.steps, ErrorKind::parameter, "blend_step timestep out of range");
    const double a = sched.alpha_at(t), s = sched.sigma_at(t);
    const std::size_t hw = m_bg.size();
    Tensor out = x_t;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (m_bg.cells()[i % hw]) out[i] = a * i_bg[i] + s * eps_bg[i];
    }
    return out;
}

Tensor blend_step(const Tensor& x_t, const Tensor& i_bg, const Mask& m_bg, int t, const NoiseSchedule& sched,
                  Rng& rng) {
    return blend_step(x_t, i_bg, m_bg, t, sched, Tensor::normal(x_t.shape(), rng));
}

Tensor composite(const Tensor& x0, const Tensor& i_bg, const Mask& m_bg) {
    check_same_shape(x0, i_bg, "composite");
    const std::size_t hw = m_bg.size();
    require(x0.rank() == 3 && static_cast<std::size_t>(x0.dim(1) * x0.dim(2)) == hw, ErrorKind::shape,
            "composite mask size does not match image");
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = m_bg.cells()[i % hw] ? i_bg[i] : std::clamp(x0[i], -1.0, 1.0);
    }
    return out;
}

Tensor sample_loop(const BranchFn& branches, const Tensor& i_bg, const Mask& m_bg, const NoiseSchedule& sched,
                   const GuidanceParams& g, std::uint64_t seed) {
    g.validate();
    Rng init = Rng::derive(seed, {0x5A3E, 0});
    Rng step_noise = Rng::derive(seed, {0x5A3E, 1});
    Rng blend_noise = Rng::derive(seed, {0x5A3E, 2});
    Tensor x = Tensor::normal(i_bg.shape(), init);
    const double T = static_cast<double>(sched.steps);
    for (int t = sched.steps - 1; t >= 0; --t) {
        const auto e = branches(x, t);
        const Tensor eps = combine_guidance(e[0], e[1], e[2], g.omega, g.gamma);
        x = reverse_step(x, eps, t, sched, g.eta, step_noise);
        if (t > 0 && static_cast<double>(t) / T >= g.rho) {
            x = blend_step(x, i_bg, m_bg, t - 1, sched, blend_noise);
        }
    }
    return composite(x, i_bg, m_bg);
}

Conditioning conditioning(const Checkpoint& ckpt, const Tensor& i_bg, const Mask& m_bg, const Tensor& i_r,
                          const Mask& m_o) {
    require(ckpt.pca.has_value(), ErrorKind::configuration,
            "checkpoint has no PCA basis; run `refpaint pca` on it first");
    const EncodeResult ref = masked_encode(i_r, m_o, KeepRegion::ones_region, ckpt.params, ckpt.model);
    const EncodeResult bg = masked_encode(i_bg, m_bg, KeepRegion::ones_region, ckpt.params, ckpt.model);
    Conditioning c;
    c.ref_semantic = decompose(ref.embedding, *ckpt.pca).semantic;
    c.bg_style = decompose(bg.embedding, *ckpt.pca).style;
    c.ref_empty = ref.empty;
    return c;
}

Tensor inpaint(const Checkpoint& ckpt, const Tensor& i_bg, const Mask& m_bg, const Tensor& i_r, const Mask& m_o,
               const GuidanceParams& g, std::uint64_t seed) {
    g.validate();
    check_image(i_bg, ckpt.model, "background");
    check_image(i_r, ckpt.model, "reference");
    require(m_bg.height() == ckpt.model.resolution && m_bg.width() == ckpt.model.resolution && m_o.height() == m_bg.height() &&
                m_o.width() == m_bg.width(),
            ErrorKind::shape, "masks must be at model resolution");
    const Conditioning c = conditioning(ckpt, i_bg, m_bg, i_r, m_o);
    const Tensor side = apply_mask(i_bg, m_bg);
    return sample_loop(make_branches(ckpt, c.ref_semantic, c.bg_style, side, m_bg), i_bg, m_bg, ckpt.schedule.build(), g,
                       seed);
}

}  // namespace refpaint
