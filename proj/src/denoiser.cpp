#include "refpaint/denoiser.hpp"

#include <cmath>

#include "refpaint/error.hpp"

namespace refpaint {

namespace {

ag::Var norm(ParamScope& s, const std::string& p, const DenoiserConfig& cfg, const ag::Var& x) {
    return ag::group_norm(x, s(p + ".g"), s(p + ".b"), cfg.groups);
}

ag::Var conv(ParamScope& s, const std::string& p, const ag::Var& x, int stride, int pad) {
    return ag::conv2d(x, s(p + ".w"), s(p + ".b"), stride, pad);
}

ag::Var resblock(ParamScope& s, const std::string& p, const DenoiserConfig& cfg, const ag::Var& x,
                 const ag::Var& temb_act) {
    ag::Var h = conv(s, p + ".conv1", ag::silu(norm(s, p + ".norm1", cfg, x)), 1, 1);
    h = ag::add_channel_bias(h, ag::linear(temb_act, s(p + ".temb.w"), s(p + ".temb.b")));
    h = conv(s, p + ".conv2", ag::silu(norm(s, p + ".norm2", cfg, h)), 1, 1);
    const ag::Var skip = s.contains(p + ".skip.w") ? conv(s, p + ".skip", x, 1, 0) : x;
    return ag::add(skip, h);
}

/// Encoder pass; returns the feature map at the end of every level.
std::vector<ag::Var> encoder(ParamScope& s, const std::string& prefix, const DenoiserConfig& cfg, const ag::Var& x,
                             const ag::Var& temb_act) {
    std::vector<ag::Var> skips;
    ag::Var h = conv(s, prefix + ".conv_in", x, 1, 1);
    for (int l = 0; l < cfg.levels; ++l) {
        const std::string p = prefix + ".level" + std::to_string(l);
        for (int j = 0; j < cfg.blocks_per_level; ++j) {
            h = resblock(s, p + ".block" + std::to_string(j), cfg, h, temb_act);
        }
        skips.push_back(h);
        if (l + 1 < cfg.levels) {
            h = conv(s, p + ".down", h, 2, 1);
        }
    }
    return skips;
}

ag::Var zeros_like(ag::Graph& g, const ag::Var& v) {
    return g.constant(Tensor::zeros(v.shape()));
}

}  // namespace

Tensor timestep_features(std::span<const int> t, int dim) {
    require(dim % 2 == 0, ErrorKind::parameter, "timestep feature dim must be even");
    const int half = dim / 2;
    Tensor out({static_cast<std::int64_t>(t.size()), dim});
    for (std::size_t n = 0; n < t.size(); ++n) {
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
            const double arg = static_cast<double>(t[n]) * freq;
            out[n * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)] = std::sin(arg);
            out[n * static_cast<std::size_t>(dim) + static_cast<std::size_t>(half + i)] = std::cos(arg);
        }
    }
    return out;
}

Tensor single_token_context(std::span<const Embedding> embeddings) {
    require(!embeddings.empty(), ErrorKind::shape, "empty context batch");
    const auto d = static_cast<std::int64_t>(embeddings.front().dim());
    Tensor out({static_cast<std::int64_t>(embeddings.size()), d, 1});
    for (std::size_t n = 0; n < embeddings.size(); ++n) {
        require(static_cast<std::int64_t>(embeddings[n].dim()) == d, ErrorKind::shape, "context dims differ");
        std::copy(embeddings[n].vec.begin(), embeddings[n].vec.end(), out.ptr() + n * static_cast<std::size_t>(d));
    }
    return out;
}

Tensor mask_batch(std::span<const Mask> masks, int factor, bool invert) {
    require(!masks.empty(), ErrorKind::shape, "empty mask batch");
    std::vector<Tensor> items;
    items.reserve(masks.size());
    for (const auto& m : masks) {
        Mask d = downsample_mask(m, factor);
        if (invert) d = d.complement();
        items.push_back(d.to_tensor());
    }
    return stack(items);
}

ag::Var masked_fuse(const ag::Var& side, const ag::Var& enc, const ag::Var& dec, const Tensor& m) {
    check_same_shape(side.value(), enc.value(), "masked_fuse");
    Tensor inv = m;
    for (auto& v : inv.storage()) v = 1.0 - v;
    const ag::Var blended = ag::add(ag::mul_spatial(side, inv), ag::mul_spatial(enc, m));
    return ag::concat_channels(blended, dec);
}

ag::Var cross_attend(ParamScope& s, const std::string& prefix, const DenoiserConfig& cfg, const ag::Var& h,
                     const ContextBatch& context) {
    const ag::Var q = norm(s, prefix + ".norm", cfg, h);
    return ag::cross_attention(h, q, context.tokens, context.valid, s(prefix + ".wq"), s(prefix + ".wk"),
                               s(prefix + ".wv"));
}

ag::Var denoiser_forward(ParamScope& s, const DenoiserConfig& cfg, const DenoiserInputs& in) {
    ag::Graph& g = s.graph();
    const auto& xs = in.x_t.shape();
    require(xs.size() == 4 && xs[1] == cfg.in_channels && xs[2] == cfg.resolution && xs[3] == cfg.resolution,
            ErrorKind::shape, "x_t must be [N," + std::to_string(cfg.in_channels) + "," +
                                  std::to_string(cfg.resolution) + "," + std::to_string(cfg.resolution) + "], got " +
                                  shape_str(xs));
    const auto n = static_cast<std::size_t>(xs[0]);
    require(in.t.size() == n && in.masks.size() == n, ErrorKind::shape, "timesteps/masks must match batch size");
    require(in.side.defined() && in.side.shape() == xs, ErrorKind::shape, "side input must match x_t");
    require(in.context.tokens.defined() && in.context.tokens.shape().size() == 3 &&
                static_cast<std::size_t>(in.context.tokens.shape()[0]) == n &&
                in.context.tokens.shape()[1] == cfg.embed_dim,
            ErrorKind::shape, "context must be [N,D,L] with D = embed_dim");

    const ag::Var tfeat = g.constant(timestep_features(in.t, cfg.base_channels));
    ag::Var temb = ag::linear(tfeat, s("time.fc1.w"), s("time.fc1.b"));
    temb = ag::linear(ag::silu(temb), s("time.fc2.w"), s("time.fc2.b"));
    const ag::Var temb_act = ag::silu(temb);

    const std::vector<ag::Var> enc = encoder(s, "enc", cfg, in.x_t, temb_act);
    std::vector<ag::Var> side;
    if (cfg.enable_ladder_side) {
        side = encoder(s, "side", cfg, in.side, temb_act);
    }

    const int deepest = cfg.levels - 1;
    ag::Var h = resblock(s, "mid.block0", cfg, enc.back(), temb_act);
    if (cfg.has_attention(deepest)) h = cross_attend(s, "mid.attn", cfg, h, in.context);
    h = resblock(s, "mid.block1", cfg, h, temb_act);

    for (int l = deepest; l >= 0; --l) {
        const auto ul = static_cast<std::size_t>(l);
        const std::string p = "dec.level" + std::to_string(l);
        const Tensor m = mask_batch(in.masks, 1 << l, cfg.fusion_mask_invert);
        const ag::Var f_side = cfg.enable_ladder_side ? side[ul] : zeros_like(g, enc[ul]);
        ag::Var fused;
        if (cfg.enable_mask_fusion) {
            fused = masked_fuse(f_side, enc[ul], h, m);
        } else {
            fused = ag::concat_channels(cfg.enable_ladder_side ? ag::add(f_side, enc[ul]) : enc[ul], h);
        }
        h = fused;
        for (int j = 0; j < cfg.blocks_per_level; ++j) {
            h = resblock(s, p + ".block" + std::to_string(j), cfg, h, temb_act);
        }
        if (cfg.has_attention(l)) h = cross_attend(s, p + ".attn", cfg, h, in.context);
        if (l > 0) h = conv(s, p + ".up", ag::upsample_nearest2x(h), 1, 1);
    }
    h = ag::silu(norm(s, "dec.norm_out", cfg, h));
    return conv(s, "dec.conv_out", h, 1, 1);
}

namespace {

ContextBatch context_from_tokens(ag::Graph& g, const PatchTokens& context) {
    const std::int64_t l = static_cast<std::int64_t>(context.count());
    const std::int64_t d = context.tokens.dim(1);
    Tensor ndl({1, d, l});
    for (std::int64_t t = 0; t < l; ++t)
        for (std::int64_t j = 0; j < d; ++j) ndl[static_cast<std::size_t>(j * l + t)] = context.tokens[static_cast<std::size_t>(t * d + j)];
    return ContextBatch{g.constant(std::move(ndl)), context.valid};
}

Tensor batch1(const Tensor& img) {
    require(img.rank() == 3, ErrorKind::shape, "expected a [C,H,W] tensor");
    return img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
}

}  // namespace

Tensor denoise(const ParamTable& params, const DenoiserConfig& cfg, const Tensor& x_t, int t,
               const PatchTokens& context, const Tensor& side, const Mask& m) {
    ag::Graph g(false);
    ParamScope scope(g, params);
    DenoiserInputs in;
    in.x_t = g.constant(batch1(x_t));
    in.t = {t};
    in.context = context_from_tokens(g, context);
    in.side = g.constant(batch1(side));
    in.masks = {m};
    return denoiser_forward(scope, cfg, in).value().reshaped(x_t.shape());
}

Tensor masked_fuse(const Tensor& side, const Tensor& enc, const Tensor& dec, const Mask& m) {
    ag::Graph g(false);
    const ag::Var out = masked_fuse(g.constant(batch1(side)), g.constant(batch1(enc)), g.constant(batch1(dec)),
                                    m.to_tensor().reshaped({1, 1, m.height(), m.width()}));
    const Tensor& v = out.value();
    return v.reshaped({v.dim(1), v.dim(2), v.dim(3)});
}

Tensor cross_attend(const ParamTable& params, const std::string& prefix, const DenoiserConfig& cfg,
                    const Tensor& q_features, const PatchTokens& context) {
    ag::Graph g(false);
    ParamScope scope(g, params);
    const ag::Var out = cross_attend(scope, prefix, cfg, g.constant(batch1(q_features)), context_from_tokens(g, context));
    return out.value().reshaped(q_features.shape());
}

}  // namespace refpaint
