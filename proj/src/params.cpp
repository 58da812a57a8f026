#include "refpaint/params.hpp"

#include <algorithm>
#include <cmath>

#include "refpaint/error.hpp"
#include "refpaint/rng.hpp"

namespace refpaint {

bool DenoiserConfig::has_attention(int level) const {
    return std::find(attn_levels.begin(), attn_levels.end(), level) != attn_levels.end();
}

void DenoiserConfig::validate() const {
    require(levels >= 1, ErrorKind::parameter, "levels must be >= 1");
    require(static_cast<int>(channel_mult.size()) == levels, ErrorKind::parameter,
            "channel_mult needs one entry per level");
    require(resolution % (1 << (levels - 1)) == 0, ErrorKind::parameter,
            "resolution must be divisible by 2^(levels-1)");
    require(base_channels >= 1 && blocks_per_level >= 1 && embed_dim >= 1 && in_channels >= 1, ErrorKind::parameter,
            "channel counts must be positive");
    require(base_channels % 2 == 0, ErrorKind::parameter, "base_channels must be even (sinusoidal embedding)");
    require(patch_size >= 1 && resolution % patch_size == 0, ErrorKind::parameter,
            "patch_size must divide resolution");
    for (int l = 0; l < levels; ++l) {
        require(channel_mult[static_cast<std::size_t>(l)] >= 1, ErrorKind::parameter, "channel_mult entries must be >= 1");
        require(groups >= 1 && channels_at(l) % groups == 0, ErrorKind::parameter,
                "groups must divide every level's channel count");
    }
    for (int a : attn_levels) {
        require(a >= 0 && a < levels, ErrorKind::parameter, "attention level out of range");
    }
}

namespace {

class Initializer {
public:
    Initializer(ParamTable& table, std::uint64_t seed) : table_(table), rng_(Rng::derive(seed, {0x1A17})) {}

    void weight(const std::string& name, Shape shape) {
        Tensor t(std::move(shape));
        for (auto& v : t.storage()) {
            double z = rng_.normal();
            while (std::abs(z) > 2.0) z = rng_.normal();
            v = 0.02 * z;
        }
        put(name, std::move(t));
    }
    void zeros(const std::string& name, Shape shape) { put(name, Tensor::zeros(std::move(shape))); }
    void ones(const std::string& name, Shape shape) { put(name, Tensor::ones(std::move(shape))); }

    void conv(const std::string& p, std::int64_t cout, std::int64_t cin, std::int64_t k) {
        weight(p + ".w", {cout, cin, k, k});
        zeros(p + ".b", {cout});
    }
    void norm(const std::string& p, std::int64_t c) {
        ones(p + ".g", {c});
        zeros(p + ".b", {c});
    }
    void resblock(const std::string& p, std::int64_t cin, std::int64_t cout, std::int64_t tdim) {
        norm(p + ".norm1", cin);
        conv(p + ".conv1", cout, cin, 3);
        weight(p + ".temb.w", {cout, tdim});
        zeros(p + ".temb.b", {cout});
        norm(p + ".norm2", cout);
        conv(p + ".conv2", cout, cout, 3);
        if (cin != cout) conv(p + ".skip", cout, cin, 1);
    }

private:
    void put(const std::string& name, Tensor t) {
        require(table_.emplace(name, std::move(t)).second, ErrorKind::parameter, "duplicate parameter " + name);
    }

    ParamTable& table_;
    Rng rng_;
};

void init_encoder(Initializer& init, const std::string& prefix, const DenoiserConfig& cfg) {
    const std::int64_t tdim = cfg.time_dim();
    init.conv(prefix + ".conv_in", cfg.channels_at(0), cfg.in_channels, 3);
    std::int64_t ch = cfg.channels_at(0);
    for (int l = 0; l < cfg.levels; ++l) {
        const std::int64_t cl = cfg.channels_at(l);
        for (int j = 0; j < cfg.blocks_per_level; ++j) {
            init.resblock(prefix + ".level" + std::to_string(l) + ".block" + std::to_string(j), ch, cl, tdim);
            ch = cl;
        }
        if (l + 1 < cfg.levels) {
            init.conv(prefix + ".level" + std::to_string(l) + ".down", cl, cl, 3);
        }
    }
}

void init_attention(Initializer& init, const std::string& p, std::int64_t c, std::int64_t d) {
    init.norm(p + ".norm", c);
    init.weight(p + ".wq", {c, c});
    init.weight(p + ".wk", {c, d});
    init.weight(p + ".wv", {c, d});
}

}  // namespace

ParamTable init_params(const DenoiserConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamTable table;
    Initializer init(table, seed);
    const std::int64_t base = cfg.base_channels, tdim = cfg.time_dim(), d = cfg.embed_dim;

    init.weight("time.fc1.w", {tdim, base});
    init.zeros("time.fc1.b", {tdim});
    init.weight("time.fc2.w", {tdim, tdim});
    init.zeros("time.fc2.b", {tdim});

    init_encoder(init, "enc", cfg);
    if (cfg.enable_ladder_side) {
        init_encoder(init, "side", cfg);
    }

    const int deepest = cfg.levels - 1;
    const std::int64_t cd = cfg.channels_at(deepest);
    init.resblock("mid.block0", cd, cd, tdim);
    if (cfg.has_attention(deepest)) init_attention(init, "mid.attn", cd, d);
    init.resblock("mid.block1", cd, cd, tdim);

    for (int l = deepest; l >= 0; --l) {
        const std::string p = "dec.level" + std::to_string(l);
        const std::int64_t cl = cfg.channels_at(l);
        for (int j = 0; j < cfg.blocks_per_level; ++j) {
            init.resblock(p + ".block" + std::to_string(j), j == 0 ? 2 * cl : cl, cl, tdim);
        }
        if (cfg.has_attention(l)) init_attention(init, p + ".attn", cl, d);
        if (l > 0) init.conv(p + ".up", cfg.channels_at(l - 1), cl, 3);
    }
    init.norm("dec.norm_out", cfg.channels_at(0));
    init.zeros("dec.conv_out.w", {cfg.in_channels, cfg.channels_at(0), 3, 3});
    init.zeros("dec.conv_out.b", {cfg.in_channels});

    init.conv("embed.patch", d, cfg.in_channels, cfg.patch_size);
    for (int r = 0; r < 2; ++r) {
        const std::string p = "embed.res" + std::to_string(r);
        init.conv(p + ".fc1", d, d, 1);
        init.conv(p + ".fc2", d, d, 1);
    }
    return table;
}

std::int64_t param_count(const ParamTable& params) {
    std::int64_t n = 0;
    for (const auto& [_, t] : params) n += static_cast<std::int64_t>(t.size());
    return n;
}

bool all_finite(const ParamTable& params) {
    return std::all_of(params.begin(), params.end(), [](const auto& kv) { return kv.second.all_finite(); });
}

ag::Var ParamScope::operator()(const std::string& name) {
    if (auto it = bound_.find(name); it != bound_.end()) {
        return it->second;
    }
    auto it = params_.find(name);
    require(it != params_.end(), ErrorKind::shape, "missing parameter " + name);
    ag::Var v = graph_.leaf(it->second);
    bound_.emplace(name, v);
    return v;
}

void ParamScope::accumulate_grads(ParamTable& grads, double scale) const {
    for (const auto& [name, var] : bound_) {
        const Tensor g = graph_.grad(var);
        auto [it, inserted] = grads.try_emplace(name, Tensor::zeros(var.shape()));
        Tensor& dst = it->second;
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += scale * g[i];
    }
}

}  // namespace refpaint
