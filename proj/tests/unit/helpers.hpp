#pragma once

#include <filesystem>
#include <string>

#include "refpaint/model_config.hpp"
#include "refpaint/rng.hpp"
#include "refpaint/tensor.hpp"

namespace refpaint::testing {

/// 8x8, base 4 model used by the gradient checks and fast tests.
inline DenoiserConfig tiny_config() {
    DenoiserConfig c;
    c.resolution = 8;
    c.base_channels = 4;
    c.levels = 3;
    c.channel_mult = {1, 2, 2};
    c.blocks_per_level = 1;
    c.attn_levels = {1, 2};
    c.embed_dim = 8;
    c.patch_size = 4;
    c.groups = 2;
    return c;
}

/// 16x16 model, big enough for 8x8 masks and 2x2 tokens.
inline DenoiserConfig small_config() {
    DenoiserConfig c = tiny_config();
    c.resolution = 16;
    c.base_channels = 8;
    c.patch_size = 8;
    c.groups = 4;
    return c;
}

inline Tensor uniform_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = rng.uniform(lo, hi);
    return t;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("refpaint_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace refpaint::testing

#include "refpaint/params.hpp"

namespace refpaint::testing {

/// Adds N(0, scale^2) noise to every tensor so that zero-initialised layers
/// (the output convolution) do not hide gradients.
inline ParamTable perturbed(ParamTable p, std::uint64_t seed, double scale = 0.1) {
    Rng r(seed);
    for (auto& [name, t] : p)
        for (auto& v : t.storage()) v += scale * r.normal();
    return p;
}

}  // namespace refpaint::testing

#include "refpaint/checkpoint.hpp"
#include "refpaint/dataset.hpp"
#include "refpaint/training_run.hpp"

namespace refpaint::testing {

/// small_config checkpoint with perturbed weights, a short schedule and a
/// rank-2 basis fitted on a procedural corpus.
inline Checkpoint make_test_checkpoint(std::uint64_t seed = 7, int steps = 10) {
    Checkpoint c;
    c.model = small_config();
    c.schedule = ScheduleSpec::defaults(steps);
    c.params = perturbed(init_params(c.model, seed), seed + 1);
    const Dataset ds = procedural_corpus(seed, 16, c.model.resolution);
    const auto emb = corpus_embeddings(ds, c.params, c.model);
    c.pca = fit_semantic_basis(emb, 2, 0.9);
    return c;
}

}  // namespace refpaint::testing
