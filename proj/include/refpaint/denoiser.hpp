#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "refpaint/autograd.hpp"
#include "refpaint/embedder.hpp"
#include "refpaint/mask.hpp"
#include "refpaint/model_config.hpp"
#include "refpaint/params.hpp"

namespace refpaint {

/// Context tokens [N,D,L] with per-token validity (N*L flags).
struct ContextBatch {
    ag::Var tokens;
    std::vector<std::uint8_t> valid;
};

struct DenoiserInputs {
    ag::Var x_t;               ///< [N,C,R,R]
    std::vector<int> t;        ///< one timestep per item
    ContextBatch context;
    ag::Var side;              ///< masked background I_bg, [N,C,R,R]
    std::vector<Mask> masks;   ///< M_bg per item (1 = keep)
};

/// Batched epsilon prediction; output has the shape of x_t.
ag::Var denoiser_forward(ParamScope& scope, const DenoiserConfig& cfg, const DenoiserInputs& in);

/// cat[side * (1 - M) + enc * M, dec] with M[N,1,h,w] broadcast over channels.
ag::Var masked_fuse(const ag::Var& side, const ag::Var& enc, const ag::Var& dec, const Tensor& m);

/// Pre-normalised single-head cross-attention with a residual connection.
ag::Var cross_attend(ParamScope& scope, const std::string& prefix, const DenoiserConfig& cfg, const ag::Var& h,
                     const ContextBatch& context);

/// Sinusoidal timestep features [N, dim].
Tensor timestep_features(std::span<const int> t, int dim);

/// Context tensor [N,D,1] holding one global embedding per item.
Tensor single_token_context(std::span<const Embedding> embeddings);

/// Stacks per-item masks, downsampled by `factor`, into [N,1,h,w].
Tensor mask_batch(std::span<const Mask> masks, int factor, bool invert);

// Single-image conveniences (no gradients).
Tensor denoise(const ParamTable& params, const DenoiserConfig& cfg, const Tensor& x_t, int t,
               const PatchTokens& context, const Tensor& side, const Mask& m);
Tensor masked_fuse(const Tensor& side, const Tensor& enc, const Tensor& dec, const Mask& m);
Tensor cross_attend(const ParamTable& params, const std::string& prefix, const DenoiserConfig& cfg,
                    const Tensor& q_features, const PatchTokens& context);

}  // namespace refpaint
