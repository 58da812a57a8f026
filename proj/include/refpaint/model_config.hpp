#pragma once

#include <vector>

namespace refpaint {

/// Architecture of the conditional UNet, its ladder-side encoder and the
/// patch-token embedder. Every parameter shape is derived from this.
struct DenoiserConfig {
    int resolution = 32;
    int in_channels = 3;
    int base_channels = 32;
    int levels = 3;  ///< spatial size halves between consecutive levels
    int blocks_per_level = 2;
    std::vector<int> channel_mult = {1, 2, 2};
    std::vector<int> attn_levels = {1, 2};  ///< decoder levels with cross-attention
    int embed_dim = 64;
    int patch_size = 8;
    int groups = 8;  ///< group-norm groups
    bool enable_ladder_side = true;
    bool enable_mask_fusion = true;
    bool fusion_mask_invert = false;

    int channels_at(int level) const { return base_channels * channel_mult[static_cast<std::size_t>(level)]; }
    int time_dim() const { return 4 * base_channels; }
    int token_grid() const { return resolution / patch_size; }
    int token_count() const { return token_grid() * token_grid(); }
    bool has_attention(int level) const;

    /// Throws a parameter error for inconsistent settings.
    void validate() const;
};

}  // namespace refpaint
