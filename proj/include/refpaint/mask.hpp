#pragma once

#include <cstdint>
#include <vector>

#include "refpaint/tensor.hpp"

namespace refpaint {

class Rng;

/// Binary inpainting mask. Convention used everywhere: 1 = keep (untouched
/// background), 0 = inpaint.
class Mask {
public:
    Mask() = default;
    Mask(int height, int width, std::uint8_t fill);

    static Mask ones(int height, int width) { return Mask(height, width, 1); }
    static Mask zeros(int height, int width) { return Mask(height, width, 0); }
    /// Thresholds a [H,W], [1,H,W] or [1,1,H,W] tensor at 0.5.
    static Mask from_tensor(const Tensor& t);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return cells_.size(); }

    std::uint8_t at(int y, int x) const { return cells_[static_cast<std::size_t>(y * width_ + x)]; }
    void set(int y, int x, std::uint8_t v) { cells_[static_cast<std::size_t>(y * width_ + x)] = v ? 1 : 0; }
    const std::vector<std::uint8_t>& cells() const noexcept { return cells_; }

    Mask complement() const;
    /// Fraction of cells equal to 0.
    double hole_fraction() const;
    bool all_ones() const;
    bool all_zeros() const;

    /// [1, H, W] tensor of 0.0 / 1.0.
    Tensor to_tensor() const;

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> cells_;
};

struct StrokeParams {
    int min_strokes = 1;
    int max_strokes = 4;
    double min_width = 2.0;  ///< pixels
    double max_width = 6.0;
    int min_vertices = 3;
    int max_vertices = 8;
    double max_angle_step = 1.5707963267948966;  ///< heading change drawn from [-max, max]
    double min_length = 4.0;                     ///< segment length, pixels
    double max_length = 12.0;
    double min_coverage = 0.1;
    double max_coverage = 0.5;
    int max_retries = 100;

    /// Defaults are tuned for 32x32; geometry scales linearly with image size.
    static StrokeParams defaults_for(int height, int width);
    void validate() const;
};

/// Rasterizes a thick polyline into `mask` as holes (0): every pixel whose
/// center lies within width/2 of a segment, plus a disk of that radius at
/// each vertex.
void draw_stroke(Mask& mask, const std::vector<std::pair<double, double>>& points, double width);

/// Free-form brush-stroke mask; coverage is enforced by rejection sampling.
Mask generate_freeform(Rng& rng, int height, int width, const StrokeParams& params);

/// With probability `p` returns an all-zeros mask, otherwise `m`.
Mask maybe_full_hole(Rng& rng, const Mask& m, double p = 0.25);

/// Self-supervised split of one image into background and hole content.
struct Quadruplet {
    Tensor background;  ///< I_bg = I * M
    Tensor object;      ///< I_o  = I * (1 - M)
    Mask object_mask;   ///< M_o  = 1 - M
    Mask background_mask;  ///< M_bg = M
};

Quadruplet make_quadruplet(const Tensor& image, const Mask& m);

/// Nearest-neighbour subsampling at cell centres; `factor` must divide both sides.
Mask downsample_mask(const Mask& m, int factor);

/// image[C,H,W] * m broadcast over channels.
Tensor apply_mask(const Tensor& image, const Mask& m);

}  // namespace refpaint
