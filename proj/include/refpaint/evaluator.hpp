#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "refpaint/embedder.hpp"
#include "refpaint/mask.hpp"

namespace refpaint {

/// Inclusive bounding box of the cells equal to `value`.
struct Box {
    int y0 = 0, x0 = 0, y1 = -1, x1 = -1;
    bool empty() const noexcept { return y1 < y0 || x1 < x0; }
    int height() const noexcept { return y1 - y0 + 1; }
    int width() const noexcept { return x1 - x0 + 1; }
};

Box bounding_box(const Mask& m, std::uint8_t value);

/// Nearest-neighbour crop of image[C,H,W] at `box`, rescaled to out_h x out_w.
Tensor crop_resize_nearest(const Tensor& image, const Box& box, int out_h, int out_w);

/// I_bg where M_bg = 1; inside the hole, the reference object (I_r masked by
/// M_o) with its bounding box rescaled onto the hole's bounding box.
Tensor copy_paste(const Tensor& i_bg, const Mask& m_bg, const Tensor& i_r, const Mask& m_o);

/// 1 - cosine similarity, clamped to [0, 2]; 1 when either vector is zero.
double cosine_distance(const Embedding& a, const Embedding& b);
double embed_distance(const Tensor& a, const Tensor& b, const ImageEncoder& encoder);

struct EvalRow {
    std::string name;
    double dist_original = 0.0;
    double dist_cp_object = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_original() const;
    double mean_cp_object() const;
    /// Header row, one row per image, then a "mean" row.
    void write_csv(std::ostream& out) const;
};

/// dist_original over whole images; dist_cp_object over hole bounding-box
/// crops resized to the images' size.
EvalRow eval_pair(const Tensor& output, const Tensor& original, const Tensor& cp_result, const Mask& m_bg,
                  const ImageEncoder& encoder);

}  // namespace refpaint
