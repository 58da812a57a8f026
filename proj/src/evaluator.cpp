#include "refpaint/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "refpaint/error.hpp"

namespace refpaint {

Box bounding_box(const Mask& m, std::uint8_t value) {
    Box b{m.height(), m.width(), -1, -1};
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            if (m.at(y, x) != value) continue;
            b.y0 = std::min(b.y0, y);
            b.x0 = std::min(b.x0, x);
            b.y1 = std::max(b.y1, y);
            b.x1 = std::max(b.x1, x);
        }
    return b;
}

Tensor crop_resize_nearest(const Tensor& image, const Box& box, int out_h, int out_w) {
    require(image.rank() == 3 && !box.empty(), ErrorKind::shape, "crop_resize_nearest needs [C,H,W] and a box");
    Tensor out({image.dim(0), out_h, out_w});
    for (std::int64_t c = 0; c < image.dim(0); ++c)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                const int sy = box.y0 + static_cast<int>((static_cast<std::int64_t>(y) * box.height()) / out_h);
                const int sx = box.x0 + static_cast<int>((static_cast<std::int64_t>(x) * box.width()) / out_w);
                out.at(c, y, x) = image.at(c, sy, sx);
            }
    return out;
}

Tensor copy_paste(const Tensor& i_bg, const Mask& m_bg, const Tensor& i_r, const Mask& m_o) {
    check_same_shape(i_bg, i_r, "copy_paste");
    require(i_bg.rank() == 3 && i_bg.dim(1) == m_bg.height() && i_bg.dim(2) == m_bg.width() && m_o.height() == m_bg.height() &&
                m_o.width() == m_bg.width(),
            ErrorKind::shape, "copy_paste masks must match the images");
    if (m_bg.all_ones()) return i_bg;
    const Box hole = bounding_box(m_bg, 0);
    const Box obj = bounding_box(m_o, 1);
    require(!obj.empty(), ErrorKind::degenerate_input, "copy_paste: reference object mask is empty");
    const Tensor object = crop_resize_nearest(apply_mask(i_r, m_o), obj, hole.height(), hole.width());
    Tensor out = i_bg;
    for (std::int64_t c = 0; c < i_bg.dim(0); ++c)
        for (int y = hole.y0; y <= hole.y1; ++y)
            for (int x = hole.x0; x <= hole.x1; ++x) {
                if (!m_bg.at(y, x)) out.at(c, y, x) = object.at(c, y - hole.y0, x - hole.x0);
            }
    return out;
}

double cosine_distance(const Embedding& a, const Embedding& b) {
    require(a.dim() == b.dim(), ErrorKind::shape, "embedding dims differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a.vec[i] * b.vec[i];
        na += a.vec[i] * a.vec[i];
        nb += b.vec[i] * b.vec[i];
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    if (a.vec == b.vec) return 0.0;
    return std::clamp(1.0 - dot / std::sqrt(na * nb), 0.0, 2.0);
}

double embed_distance(const Tensor& a, const Tensor& b, const ImageEncoder& encoder) {
    check_same_shape(a, b, "embed_distance");
    return cosine_distance(encoder(a), encoder(b));
}

EvalRow eval_pair(const Tensor& output, const Tensor& original, const Tensor& cp_result, const Mask& m_bg,
                  const ImageEncoder& encoder) {
    check_same_shape(output, original, "eval_pair");
    check_same_shape(output, cp_result, "eval_pair");
    const Box hole = bounding_box(m_bg, 0);
    require(!hole.empty(), ErrorKind::degenerate_input, "eval_pair: the hole is empty");
    const int h = static_cast<int>(output.dim(1)), w = static_cast<int>(output.dim(2));
    EvalRow row;
    row.dist_original = embed_distance(output, original, encoder);
    row.dist_cp_object = embed_distance(crop_resize_nearest(output, hole, h, w), crop_resize_nearest(cp_result, hole, h, w), encoder);
    return row;
}

double EvalReport::mean_original() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.dist_original;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

double EvalReport::mean_cp_object() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.dist_cp_object;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

void EvalReport::write_csv(std::ostream& out) const {
    out << "name,dist_original,dist_cp_object\n" << std::setprecision(6) << std::fixed;
    for (const auto& r : rows) out << r.name << ',' << r.dist_original << ',' << r.dist_cp_object << '\n';
    out << "mean," << mean_original() << ',' << mean_cp_object() << '\n';
}

}  // namespace refpaint
