#include "refpaint/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "refpaint/error.hpp"
#include "refpaint/rng.hpp"

namespace refpaint {

Mask::Mask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width), cells_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill ? 1 : 0) {
    require(height >= 0 && width >= 0, ErrorKind::parameter, "mask dimensions must be non-negative");
}

Mask Mask::from_tensor(const Tensor& t) {
    const auto& s = t.shape();
    const bool ok = (s.size() == 2) || (s.size() == 3 && s[0] == 1) || (s.size() == 4 && s[0] == 1 && s[1] == 1);
    require(ok, ErrorKind::shape, "mask tensor must be single-channel, got " + shape_str(s));
    const int h = static_cast<int>(s[s.size() - 2]);
    const int w = static_cast<int>(s[s.size() - 1]);
    Mask m(h, w, 0);
    for (std::size_t i = 0; i < m.cells_.size(); ++i) {
        m.cells_[i] = t[i] >= 0.5 ? 1 : 0;
    }
    return m;
}

Mask Mask::complement() const {
    Mask out = *this;
    for (auto& c : out.cells_) c = c ? 0 : 1;
    return out;
}

double Mask::hole_fraction() const {
    if (cells_.empty()) return 0.0;
    const auto zeros = std::count(cells_.begin(), cells_.end(), std::uint8_t{0});
    return static_cast<double>(zeros) / static_cast<double>(cells_.size());
}

bool Mask::all_ones() const {
    return std::all_of(cells_.begin(), cells_.end(), [](auto c) { return c == 1; });
}

bool Mask::all_zeros() const {
    return std::all_of(cells_.begin(), cells_.end(), [](auto c) { return c == 0; });
}

Tensor Mask::to_tensor() const {
    Tensor t({1, height_, width_});
    for (std::size_t i = 0; i < cells_.size(); ++i) t[i] = cells_[i];
    return t;
}

StrokeParams StrokeParams::defaults_for(int height, int width) {
    StrokeParams p;
    const double scale = static_cast<double>(std::max(height, width)) / 32.0;
    p.min_width *= scale;
    p.max_width *= scale;
    p.min_length *= scale;
    p.max_length *= scale;
    return p;
}

void StrokeParams::validate() const {
    require(min_strokes >= 0 && min_strokes <= max_strokes, ErrorKind::parameter, "stroke count range invalid");
    require(min_width > 0.0 && min_width <= max_width, ErrorKind::parameter, "stroke width range invalid");
    require(min_vertices >= 2 && min_vertices <= max_vertices, ErrorKind::parameter, "vertex count range invalid");
    require(max_angle_step >= 0.0, ErrorKind::parameter, "angle step must be non-negative");
    require(min_length >= 0.0 && min_length <= max_length, ErrorKind::parameter, "segment length range invalid");
    require(min_coverage >= 0.0 && min_coverage <= max_coverage && max_coverage <= 1.0, ErrorKind::parameter,
            "coverage band invalid");
    require(max_retries >= 1, ErrorKind::parameter, "max_retries must be positive");
}

namespace {

double segment_distance_sq(double px, double py, double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0);
    }
    const double cx = ax + t * dx - px, cy = ay + t * dy - py;
    return cx * cx + cy * cy;
}

}  // namespace

void draw_stroke(Mask& mask, const std::vector<std::pair<double, double>>& points, double width) {
    if (points.empty()) return;
    const double r = width / 2.0;
    const double r2 = r * r;
    auto stamp = [&](double ax, double ay, double bx, double by) {
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - r)));
        const int x1 = std::min(mask.width() - 1, static_cast<int>(std::ceil(std::max(ax, bx) + r)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - r)));
        const int y1 = std::min(mask.height() - 1, static_cast<int>(std::ceil(std::max(ay, by) + r)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                if (segment_distance_sq(x + 0.5, y + 0.5, ax, ay, bx, by) <= r2) {
                    mask.set(y, x, 0);
                }
            }
        }
    };
    // Joints: a degenerate segment is a disk.
    for (const auto& [x, y] : points) stamp(x, y, x, y);
    for (std::size_t i = 1; i < points.size(); ++i) {
        stamp(points[i - 1].first, points[i - 1].second, points[i].first, points[i].second);
    }
}

Mask generate_freeform(Rng& rng, int height, int width, const StrokeParams& params) {
    require(height >= 8 && width >= 8, ErrorKind::parameter, "mask must be at least 8x8");
    params.validate();
    if (params.max_strokes == 0) {
        return Mask::ones(height, width);
    }
    for (int attempt = 0; attempt < params.max_retries; ++attempt) {
        Mask m = Mask::ones(height, width);
        const auto strokes = rng.uniform_int(params.min_strokes, params.max_strokes);
        for (std::int64_t s = 0; s < strokes; ++s) {
            const auto vertices = rng.uniform_int(params.min_vertices, params.max_vertices);
            const double stroke_width = rng.uniform(params.min_width, params.max_width);
            double x = rng.uniform(0.0, width);
            double y = rng.uniform(0.0, height);
            double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
            std::vector<std::pair<double, double>> pts{{x, y}};
            for (std::int64_t v = 1; v < vertices; ++v) {
                heading += rng.uniform(-params.max_angle_step, params.max_angle_step);
                const double len = rng.uniform(params.min_length, params.max_length);
                x = std::clamp(x + len * std::cos(heading), 0.0, static_cast<double>(width));
                y = std::clamp(y + len * std::sin(heading), 0.0, static_cast<double>(height));
                pts.emplace_back(x, y);
            }
            draw_stroke(m, pts, stroke_width);
        }
        const double cov = m.hole_fraction();
        if (cov >= params.min_coverage && cov <= params.max_coverage) {
            return m;
        }
    }
    raise(ErrorKind::generation, "could not reach hole coverage band [" + std::to_string(params.min_coverage) + ", " +
                                     std::to_string(params.max_coverage) + "] after " +
                                     std::to_string(params.max_retries) + " attempts");
}

Mask maybe_full_hole(Rng& rng, const Mask& m, double p) {
    require(p >= 0.0 && p <= 1.0, ErrorKind::parameter, "full-hole probability must lie in [0, 1]");
    if (rng.uniform() < p) {
        return Mask::zeros(m.height(), m.width());
    }
    return m;
}

Tensor apply_mask(const Tensor& image, const Mask& m) {
    require(image.rank() == 3 && image.dim(1) == m.height() && image.dim(2) == m.width(), ErrorKind::shape,
            "mask " + std::to_string(m.height()) + "x" + std::to_string(m.width()) + " does not fit image " +
                shape_str(image.shape()));
    Tensor out(image.shape());
    const std::size_t hw = m.size();
    for (std::int64_t c = 0; c < image.dim(0); ++c) {
        for (std::size_t i = 0; i < hw; ++i) {
            const std::size_t k = static_cast<std::size_t>(c) * hw + i;
            out[k] = m.cells()[i] ? image[k] : 0.0;
        }
    }
    return out;
}

Quadruplet make_quadruplet(const Tensor& image, const Mask& m) {
    Quadruplet q;
    q.background = apply_mask(image, m);
    q.object_mask = m.complement();
    q.object = apply_mask(image, q.object_mask);
    q.background_mask = m;
    return q;
}

Mask downsample_mask(const Mask& m, int factor) {
    require(factor >= 1 && (factor & (factor - 1)) == 0, ErrorKind::parameter, "downsample factor must be a power of two");
    require(m.height() % factor == 0 && m.width() % factor == 0, ErrorKind::parameter,
            "downsample factor " + std::to_string(factor) + " does not divide mask size");
    const int off = (factor - 1) / 2;
    Mask out(m.height() / factor, m.width() / factor, 0);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            out.set(y, x, m.at(y * factor + off, x * factor + off));
        }
    }
    return out;
}

}  // namespace refpaint
