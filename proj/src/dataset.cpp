#include "refpaint/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <numbers>

#include "refpaint/error.hpp"
#include "refpaint/image_io.hpp"
#include "refpaint/mask.hpp"
#include "refpaint/rng.hpp"

namespace refpaint {

const char* to_string(Family f) {
    switch (f) {
        case Family::painting: return "painting";
        case Family::object: return "object";
        case Family::file: return "file";
    }
    return "unknown";
}

Tensor center_crop_square(const Tensor& image) {
    require(image.rank() == 3, ErrorKind::shape, "center_crop_square expects [C,H,W]");
    const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    const std::int64_t s = std::min(h, w);
    const std::int64_t y0 = (h - s) / 2, x0 = (w - s) / 2;
    Tensor out({c, s, s});
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < s; ++y)
            for (std::int64_t x = 0; x < s; ++x) out.at(ch, y, x) = image.at(ch, y0 + y, x0 + x);
    return out;
}

namespace {

/// weights[o] = list of (input index, weight) covering output cell o.
std::vector<std::vector<std::pair<std::int64_t, double>>> area_weights(std::int64_t in, std::int64_t out) {
    std::vector<std::vector<std::pair<std::int64_t, double>>> w(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t o = 0; o < out; ++o) {
        const double lo = static_cast<double>(o) * scale, hi = static_cast<double>(o + 1) * scale;
        for (auto i = static_cast<std::int64_t>(std::floor(lo)); i < std::min<std::int64_t>(in, static_cast<std::int64_t>(std::ceil(hi))); ++i) {
            const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
            if (overlap > 0.0) w[static_cast<std::size_t>(o)].emplace_back(i, overlap / scale);
        }
    }
    return w;
}

}  // namespace

Tensor resize_area(const Tensor& image, int height, int width) {
    require(image.rank() == 3, ErrorKind::shape, "resize_area expects [C,H,W]");
    require(height >= 1 && width >= 1, ErrorKind::parameter, "resize target must be positive");
    const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (h == height && w == width) return image;
    const auto wy = area_weights(h, height), wx = area_weights(w, width);
    Tensor out({c, height, width});
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                double acc = 0.0;
                for (const auto& [iy, ay] : wy[static_cast<std::size_t>(y)])
                    for (const auto& [ix, ax] : wx[static_cast<std::size_t>(x)]) acc += ay * ax * image.at(ch, iy, ix);
                out.at(ch, y, x) = acc;
            }
    return out;
}

Dataset load_dir(const std::filesystem::path& dir, int resolution) {
    require(resolution >= 1, ErrorKind::parameter, "resolution must be positive");
    std::error_code ec;
    require(std::filesystem::is_directory(dir, ec), ErrorKind::io, "not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    Dataset ds;
    ds.resolution = resolution;
    for (const auto& f : files) {
        try {
            Tensor img = resize_area(center_crop_square(read_image(f)), resolution, resolution);
            ds.images.push_back(std::move(img));
            ds.families.push_back(Family::file);
            ds.names.push_back(f.filename().string());
        } catch (const Error& e) {
            std::cerr << "warning: skipping " << f.string() << ": " << e.what() << '\n';
        }
    }
    require(!ds.empty(), ErrorKind::io, "no readable images in " + dir.string());
    return ds;
}

void rgb_to_hue_sat(double r, double g, double b, double& hue, double& sat) {
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double d = mx - mn;
    sat = mx > 0.0 ? d / mx : 0.0;
    if (d <= 0.0) {
        hue = 0.0;
        return;
    }
    double h;
    if (mx == r) {
        h = std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
        h = (b - r) / d + 2.0;
    } else {
        h = (r - g) / d + 4.0;
    }
    hue = h * 60.0;
    if (hue < 0.0) hue += 360.0;
}

namespace {

using Rgb = std::array<double, 3>;

Rgb hsv(double hue_deg, double s, double v) {
    const double h = std::fmod(hue_deg, 360.0) / 60.0;
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
    Rgb rgb{};
    switch (static_cast<int>(h)) {
        case 0: rgb = {c, x, 0}; break;
        case 1: rgb = {x, c, 0}; break;
        case 2: rgb = {0, c, x}; break;
        case 3: rgb = {0, x, c}; break;
        case 4: rgb = {x, 0, c}; break;
        default: rgb = {c, 0, x}; break;
    }
    const double m = v - c;
    for (auto& ch : rgb) ch += m;
    return rgb;
}

void put(Tensor& img, int y, int x, const Rgb& rgb01) {
    for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(rgb01[static_cast<std::size_t>(c)], 0.0, 1.0) * 2.0 - 1.0;
}

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
    return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

Tensor painting(Rng& rng, int res) {
    std::vector<Rgb> palette;
    const double base_hue = rng.uniform(5.0, 50.0);
    for (int i = 0; i < 4; ++i) {
        palette.push_back(hsv(base_hue + rng.uniform(-5.0, 10.0), rng.uniform(0.45, 0.85), rng.uniform(0.45, 0.95)));
    }
    struct Wave { double fx, fy, phase; };
    std::array<Wave, 3> waves{};
    for (auto& w : waves) w = {rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5), rng.uniform(0.0, 2.0 * std::numbers::pi)};

    Tensor img({3, res, res});
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            const double u = static_cast<double>(x) / res, v = static_cast<double>(y) / res;
            Rgb col = palette[0];
            for (std::size_t k = 0; k < waves.size(); ++k) {
                const double s = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (waves[k].fx * u + waves[k].fy * v) + waves[k].phase);
                col = lerp(col, palette[k + 1], 0.6 * s);
            }
            put(img, y, x, col);
        }
    }
    const int strokes = static_cast<int>(rng.uniform_int(4, 9));
    for (int s = 0; s < strokes; ++s) {
        Mask m = Mask::ones(res, res);
        std::vector<std::pair<double, double>> pts;
        double px = rng.uniform(0.0, res), py = rng.uniform(0.0, res);
        double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const int verts = static_cast<int>(rng.uniform_int(2, 4));
        for (int k = 0; k < verts; ++k) {
            pts.emplace_back(px, py);
            angle += rng.uniform(-0.6, 0.6);
            const double len = rng.uniform(0.1, 0.25) * res;
            px += len * std::cos(angle);
            py += len * std::sin(angle);
        }
        draw_stroke(m, pts, rng.uniform(1.0, 2.5) * res / 32.0);
        const Rgb col = palette[static_cast<std::size_t>(rng.uniform_int(0, 3))];
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                if (m.at(y, x)) continue;
                Rgb cur{};
                for (int c = 0; c < 3; ++c) cur[static_cast<std::size_t>(c)] = (img.at(c, y, x) + 1.0) / 2.0;
                put(img, y, x, lerp(cur, col, 0.8));
            }
    }
    return img;
}

Tensor object(Rng& rng, int res) {
    const double gray = rng.uniform(0.25, 0.6);
    const double tilt = rng.uniform(-0.1, 0.1);
    const Rgb fill = hsv(rng.uniform(190.0, 250.0), rng.uniform(0.55, 0.9), rng.uniform(0.55, 0.95));
    const Rgb shade = hsv(rng.uniform(190.0, 250.0), rng.uniform(0.55, 0.9), rng.uniform(0.3, 0.5));
    const int shape = static_cast<int>(rng.uniform_int(0, 2));
    const double cx = rng.uniform(0.3, 0.7) * res, cy = rng.uniform(0.3, 0.7) * res;
    const double size = rng.uniform(0.18, 0.32) * res;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double ct = std::cos(theta), st = std::sin(theta);

    auto inside = [&](double x, double y) {
        const double dx = x - cx, dy = y - cy;
        const double u = ct * dx + st * dy, v = -st * dx + ct * dy;
        switch (shape) {
            case 0: return dx * dx + dy * dy <= size * size;
            case 1: {
                // Triangle with apex at v = -size, base at v = +size/2.
                if (v < -size || v > size / 2.0) return false;
                const double half = (v + size) / 1.5 * 0.866;
                return std::abs(u) <= half;
            }
            default: return std::abs(u) <= size * 1.3 && std::abs(v) <= size * 0.35;
        }
    };

    Tensor img({3, res, res});
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            const double g = std::clamp(gray + tilt * (py / res - 0.5), 0.0, 1.0);
            if (inside(px, py)) {
                const double t = std::clamp((py - (cy - size)) / (2.0 * size), 0.0, 1.0);
                put(img, y, x, lerp(fill, shade, 0.7 * t));
            } else {
                put(img, y, x, {g, g, g * 1.03});
            }
        }
    }
    return img;
}

}  // namespace

Dataset procedural_corpus(std::uint64_t seed, int n, int resolution) {
    require(n >= 1, ErrorKind::parameter, "procedural_corpus needs n >= 1");
    require(resolution >= 8, ErrorKind::parameter, "procedural_corpus needs resolution >= 8");
    Dataset ds;
    ds.resolution = resolution;
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::derive(seed, {0xC0DE, static_cast<std::uint64_t>(i)});
        const Family f = rng.bernoulli(0.5) ? Family::painting : Family::object;
        ds.images.push_back(f == Family::painting ? painting(rng, resolution) : object(rng, resolution));
        ds.families.push_back(f);
        ds.names.push_back(std::string(to_string(f)) + "_" + std::to_string(i));
    }
    return ds;
}

}  // namespace refpaint
