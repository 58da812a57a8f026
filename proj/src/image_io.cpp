#include "refpaint/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "refpaint/error.hpp"

namespace refpaint {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    require(f != nullptr, ErrorKind::io, "cannot open " + path.string());
    return f;
}

bool has_png_signature(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

Image8 read_png(const std::filesystem::path& path) {
    auto f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, ErrorKind::io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        raise(ErrorKind::io, "malformed PNG " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    Image8 img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = static_cast<int>(png_get_channels(png, info));
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        rows[static_cast<std::size_t>(y)] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    require(img.channels == 1 || img.channels == 3, ErrorKind::io, "unsupported PNG channel layout in " + path.string());
    return img;
}

Image8 read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open " + path.string());
    std::string magic;
    in >> magic;
    require(magic == "P6" || magic == "P5", ErrorKind::io, "unsupported image format in " + path.string());
    auto next_int = [&]() {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string comment;
            std::getline(in, comment);
            in >> std::ws;
        }
        int v = -1;
        in >> v;
        return v;
    };
    Image8 img;
    img.width = next_int();
    img.height = next_int();
    const int maxval = next_int();
    require(in.good() && img.width > 0 && img.height > 0 && maxval == 255, ErrorKind::io,
            "unsupported PNM header in " + path.string());
    in.get();  // single whitespace before the raster
    img.channels = magic == "P6" ? 3 : 1;
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    require(in.gcount() == static_cast<std::streamsize>(img.pixels.size()), ErrorKind::io,
            "truncated raster in " + path.string());
    return img;
}

}  // namespace

Image8 read_image8(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorKind::io, "no such file " + path.string());
    return has_png_signature(path) ? read_png(path) : read_pnm(path);
}

void write_png(const std::filesystem::path& path, const Image8& img) {
    require(img.channels == 1 || img.channels == 3, ErrorKind::io, "PNG writer supports 1 or 3 channels");
    auto f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, ErrorKind::io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        raise(ErrorKind::io, "failed writing PNG " + path.string());
    }
    png_init_io(png, f.get());
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        auto* row = const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels);
        png_write_row(png, row);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_pnm(const std::filesystem::path& path, const Image8& img) {
    require(img.channels == 1 || img.channels == 3, ErrorKind::io, "PNM writer supports 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot open " + path.string());
    out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    require(out.good(), ErrorKind::io, "failed writing " + path.string());
}

void write_image8(const std::filesystem::path& path, const Image8& img) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") {
        write_png(path, img);
    } else {
        write_pnm(path, img);
    }
}

Tensor image8_to_tensor(const Image8& img) {
    const std::int64_t h = img.height, w = img.width;
    Tensor t({3, h, w});
    for (std::int64_t c = 0; c < 3; ++c) {
        const int src_c = img.channels == 3 ? static_cast<int>(c) : 0;
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                const auto v = img.pixels[static_cast<std::size_t>((y * w + x) * img.channels + src_c)];
                t.at(c, y, x) = static_cast<double>(v) / 127.5 - 1.0;
            }
        }
    }
    return t;
}

Image8 tensor_to_image8(const Tensor& t) {
    require(t.rank() == 3 && (t.dim(0) == 3 || t.dim(0) == 1), ErrorKind::shape,
            "expected a [3,H,W] or [1,H,W] image, got " + shape_str(t.shape()));
    Image8 img;
    img.channels = static_cast<int>(t.dim(0));
    img.height = static_cast<int>(t.dim(1));
    img.width = static_cast<int>(t.dim(2));
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                const double v = std::round((t.at(c, y, x) + 1.0) * 127.5);
                img.pixels[static_cast<std::size_t>((y * img.width + x) * img.channels + c)] =
                    static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }
        }
    }
    return img;
}

Tensor read_image(const std::filesystem::path& path) {
    return image8_to_tensor(read_image8(path));
}

void write_image(const std::filesystem::path& path, const Tensor& t) {
    write_image8(path, tensor_to_image8(t));
}

Mask read_mask(const std::filesystem::path& path) {
    const Image8 img = read_image8(path);
    Mask m(img.height, img.width, 0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            m.set(y, x, img.pixels[static_cast<std::size_t>((y * img.width + x) * img.channels)] >= 128);
        }
    }
    return m;
}

void write_mask(const std::filesystem::path& path, const Mask& m) {
    Image8 img;
    img.width = m.width();
    img.height = m.height();
    img.channels = 1;
    img.pixels.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) img.pixels[i] = m.cells()[i] ? 255 : 0;
    write_image8(path, img);
}

}  // namespace refpaint
