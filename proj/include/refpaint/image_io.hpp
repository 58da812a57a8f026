#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "refpaint/mask.hpp"
#include "refpaint/tensor.hpp"

namespace refpaint {

/// Interleaved 8-bit pixels (1 or 3 channels).
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

/// PNG, PPM (P6) or PGM (P5), chosen by file contents.
Image8 read_image8(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image8& img);
void write_pnm(const std::filesystem::path& path, const Image8& img);
/// PNG for ".png", PNM otherwise.
void write_image8(const std::filesystem::path& path, const Image8& img);

/// [3,H,W] in [-1,1]; grayscale input is replicated to three channels.
Tensor image8_to_tensor(const Image8& img);
/// round((x + 1) * 127.5), clamped to [0, 255].
Image8 tensor_to_image8(const Tensor& t);

Tensor read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Tensor& t);

/// Grayscale mask; values >= 128 map to 1 (keep). RGB input uses channel 0.
Mask read_mask(const std::filesystem::path& path);
/// Writes 0/255 grayscale, PNG or PGM by extension.
void write_mask(const std::filesystem::path& path, const Mask& m);

}  // namespace refpaint
