#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "refpaint/tensor.hpp"

namespace refpaint {

enum class Family { painting, object, file };

const char* to_string(Family f);

/// In-memory image set; images are [3,R,R] with values in [-1, 1].
struct Dataset {
    int resolution = 0;
    std::vector<Tensor> images;
    std::vector<Family> families;
    std::vector<std::string> names;

    std::size_t size() const noexcept { return images.size(); }
    bool empty() const noexcept { return images.empty(); }
};

/// PNG/PPM/PGM files of `dir` in lexicographic order, center-cropped to a
/// square and area-resized to `resolution`. Unreadable files are skipped
/// with a warning on stderr.
Dataset load_dir(const std::filesystem::path& dir, int resolution);

/// Crops the centered square of side min(H, W) from image[C,H,W].
Tensor center_crop_square(const Tensor& image);

/// Area-weighted resampling of image[C,H,W] to [C,size,size].
Tensor resize_area(const Tensor& image, int height, int width);

/// Deterministic toy corpus. Paintings are layered sinusoidal gradients with
/// brush-stroke texture in warm hues; objects are a disk, triangle or bar in
/// cool hues on a near-neutral backdrop.
Dataset procedural_corpus(std::uint64_t seed, int n, int resolution = 32);

/// HSV hue in degrees [0, 360) and saturation of an RGB triple in [0, 1].
void rgb_to_hue_sat(double r, double g, double b, double& hue, double& sat);

}  // namespace refpaint
