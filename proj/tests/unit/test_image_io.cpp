#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "refpaint/error.hpp"
#include "refpaint/image_io.hpp"

using namespace refpaint;
using namespace refpaint::testing;

TEST_SUITE("image_io") {
TEST_CASE("png and pnm round trips") {
    const auto dir = temp_dir("image_io");
    Image8 rgb{5, 3, 3, {}};
    for (int i = 0; i < 45; ++i) rgb.pixels.push_back(static_cast<std::uint8_t>(i * 5));
    Image8 gray{4, 2, 1, {0, 10, 128, 255, 1, 2, 3, 4}};
    for (const char* name : {"a.png", "a.ppm"}) {
        write_image8(dir / name, rgb);
        const Image8 back = read_image8(dir / name);
        CHECK(back.width == 5);
        CHECK(back.height == 3);
        CHECK(back.channels == 3);
        CHECK(back.pixels == rgb.pixels);
    }
    for (const char* name : {"g.png", "g.pgm"}) {
        write_image8(dir / name, gray);
        const Image8 back = read_image8(dir / name);
        CHECK(back.channels == 1);
        CHECK(back.pixels == gray.pixels);
    }
}

TEST_CASE("tensor conversion") {
    Image8 g{2, 1, 1, {0, 255}};
    const Tensor t = image8_to_tensor(g);
    CHECK(t.shape() == Shape{3, 1, 2});
    CHECK(t.at(2, 0, 0) == -1.0);
    CHECK(t.at(1, 0, 1) == 1.0);
    Tensor x({3, 1, 2}, std::vector<double>{-2.0, 2.0, 0.0, 0.001, -1.0, 1.0});
    const Image8 out = tensor_to_image8(x);
    CHECK(out.pixels == std::vector<std::uint8_t>{0, 128, 0, 255, 128, 255});

    Rng r(1);
    Image8 noisy{7, 5, 3, {}};
    for (int i = 0; i < 105; ++i) noisy.pixels.push_back(static_cast<std::uint8_t>(r.uniform_int(0, 255)));
    CHECK(tensor_to_image8(image8_to_tensor(noisy)).pixels == noisy.pixels);
}

TEST_CASE("mask threshold and round trip") {
    const auto dir = temp_dir("mask_io");
    write_image8(dir / "m.pgm", Image8{4, 1, 1, {0, 127, 128, 255}});
    const Mask m = read_mask(dir / "m.pgm");
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(0, 1) == 0);
    CHECK(m.at(0, 2) == 1);
    CHECK(m.at(0, 3) == 1);
    write_mask(dir / "m2.png", m);
    CHECK(read_mask(dir / "m2.png") == m);
}

TEST_CASE("unreadable files are io errors") {
    const auto dir = temp_dir("image_bad");
    std::ofstream(dir / "x.png") << "garbage";
    std::ofstream(dir / "y.ppm") << "P6\n4 4\n255\nabc";
    for (const char* name : {"x.png", "y.ppm", "missing.png"}) {
        try {
            read_image8(dir / name);
            FAIL("expected io error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::io);
        }
    }
}
}
