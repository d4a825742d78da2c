#include <doctest.h>

#include <cmath>

#include "copydet/errors.hpp"
#include "copydet/image.hpp"
#include "copydet/rng.hpp"

using namespace copydet;

namespace {

ImageBuf random_rgb(int w, int h, uint64_t seed) {
    ImageBuf img(w, h, 3);
    Rng rng(seed);
    for (auto& b : img.data) b = static_cast<uint8_t>(rng.uniform_int(0, 255));
    return img;
}

GrayImage random_gray(int w, int h, uint64_t seed) {
    GrayImage img(w, h);
    Rng rng(seed);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform_real(0.0, 1.0));
    return img;
}

} // namespace

TEST_SUITE("imaging") {

TEST_CASE("to_grayscale maps white to 1 and red to the red luma weight") {
    ImageBuf white(4, 4, 3);
    for (auto& b : white.data) b = 255;
    GrayImage g = imaging::to_grayscale(white);
    for (float v : g.data) CHECK(v == doctest::Approx(1.0f).epsilon(1e-6));

    ImageBuf red(2, 2, 3);
    for (int i = 0; i < 4; ++i) red.data[i * 3] = 255;
    g = imaging::to_grayscale(red);
    for (float v : g.data) CHECK(v == doctest::Approx(0.299f).epsilon(1e-5));
}

TEST_CASE("to_grayscale rescales single-channel input") {
    ImageBuf img(1, 1, 1);
    img.data[0] = 128;
    GrayImage g = imaging::to_grayscale(img);
    CHECK(g.at(0, 0) == doctest::Approx(128.0f / 255.0f).epsilon(1e-6));
}

TEST_CASE("to_grayscale rejects unsupported channel counts") {
    ImageBuf img(2, 2, 3);
    img.channels = 2;
    img.data.resize(8);
    CHECK_THROWS_AS(imaging::to_grayscale(img), UnsupportedChannels);
}

TEST_CASE("to_grayscale output stays in [0, 1]") {
    ImageBuf img = random_rgb(37, 23, 7);
    GrayImage g = imaging::to_grayscale(img);
    for (float v : g.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("resize_min_edge downscales 600x900 to 300x450") {
    GrayImage img = random_gray(600, 900, 11);
    GrayImage out = imaging::resize_min_edge(img, 300);
    CHECK(out.width == 300);
    CHECK(out.height == 450);
}

TEST_CASE("resize_min_edge keeps an image already at target") {
    GrayImage img = random_gray(300, 450, 12);
    GrayImage out = imaging::resize_min_edge(img, 300);
    CHECK(out.width == 300);
    CHECK(out.height == 450);
    CHECK(out.data == img.data);
}

TEST_CASE("resize_min_edge upscales below-target input") {
    GrayImage img = random_gray(150, 200, 13);
    GrayImage out = imaging::resize_min_edge(img, 300);
    CHECK(out.width == 300);
    CHECK(out.height == 400);
}

TEST_CASE("resize_min_edge min edge is exactly target for random sizes") {
    Rng rng(99);
    for (int i = 0; i < 20; ++i) {
        int w = rng.uniform_int(17, 900);
        int h = rng.uniform_int(17, 900);
        GrayImage out = imaging::resize_min_edge(random_gray(w, h, 100 + i), 300);
        CHECK(std::min(out.width, out.height) == 300);
    }
}

TEST_CASE("resize_min_edge rejects degenerate input") {
    GrayImage img(1, 50);
    CHECK_THROWS_AS(imaging::resize_min_edge(img, 300), DegenerateImage);
}

TEST_CASE("flip_horizontal is an involution on random rasters") {
    ImageBuf img = random_rgb(31, 17, 21);
    CHECK(imaging::flip_horizontal(imaging::flip_horizontal(img)) == img);
    GrayImage g = random_gray(29, 13, 22);
    CHECK(imaging::flip_horizontal(imaging::flip_horizontal(g)) == g);
}

TEST_CASE("flip_horizontal reverses a two-pixel row") {
    GrayImage img(2, 1);
    img.at(0, 0) = 0.1f;
    img.at(1, 0) = 0.9f;
    GrayImage out = imaging::flip_horizontal(img);
    CHECK(out.at(0, 0) == 0.9f);
    CHECK(out.at(1, 0) == 0.1f);
}

TEST_CASE("flip_horizontal fixes symmetric images") {
    GrayImage img(5, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x) img.at(x, y) = 0.1f * std::min(x, 4 - x) + 0.2f * y;
    CHECK(imaging::flip_horizontal(img) == img);
}

TEST_CASE("crop with the full-image box is the identity") {
    ImageBuf img = random_rgb(9, 7, 31);
    CHECK(imaging::crop(img, {0, 0, 9, 7}) == img);
}

TEST_CASE("crop extracts a single known pixel") {
    GrayImage img(3, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) img.at(x, y) = y * 3 + x;
    GrayImage out = imaging::crop(img, {1, 1, 1, 1});
    CHECK(out.width == 1);
    CHECK(out.height == 1);
    CHECK(out.at(0, 0) == 4.0f);
}

TEST_CASE("crop rejects out-of-bounds boxes") {
    ImageBuf img = random_rgb(8, 8, 41);
    CHECK_THROWS_AS(imaging::crop(img, {4, 0, 5, 4}), BoxOutOfBounds);
    CHECK_THROWS_AS(imaging::crop(img, {-1, 0, 4, 4}), BoxOutOfBounds);
    CHECK_THROWS_AS(imaging::crop(img, {0, 0, 0, 4}), BoxOutOfBounds);
}

}
