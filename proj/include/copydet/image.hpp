#pragma once

#include <cstdint>
#include <vector>

#include "copydet/errors.hpp"

namespace copydet {

// Axis-aligned rectangle, top-left origin.
struct CropBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool operator==(const CropBox&) const = default;
    bool inside(int img_w, int img_h) const {
        return x >= 0 && y >= 0 && w >= 1 && h >= 1 && x + w <= img_w && y + h <= img_h;
    }
};

// 8-bit raster, row-major, 1 or 3 channels interleaved.
struct ImageBuf {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<uint8_t> data;

    ImageBuf() = default;
    ImageBuf(int w, int h, int c)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, 0) {}

    uint8_t& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    uint8_t at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    bool operator==(const ImageBuf&) const = default;
};

// Single-channel raster with values in [0, 1].
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    GrayImage() = default;
    GrayImage(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h, 0.f) {}

    float& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    float at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    bool operator==(const GrayImage&) const = default;
};

namespace imaging {

// Luma mapping 0.299 R + 0.587 G + 0.114 B, rescaled to [0, 1].
GrayImage to_grayscale(const ImageBuf& img);

// Bilinear resample to exactly (out_w, out_h).
ImageBuf resize(const ImageBuf& img, int out_w, int out_h);
GrayImage resize(const GrayImage& img, int out_w, int out_h);

// Rescale so min(width, height) == target, aspect preserved.
GrayImage resize_min_edge(const GrayImage& img, int target);
ImageBuf resize_min_edge(const ImageBuf& img, int target);

ImageBuf flip_horizontal(const ImageBuf& img);
GrayImage flip_horizontal(const GrayImage& img);

ImageBuf crop(const ImageBuf& img, const CropBox& box);
GrayImage crop(const GrayImage& img, const CropBox& box);

} // namespace imaging
} // namespace copydet
