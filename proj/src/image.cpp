#include "copydet/image.hpp"

#include <algorithm>
#include <cmath>

namespace copydet::imaging {

GrayImage to_grayscale(const ImageBuf& img) {
    if (img.channels != 1 && img.channels != 3)
        throw UnsupportedChannels("to_grayscale: channels must be 1 or 3");
    GrayImage out(img.width, img.height);
    const size_t n = static_cast<size_t>(img.width) * img.height;
    if (img.channels == 1) {
        for (size_t i = 0; i < n; ++i)
            out.data[i] = static_cast<float>(img.data[i]) / 255.0f;
    } else {
        for (size_t i = 0; i < n; ++i) {
            const uint8_t* p = &img.data[i * 3];
            float v = (0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2]) / 255.0f;
            out.data[i] = std::clamp(v, 0.0f, 1.0f);
        }
    }
    return out;
}

namespace {

// sample source coordinate for destination index i: align centers
inline void bilinear_coeff(int i, double scale, int src_size, int& i0, int& i1, float& f) {
    double s = (i + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    double limit = src_size - 1;
    if (s > limit) s = limit;
    i0 = static_cast<int>(s);
    i1 = std::min(i0 + 1, src_size - 1);
    f = static_cast<float>(s - i0);
}

} // namespace

ImageBuf resize(const ImageBuf& img, int out_w, int out_h) {
    if (img.width < 1 || img.height < 1) throw DegenerateImage("resize: empty input");
    if (out_w < 1 || out_h < 1) throw ParamOutOfRange("resize: output dims must be >= 1");
    if (out_w == img.width && out_h == img.height) return img;
    ImageBuf out(out_w, out_h, img.channels);
    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        int y0, y1;
        float fy;
        bilinear_coeff(y, sy, img.height, y0, y1, fy);
        for (int x = 0; x < out_w; ++x) {
            int x0, x1;
            float fx;
            bilinear_coeff(x, sx, img.width, x0, x1, fx);
            for (int c = 0; c < img.channels; ++c) {
                float v00 = img.at(x0, y0, c), v10 = img.at(x1, y0, c);
                float v01 = img.at(x0, y1, c), v11 = img.at(x1, y1, c);
                float v = (1 - fy) * ((1 - fx) * v00 + fx * v10) +
                          fy * ((1 - fx) * v01 + fx * v11);
                out.at(x, y, c) = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

GrayImage resize(const GrayImage& img, int out_w, int out_h) {
    if (img.width < 1 || img.height < 1) throw DegenerateImage("resize: empty input");
    if (out_w < 1 || out_h < 1) throw ParamOutOfRange("resize: output dims must be >= 1");
    if (out_w == img.width && out_h == img.height) return img;
    GrayImage out(out_w, out_h);
    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        int y0, y1;
        float fy;
        bilinear_coeff(y, sy, img.height, y0, y1, fy);
        for (int x = 0; x < out_w; ++x) {
            int x0, x1;
            float fx;
            bilinear_coeff(x, sx, img.width, x0, x1, fx);
            float v = (1 - fy) * ((1 - fx) * img.at(x0, y0) + fx * img.at(x1, y0)) +
                      fy * ((1 - fx) * img.at(x0, y1) + fx * img.at(x1, y1));
            out.at(x, y) = v;
        }
    }
    return out;
}

GrayImage resize_min_edge(const GrayImage& img, int target) {
    if (target < 16) throw ParamOutOfRange("resize_min_edge: target must be >= 16");
    int min_edge = std::min(img.width, img.height);
    if (min_edge < 2) throw DegenerateImage("resize_min_edge: input min edge < 2");
    if (min_edge == target) return img;
    double scale = static_cast<double>(target) / min_edge;
    int out_w, out_h;
    if (img.width <= img.height) {
        out_w = target;
        out_h = static_cast<int>(std::lround(img.height * scale));
    } else {
        out_h = target;
        out_w = static_cast<int>(std::lround(img.width * scale));
    }
    return resize(img, out_w, out_h);
}

ImageBuf resize_min_edge(const ImageBuf& img, int target) {
    if (target < 16) throw ParamOutOfRange("resize_min_edge: target must be >= 16");
    int min_edge = std::min(img.width, img.height);
    if (min_edge < 2) throw DegenerateImage("resize_min_edge: input min edge < 2");
    if (min_edge == target) return img;
    double scale = static_cast<double>(target) / min_edge;
    int out_w, out_h;
    if (img.width <= img.height) {
        out_w = target;
        out_h = static_cast<int>(std::lround(img.height * scale));
    } else {
        out_h = target;
        out_w = static_cast<int>(std::lround(img.width * scale));
    }
    return resize(img, out_w, out_h);
}

ImageBuf flip_horizontal(const ImageBuf& img) {
    ImageBuf out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
    return out;
}

GrayImage flip_horizontal(const GrayImage& img) {
    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(x, y) = img.at(img.width - 1 - x, y);
    return out;
}

ImageBuf crop(const ImageBuf& img, const CropBox& box) {
    if (!box.inside(img.width, img.height))
        throw BoxOutOfBounds("crop: box outside image bounds");
    ImageBuf out(box.w, box.h, img.channels);
    for (int y = 0; y < box.h; ++y) {
        const uint8_t* src = &img.data[(static_cast<size_t>(box.y + y) * img.width + box.x) *
                                       img.channels];
        std::copy(src, src + static_cast<size_t>(box.w) * img.channels,
                  &out.data[static_cast<size_t>(y) * box.w * img.channels]);
    }
    return out;
}

GrayImage crop(const GrayImage& img, const CropBox& box) {
    if (!box.inside(img.width, img.height))
        throw BoxOutOfBounds("crop: box outside image bounds");
    GrayImage out(box.w, box.h);
    for (int y = 0; y < box.h; ++y) {
        const float* src = &img.data[static_cast<size_t>(box.y + y) * img.width + box.x];
        std::copy(src, src + box.w, &out.data[static_cast<size_t>(y) * box.w]);
    }
    return out;
}

} // namespace copydet::imaging
