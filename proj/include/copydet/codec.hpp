#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "copydet/image.hpp"

namespace copydet::imaging {

// Decode a PNG or JPEG byte stream. 16-bit sources are reduced to 8-bit,
// alpha is stripped, palettes expanded.
ImageBuf decode_image(const std::vector<uint8_t>& bytes);

ImageBuf load_image(const std::string& path);

std::vector<uint8_t> encode_png(const ImageBuf& img);
std::vector<uint8_t> encode_jpeg(const ImageBuf& img, int quality);

void save_png(const ImageBuf& img, const std::string& path);

} // namespace copydet::imaging
