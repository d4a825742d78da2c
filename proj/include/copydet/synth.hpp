#pragma once

#include <cstdint>

#include "copydet/image.hpp"

namespace copydet::imaging {

// Deterministic procedural texture: multi-octave value noise plus random
// soft blobs and translucent rectangles. Feature-rich enough for SIFT while
// distinct per seed.
ImageBuf synth_texture(int w, int h, uint64_t seed);

} // namespace copydet::imaging
