#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "copydet/image.hpp"

namespace copydet {

struct DetectorConfig {
    float edge_threshold = 0.07f; // mean border gradient, calibrated on synthetic pastes
    float min_frac = 0.05f;
    float max_frac = 0.90f;
};

struct BranchInputs {
    ImageBuf global;              // crop when detected, else original
    std::vector<ImageBuf> local;  // [original] or [original, crop]
    bool has_crop = false;
};

// Sobel projection heuristic: strongest step-edge pair per axis forms the
// candidate rectangle, scored by mean border gradient.
std::optional<CropBox> detect_pasted_region(const GrayImage& img, const DetectorConfig& cfg);

std::map<std::string, CropBox> load_crop_boxes(const std::string& path);

BranchInputs route_variants(const ImageBuf& original, const std::optional<CropBox>& detection);

} // namespace copydet
