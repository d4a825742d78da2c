#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "copydet/image.hpp"

namespace copydet::sift {

struct SiftParams {
    int scales_per_octave = 3;
    float base_sigma = 1.6f;
    float contrast_threshold = 0.03f; // on [0,1] intensities, divided by scales_per_octave
    float edge_ratio = 10.0f;
    int max_keypoints = 600;
    float descriptor_clip = 0.2f;
};

struct Keypoint {
    float x = 0; // input-image coords, subpixel
    float y = 0;
    float scale = 0;       // effective sigma
    float orientation = 0; // radians in [0, 2pi)
    float response = 0;    // |DoG| at the interpolated extremum

    // pyramid address, used when sampling gradients
    int octave = 0;
    int level = 0;
    float lx = 0; // octave-local refined position and scale
    float ly = 0;
    float lsigma = 0;
};

using SiftDescriptor = std::array<uint8_t, 128>;

struct FeatureSet {
    std::string image_id;
    std::vector<Keypoint> keypoints;
    std::vector<SiftDescriptor> descriptors;

    size_t size() const { return keypoints.size(); }
};

// Gaussian and difference-of-Gaussians stacks. octave o level k of the
// Gaussian stack has effective sigma base_sigma * 2^(o + k/scales_per_octave).
struct ScaleSpace {
    int num_octaves = 0;
    int scales_per_octave = 0;
    std::vector<std::vector<GrayImage>> gaussian; // scales_per_octave + 3 levels
    std::vector<std::vector<GrayImage>> dog;      // scales_per_octave + 2 levels
};

GrayImage gaussian_blur(const GrayImage& img, float sigma);

ScaleSpace build_scale_space(const GrayImage& img, const SiftParams& p);

// 26-neighbor DoG extrema, quadratically refined, contrast- and
// edge-filtered, capped to max_keypoints by descending response.
std::vector<Keypoint> detect_keypoints(const ScaleSpace& ss, const SiftParams& p);

// 36-bin gradient histogram per keypoint; every peak >= 80% of the
// dominant one yields a copy of the keypoint with that orientation.
std::vector<Keypoint> assign_orientations(const std::vector<Keypoint>& kps,
                                          const ScaleSpace& ss, const SiftParams& p);

std::vector<SiftDescriptor> compute_descriptors(const std::vector<Keypoint>& kps,
                                                const ScaleSpace& ss, const SiftParams& p);

FeatureSet extract(const GrayImage& img, const SiftParams& p);

namespace detail {
// L2-normalize, clip components at `clip`, renormalize in place.
void normalize_descriptor(std::array<float, 128>& v, float clip);
SiftDescriptor quantize_descriptor(std::array<float, 128> v, float clip);
} // namespace detail

// Concatenated per-image records, magic SFT1 each.
void save_feature_sets(const std::vector<FeatureSet>& sets, const std::string& path);
std::vector<FeatureSet> load_feature_sets(const std::string& path);

} // namespace copydet::sift

namespace copydet {
// the rest of the pipeline deals in these constantly; lift them one level
using sift::FeatureSet;
using sift::Keypoint;
using sift::SiftDescriptor;
using sift::SiftParams;
} // namespace copydet
