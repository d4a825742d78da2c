#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "copydet/evalkit.hpp"
#include "copydet/globalsim.hpp"
#include "copydet/image.hpp"
#include "copydet/sift.hpp"

namespace testsupport {

// unique scratch directory under the system temp dir, removed on destruction
struct TempDir {
    std::filesystem::path path;
    TempDir();
    ~TempDir();
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// rotate around the image center by `degrees`, bilinear, same canvas,
// out-of-frame samples fall back to `fill`
copydet::GrayImage rotate_gray(const copydet::GrayImage& img, double degrees, float fill = 0.5f);

// brute-force exact top-k L2 over u8 descriptors: returns (ordinal, distance)
// pairs ordered by (distance, image id, keypoint ordinal)
struct OracleHit {
    size_t ordinal;
    int32_t distance;
};
std::vector<OracleHit> brute_force_knn(const std::vector<copydet::SiftDescriptor>& corpus,
                                       const std::vector<std::string>& owner_ids,
                                       const std::vector<uint32_t>& owner_kps,
                                       const copydet::SiftDescriptor& query, size_t k);

// independent prefix-walk micro-AP oracle
double micro_ap_oracle(std::vector<copydet::SubmissionRow> rows, const copydet::GroundTruth& gt);

// exhaustive mining oracle: every (a,p,n) triple passing the hardest /
// semi-hard rules, as (a,p,n) triples in ascending order
std::vector<std::array<uint32_t, 3>> mine_oracle(const std::vector<float>& feats, size_t dim,
                                                 const std::vector<std::string>& ids,
                                                 float margin);

double box_iou(const copydet::CropBox& a, const copydet::CropBox& b);

} // namespace testsupport
