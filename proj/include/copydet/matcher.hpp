#pragma once

#include <functional>
#include <string>
#include <vector>

#include "copydet/image.hpp"
#include "copydet/sift.hpp"
#include "copydet/vecindex.hpp"

namespace copydet {

struct MatcherConfig {
    float ratio_threshold = 1.0f / 1.8f;
    float local_l2_threshold = 90000.0f; // squared u8 distance, calibrated on the paste fixture
    int min_points = 2;
    int global_k = 10;
};

struct ScoredPair {
    std::string query_id;
    std::string reference_id;
    int global_score = 0;
    int local_orig_score = 0;
    int local_crop_score = 0;
    int fused = 0;
};

struct RecallCandidate {
    std::string id;
    int votes = 0;
};

// Lowe 2-NN ratio test of every query descriptor against one reference set.
int pairwise_match_count(const std::vector<SiftDescriptor>& q,
                         const std::vector<SiftDescriptor>& r, float ratio);
int pairwise_match_count(const FeatureSet& q, const FeatureSet& r, float ratio);

// original + flipped extractions of one query variant, computed once
struct QueryVariant {
    std::vector<SiftDescriptor> orig;
    std::vector<SiftDescriptor> flipped;
};

QueryVariant extract_variant(const GrayImage& img, const SiftParams& p);

int match_with_flip(const QueryVariant& q, const std::vector<SiftDescriptor>& r, float ratio);
int match_with_flip(const GrayImage& q, const FeatureSet& r, const MatcherConfig& cfg,
                    const SiftParams& p);

// votes per reference image over per-descriptor top-1 hits
std::vector<RecallCandidate> local_recall(const std::vector<std::vector<Hit>>& hits,
                                          const DescriptorIndex& idx, const MatcherConfig& cfg);

using BranchScorer = std::function<int(const std::string& ref_id)>;

std::vector<ScoredPair> fuse(const std::string& query_id,
                             const std::vector<std::string>& global_cands,
                             const std::vector<std::string>& local_orig_cands,
                             const std::vector<std::string>& local_crop_cands,
                             const BranchScorer& score_global,
                             const BranchScorer& score_local_orig,
                             const BranchScorer& score_local_crop);

} // namespace copydet
