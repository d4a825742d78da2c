#include "copydet/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "copydet/errors.hpp"

namespace copydet {

static inline int32_t ssd128(const uint8_t* a, const uint8_t* b) {
    int32_t acc = 0;
    for (int i = 0; i < 128; ++i) {
        int d = static_cast<int>(a[i]) - static_cast<int>(b[i]);
        acc += d * d;
    }
    return acc;
}

int pairwise_match_count(const std::vector<SiftDescriptor>& q,
                         const std::vector<SiftDescriptor>& r, float ratio) {
    if (ratio <= 0.0f || ratio >= 1.0f) throw ParamOutOfRange("ratio must be in (0, 1)");
    if (r.size() < 2) return 0;
    double r2 = static_cast<double>(ratio) * ratio;
    int count = 0;
    for (const SiftDescriptor& qd : q) {
        int32_t d1 = INT32_MAX, d2 = INT32_MAX;
        for (const SiftDescriptor& rd : r) {
            int32_t d = ssd128(qd.data(), rd.data());
            if (d < d1) {
                d2 = d1;
                d1 = d;
            } else if (d < d2) {
                d2 = d;
            }
        }
        // d1/d2 < ratio on true distances; with both nearest at 0 the pair is
        // a duplicate descriptor and counts as a match
        if (d2 == 0) {
            if (d1 == 0) ++count;
        } else if (static_cast<double>(d1) < r2 * static_cast<double>(d2)) {
            ++count;
        }
    }
    return count;
}

int pairwise_match_count(const FeatureSet& q, const FeatureSet& r, float ratio) {
    return pairwise_match_count(q.descriptors, r.descriptors, ratio);
}

QueryVariant extract_variant(const GrayImage& img, const SiftParams& p) {
    QueryVariant v;
    v.orig = extract(img, p).descriptors;
    v.flipped = extract(imaging::flip_horizontal(img), p).descriptors;
    return v;
}

int match_with_flip(const QueryVariant& q, const std::vector<SiftDescriptor>& r, float ratio) {
    return std::max(pairwise_match_count(q.orig, r, ratio),
                    pairwise_match_count(q.flipped, r, ratio));
}

int match_with_flip(const GrayImage& q, const FeatureSet& r, const MatcherConfig& cfg,
                    const SiftParams& p) {
    return match_with_flip(extract_variant(q, p), r.descriptors, cfg.ratio_threshold);
}

std::vector<RecallCandidate> local_recall(const std::vector<std::vector<Hit>>& hits,
                                          const DescriptorIndex& idx, const MatcherConfig& cfg) {
    std::map<uint32_t, int> votes;
    for (const auto& per_query : hits)
        for (const Hit& h : per_query)
            if (h.distance <= cfg.local_l2_threshold) votes[h.image_ord]++;
    std::vector<RecallCandidate> out;
    for (const auto& [ord, n] : votes)
        if (n >= cfg.min_points) out.push_back({idx.image_ids[ord], n});
    std::sort(out.begin(), out.end(), [](const RecallCandidate& a, const RecallCandidate& b) {
        if (a.votes != b.votes) return a.votes > b.votes;
        return a.id < b.id;
    });
    return out;
}

std::vector<ScoredPair> fuse(const std::string& query_id,
                             const std::vector<std::string>& global_cands,
                             const std::vector<std::string>& local_orig_cands,
                             const std::vector<std::string>& local_crop_cands,
                             const BranchScorer& score_global,
                             const BranchScorer& score_local_orig,
                             const BranchScorer& score_local_crop) {
    std::map<std::string, std::array<bool, 3>> recalled;
    for (const std::string& id : global_cands) recalled[id][0] = true;
    for (const std::string& id : local_orig_cands) recalled[id][1] = true;
    for (const std::string& id : local_crop_cands) recalled[id][2] = true;

    std::vector<ScoredPair> out;
    out.reserve(recalled.size());
    for (const auto& [id, branches] : recalled) {
        ScoredPair sp;
        sp.query_id = query_id;
        sp.reference_id = id;
        if (branches[0]) sp.global_score = score_global(id);
        if (branches[1]) sp.local_orig_score = score_local_orig(id);
        if (branches[2]) sp.local_crop_score = score_local_crop(id);
        sp.fused = sp.global_score + sp.local_orig_score + sp.local_crop_score;
        out.push_back(std::move(sp));
    }
    std::sort(out.begin(), out.end(), [](const ScoredPair& a, const ScoredPair& b) {
        if (a.fused != b.fused) return a.fused > b.fused;
        return a.reference_id < b.reference_id;
    });
    return out;
}

} // namespace copydet
