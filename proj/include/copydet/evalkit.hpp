#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "copydet/matcher.hpp"

namespace copydet {

struct GroundTruth {
    std::set<std::pair<std::string, std::string>> pairs; // (query id, reference id)
    size_t total_positives() const { return pairs.size(); }
};

struct SubmissionRow {
    std::string query_id;
    std::string reference_id;
    double score = 0.0;
};

struct PrPoint {
    size_t rank = 0; // 1-based prefix length
    double score = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct PrCurve {
    std::vector<PrPoint> points; // one per prefix of the ranked submission
    double micro_ap = 0.0;
};

GroundTruth load_ground_truth(const std::string& path);

// rank by score descending, ties by (query id, reference id) ascending;
// step integration of precision at each true positive, normalized by P
PrCurve micro_ap(const std::vector<SubmissionRow>& submission, const GroundTruth& gt);
PrCurve micro_ap(const std::vector<ScoredPair>& submission, const GroundTruth& gt);

void write_pr_csv(const PrCurve& curve, const std::string& path);
void write_submission(const std::vector<ScoredPair>& pairs, const std::string& path);
std::vector<SubmissionRow> load_submission(const std::string& path);
void write_ground_truth(const GroundTruth& gt, const std::string& path);

} // namespace copydet
