#include "copydet/evalkit.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

#include "copydet/csvio.hpp"
#include "copydet/errors.hpp"

namespace copydet {

GroundTruth load_ground_truth(const std::string& path) {
    std::vector<std::string> lines = read_lines(path);
    GroundTruth gt;
    for (size_t i = 1; i < lines.size(); ++i) {
        std::vector<std::string> f = csv_split(lines[i]);
        if (f.size() != 2) throw MalformedRow("ground truth row " + std::to_string(i + 1));
        gt.pairs.emplace(f[0], f[1]);
    }
    if (gt.pairs.empty()) throw EmptyGroundTruth("no ground-truth pairs in " + path);
    return gt;
}

PrCurve micro_ap(const std::vector<SubmissionRow>& submission, const GroundTruth& gt) {
    if (gt.pairs.empty()) throw EmptyGroundTruth("ground truth is empty");
    std::vector<const SubmissionRow*> ranked;
    ranked.reserve(submission.size());
    for (const SubmissionRow& r : submission) ranked.push_back(&r);
    std::sort(ranked.begin(), ranked.end(), [](const SubmissionRow* a, const SubmissionRow* b) {
        if (a->score != b->score) return a->score > b->score;
        if (a->query_id != b->query_id) return a->query_id < b->query_id;
        return a->reference_id < b->reference_id;
    });
    for (size_t i = 1; i < ranked.size(); ++i)
        if (ranked[i]->query_id == ranked[i - 1]->query_id &&
            ranked[i]->reference_id == ranked[i - 1]->reference_id)
            throw DuplicatePair(ranked[i]->query_id + "," + ranked[i]->reference_id);

    PrCurve curve;
    curve.points.reserve(ranked.size());
    double p_total = static_cast<double>(gt.pairs.size());
    size_t tp = 0;
    double ap_sum = 0.0;
    for (size_t k = 0; k < ranked.size(); ++k) {
        const SubmissionRow* r = ranked[k];
        bool is_tp = gt.pairs.count({r->query_id, r->reference_id}) > 0;
        if (is_tp) {
            ++tp;
            ap_sum += static_cast<double>(tp) / static_cast<double>(k + 1);
        }
        curve.points.push_back({k + 1, r->score,
                                static_cast<double>(tp) / static_cast<double>(k + 1),
                                static_cast<double>(tp) / p_total});
    }
    curve.micro_ap = ap_sum / p_total;
    return curve;
}

PrCurve micro_ap(const std::vector<ScoredPair>& submission, const GroundTruth& gt) {
    std::vector<SubmissionRow> rows;
    rows.reserve(submission.size());
    for (const ScoredPair& sp : submission)
        rows.push_back({sp.query_id, sp.reference_id, static_cast<double>(sp.fused)});
    return micro_ap(rows, gt);
}

void write_pr_csv(const PrCurve& curve, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoFailure("cannot open for write: " + path);
    f << "rank,score,precision,recall\n";
    f << std::setprecision(17);
    for (const PrPoint& p : curve.points)
        f << p.rank << ',' << p.score << ',' << p.precision << ',' << p.recall << '\n';
    f << "# micro_ap=" << curve.micro_ap << '\n';
    if (!f) throw IoFailure("write failed: " + path);
}

void write_submission(const std::vector<ScoredPair>& pairs, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoFailure("cannot open for write: " + path);
    f << "query_id,reference_id,score\n";
    for (const ScoredPair& sp : pairs)
        f << csv_escape(sp.query_id) << ',' << csv_escape(sp.reference_id) << ',' << sp.fused
          << '\n';
    if (!f) throw IoFailure("write failed: " + path);
}

std::vector<SubmissionRow> load_submission(const std::string& path) {
    std::vector<std::string> lines = read_lines(path);
    std::vector<SubmissionRow> out;
    for (size_t i = 1; i < lines.size(); ++i) {
        std::vector<std::string> f = csv_split(lines[i]);
        if (f.size() != 3) throw MalformedRow("submission row " + std::to_string(i + 1));
        try {
            size_t used = 0;
            double s = std::stod(f[2], &used);
            if (used != f[2].size()) throw MalformedRow("");
            out.push_back({f[0], f[1], s});
        } catch (const std::exception&) {
            throw MalformedRow("submission row " + std::to_string(i + 1) + ": bad score");
        }
    }
    return out;
}

void write_ground_truth(const GroundTruth& gt, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoFailure("cannot open for write: " + path);
    f << "query_id,reference_id\n";
    for (const auto& [q, r] : gt.pairs) f << csv_escape(q) << ',' << csv_escape(r) << '\n';
    if (!f) throw IoFailure("write failed: " + path);
}

} // namespace copydet
