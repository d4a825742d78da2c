#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "copydet/errors.hpp"
#include "copydet/evalkit.hpp"
#include "copydet/rng.hpp"
#include "support.hpp"

using namespace copydet;

namespace {

GroundTruth gt_of(std::vector<std::pair<std::string, std::string>> pairs) {
    GroundTruth gt;
    for (auto& p : pairs) gt.pairs.insert(std::move(p));
    return gt;
}

std::vector<SubmissionRow> random_submission(Rng& rng, size_t max_pairs, GroundTruth& gt_out) {
    size_t n = 1 + rng.uniform_int(0, static_cast<int>(max_pairs) - 1);
    std::vector<SubmissionRow> rows;
    gt_out = GroundTruth{};
    for (size_t i = 0; i < n; ++i) {
        SubmissionRow r;
        r.query_id = "q" + std::to_string(i);
        r.reference_id = "r" + std::to_string(rng.uniform_int(0, 40));
        // coarse scores on purpose: plenty of rank ties
        r.score = rng.uniform_int(0, 20);
        rows.push_back(r);
        if (rng.uniform_int(0, 2) == 0) gt_out.pairs.insert({r.query_id, r.reference_id});
    }
    if (gt_out.pairs.empty()) gt_out.pairs.insert({rows[0].query_id, rows[0].reference_id});
    return rows;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream f(path);
    for (const auto& l : lines) f << l << "\n";
}

} // namespace

TEST_SUITE("evalkit") {

TEST_CASE("ground truth loads, collapses duplicates, and rejects junk") {
    testsupport::TempDir tmp;
    write_lines(tmp.file("gt.csv"),
                {"query_id,reference_id", "q1,r1", "q2,r2", "q3,r3", "q2,r2"});
    GroundTruth gt = load_ground_truth(tmp.file("gt.csv"));
    CHECK(gt.total_positives() == 3);
    CHECK(gt.pairs.count({"q2", "r2"}) == 1);

    write_lines(tmp.file("empty.csv"), {"query_id,reference_id"});
    CHECK_THROWS_AS(load_ground_truth(tmp.file("empty.csv")), EmptyGroundTruth);

    write_lines(tmp.file("bad.csv"), {"query_id,reference_id", "q1,r1,extra"});
    CHECK_THROWS_AS(load_ground_truth(tmp.file("bad.csv")), MalformedRow);
}

TEST_CASE("perfect ranking scores one, empty intersection scores zero") {
    GroundTruth gt = gt_of({{"q1", "r1"}, {"q2", "r2"}});
    std::vector<SubmissionRow> rows = {
        {"q1", "r1", 10.0}, {"q2", "r2", 9.0}, {"q1", "r9", 1.0}, {"q2", "r7", 0.5}};
    PrCurve curve = micro_ap(rows, gt);
    CHECK(curve.micro_ap == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<SubmissionRow> misses = {{"q1", "r9", 10.0}, {"q2", "r7", 9.0}};
    CHECK(micro_ap(misses, gt).micro_ap == 0.0);
}

TEST_CASE("the 1-0-1 ranking evaluates to five sixths") {
    GroundTruth gt = gt_of({{"qa", "r1"}, {"qc", "r3"}});
    std::vector<SubmissionRow> rows = {{"qa", "r1", 3.0}, {"qb", "r2", 2.0}, {"qc", "r3", 1.0}};
    PrCurve curve = micro_ap(rows, gt);
    CHECK(curve.micro_ap == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
    REQUIRE(curve.points.size() == 3);
    CHECK(curve.points[0].precision == doctest::Approx(1.0));
    CHECK(curve.points[0].recall == doctest::Approx(0.5));
    CHECK(curve.points[1].precision == doctest::Approx(0.5));
    CHECK(curve.points[2].precision == doctest::Approx(2.0 / 3.0));
    CHECK(curve.points[2].recall == doctest::Approx(1.0));
}

TEST_CASE("duplicate submission pairs are rejected") {
    GroundTruth gt = gt_of({{"q1", "r1"}});
    std::vector<SubmissionRow> rows = {{"q1", "r1", 3.0}, {"q1", "r1", 2.0}};
    CHECK_THROWS_AS(micro_ap(rows, gt), DuplicatePair);
}

TEST_CASE("micro-ap agrees with the brute-force oracle on random submissions") {
    Rng rng(42);
    for (int trial = 0; trial < 25; ++trial) {
        GroundTruth gt;
        auto rows = random_submission(rng, 400, gt);
        double got = micro_ap(rows, gt).micro_ap;
        double want = testsupport::micro_ap_oracle(rows, gt);
        CHECK(std::abs(got - want) < 1e-12);
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);
    }
}

TEST_CASE("micro-ap only depends on the ranking") {
    Rng rng(43);
    GroundTruth gt;
    auto rows = random_submission(rng, 300, gt);
    double base = micro_ap(rows, gt).micro_ap;

    auto affine = rows;
    for (auto& r : affine) r.score = 3.5 * r.score + 11.0;
    CHECK(micro_ap(affine, gt).micro_ap == doctest::Approx(base).epsilon(1e-12));

    auto cubed = rows;
    for (auto& r : cubed) r.score = r.score * r.score * r.score;
    CHECK(micro_ap(cubed, gt).micro_ap == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("appending tail pairs behaves monotonically") {
    GroundTruth gt = gt_of({{"q1", "r1"}, {"q2", "r2"}, {"q9", "r9"}});
    std::vector<SubmissionRow> rows = {{"q1", "r1", 5.0}, {"q3", "r3", 4.0}, {"q2", "r2", 3.0}};
    double base = micro_ap(rows, gt).micro_ap;

    auto with_false = rows;
    with_false.push_back({"q4", "r4", 1.0});
    CHECK(micro_ap(with_false, gt).micro_ap == doctest::Approx(base).epsilon(1e-12));

    auto with_true = rows;
    with_true.push_back({"q9", "r9", 1.0});
    CHECK(micro_ap(with_true, gt).micro_ap >= base - 1e-12);
}

TEST_CASE("recall never decreases along the curve") {
    Rng rng(44);
    GroundTruth gt;
    auto rows = random_submission(rng, 200, gt);
    PrCurve curve = micro_ap(rows, gt);
    for (size_t i = 1; i < curve.points.size(); ++i)
        CHECK(curve.points[i].recall >= curve.points[i - 1].recall);
}

TEST_CASE("pr csv carries the points and the trailing micro_ap line") {
    testsupport::TempDir tmp;
    GroundTruth gt = gt_of({{"qa", "r1"}, {"qc", "r3"}});
    std::vector<SubmissionRow> rows = {{"qa", "r1", 3.0}, {"qb", "r2", 2.0}, {"qc", "r3", 1.0}};
    PrCurve curve = micro_ap(rows, gt);
    write_pr_csv(curve, tmp.file("pr.csv"));

    std::ifstream f(tmp.file("pr.csv"));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    REQUIRE(lines.size() == 5); // header + 3 points + trailer
    CHECK(lines[0] == "rank,score,precision,recall");
    CHECK(lines[4].substr(0, 11) == "# micro_ap=");

    PrCurve empty;
    write_pr_csv(empty, tmp.file("empty.csv"));
    std::ifstream g(tmp.file("empty.csv"));
    lines.clear();
    while (std::getline(g, line)) lines.push_back(line);
    REQUIRE(lines.size() == 2);
    CHECK(lines[1].substr(0, 11) == "# micro_ap=");
}

TEST_CASE("submissions round-trip and re-evaluate identically") {
    testsupport::TempDir tmp;
    Rng rng(45);
    GroundTruth gt;
    auto rows = random_submission(rng, 250, gt);
    double in_memory = micro_ap(rows, gt).micro_ap;

    std::vector<ScoredPair> pairs;
    for (const auto& r : rows) {
        ScoredPair sp;
        sp.query_id = r.query_id;
        sp.reference_id = r.reference_id;
        sp.fused = static_cast<int>(r.score);
        pairs.push_back(sp);
    }
    write_submission(pairs, tmp.file("sub.csv"));
    auto back = load_submission(tmp.file("sub.csv"));
    REQUIRE(back.size() == rows.size());
    CHECK(std::abs(micro_ap(back, gt).micro_ap - in_memory) < 1e-12);

    // ground truth round-trips too
    write_ground_truth(gt, tmp.file("gt.csv"));
    GroundTruth gt2 = load_ground_truth(tmp.file("gt.csv"));
    CHECK(gt2.pairs == gt.pairs);
}

}
