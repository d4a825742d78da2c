#include "support.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>

namespace fs = std::filesystem;

namespace testsupport {

static std::atomic<uint64_t> g_tmp_counter{0};

TempDir::TempDir() {
    path = fs::temp_directory_path() /
           ("copydet_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(g_tmp_counter.fetch_add(1)));
    fs::create_directories(path);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
}

copydet::GrayImage rotate_gray(const copydet::GrayImage& img, double degrees, float fill) {
    double rad = degrees * 3.14159265358979323846 / 180.0;
    double c = std::cos(rad), s = std::sin(rad);
    double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
    copydet::GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            // inverse map: rotate destination back into the source frame
            double dx = x - cx, dy = y - cy;
            double sx = c * dx + s * dy + cx;
            double sy = -s * dx + c * dy + cy;
            int x0 = static_cast<int>(std::floor(sx));
            int y0 = static_cast<int>(std::floor(sy));
            if (x0 < 0 || y0 < 0 || x0 + 1 >= img.width || y0 + 1 >= img.height) {
                out.at(x, y) = fill;
                continue;
            }
            float fx = static_cast<float>(sx - x0), fy = static_cast<float>(sy - y0);
            out.at(x, y) = (1 - fy) * ((1 - fx) * img.at(x0, y0) + fx * img.at(x0 + 1, y0)) +
                           fy * ((1 - fx) * img.at(x0, y0 + 1) + fx * img.at(x0 + 1, y0 + 1));
        }
    }
    return out;
}

std::vector<OracleHit> brute_force_knn(const std::vector<copydet::SiftDescriptor>& corpus,
                                       const std::vector<std::string>& owner_ids,
                                       const std::vector<uint32_t>& owner_kps,
                                       const copydet::SiftDescriptor& query, size_t k) {
    std::vector<OracleHit> all(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        int32_t acc = 0;
        for (int j = 0; j < 128; ++j) {
            int d = static_cast<int>(query[j]) - static_cast<int>(corpus[i][j]);
            acc += d * d;
        }
        all[i] = {i, acc};
    }
    std::sort(all.begin(), all.end(), [&](const OracleHit& a, const OracleHit& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (owner_ids[a.ordinal] != owner_ids[b.ordinal])
            return owner_ids[a.ordinal] < owner_ids[b.ordinal];
        return owner_kps[a.ordinal] < owner_kps[b.ordinal];
    });
    if (all.size() > k) all.resize(k);
    return all;
}

double micro_ap_oracle(std::vector<copydet::SubmissionRow> rows, const copydet::GroundTruth& gt) {
    std::sort(rows.begin(), rows.end(),
              [](const copydet::SubmissionRow& a, const copydet::SubmissionRow& b) {
                  if (a.score != b.score) return a.score > b.score;
                  if (a.query_id != b.query_id) return a.query_id < b.query_id;
                  return a.reference_id < b.reference_id;
              });
    double sum = 0.0;
    for (size_t k = 0; k < rows.size(); ++k) {
        if (!gt.pairs.count({rows[k].query_id, rows[k].reference_id})) continue;
        // recompute precision at this prefix from scratch
        size_t tp = 0;
        for (size_t i = 0; i <= k; ++i)
            if (gt.pairs.count({rows[i].query_id, rows[i].reference_id})) ++tp;
        sum += static_cast<double>(tp) / static_cast<double>(k + 1);
    }
    return sum / static_cast<double>(gt.pairs.size());
}

std::vector<std::array<uint32_t, 3>> mine_oracle(const std::vector<float>& feats, size_t dim,
                                                 const std::vector<std::string>& ids,
                                                 float margin) {
    size_t n = ids.size();
    auto dist = [&](size_t a, size_t b) {
        double s = 0.0;
        for (size_t j = 0; j < dim; ++j) {
            double d = static_cast<double>(feats[a * dim + j]) - feats[b * dim + j];
            s += d * d;
        }
        return std::sqrt(s);
    };
    std::vector<std::array<uint32_t, 3>> out;
    for (uint32_t a = 0; a < n; ++a) {
        for (uint32_t p = 0; p < n; ++p) {
            if (a == p || ids[a] != ids[p]) continue;
            double ap = dist(a, p);
            // hardest negative: min distance, ties to the lowest index
            bool any = false;
            uint32_t hardest = 0;
            double hd = 0.0;
            for (uint32_t nn = 0; nn < n; ++nn) {
                if (ids[nn] == ids[a]) continue;
                double an = dist(a, nn);
                if (!any || an < hd) {
                    any = true;
                    hd = an;
                    hardest = nn;
                }
            }
            if (!any) continue;
            for (uint32_t nn = 0; nn < n; ++nn) {
                if (ids[nn] == ids[a]) continue;
                double an = dist(a, nn);
                bool semi = ap < an && an < ap + margin;
                if (nn == hardest || semi) out.push_back({a, p, nn});
            }
        }
    }
    return out;
}

double box_iou(const copydet::CropBox& a, const copydet::CropBox& b) {
    int x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
    int x1 = std::min(a.x + a.w, b.x + b.w), y1 = std::min(a.y + a.h, b.y + b.h);
    double inter = static_cast<double>(std::max(0, x1 - x0)) * std::max(0, y1 - y0);
    double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
    return uni > 0 ? inter / uni : 0.0;
}

} // namespace testsupport
