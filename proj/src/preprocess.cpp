#include "copydet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "copydet/csvio.hpp"
#include "copydet/errors.hpp"

namespace copydet {

namespace {

// top local maxima of a 1-D profile, greedy non-max suppression
std::vector<int> profile_peaks(const std::vector<float>& prof, int lo, int hi,
                               int max_peaks, int min_sep) {
    std::vector<int> cand;
    for (int i = lo; i < hi; ++i) {
        float left = i > lo ? prof[i - 1] : -1.0f;
        float right = i + 1 < hi ? prof[i + 1] : -1.0f;
        if (prof[i] >= left && prof[i] >= right && prof[i] > 0.0f) cand.push_back(i);
    }
    std::sort(cand.begin(), cand.end(), [&](int a, int b) {
        if (prof[a] != prof[b]) return prof[a] > prof[b];
        return a < b;
    });
    std::vector<int> kept;
    for (int c : cand) {
        bool close = false;
        for (int k : kept)
            if (std::abs(k - c) < min_sep) {
                close = true;
                break;
            }
        if (close) continue;
        kept.push_back(c);
        if (static_cast<int>(kept.size()) >= max_peaks) break;
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

} // namespace

std::optional<CropBox> detect_pasted_region(const GrayImage& g, const DetectorConfig& cfg) {
    if (std::min(g.width, g.height) < 32)
        throw DegenerateImage("paste detector needs min edge >= 32");
    int w = g.width, h = g.height;
    std::vector<float> agx(static_cast<size_t>(w) * h, 0.0f);
    std::vector<float> agy(static_cast<size_t>(w) * h, 0.0f);
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            float gx = (g.at(x + 1, y - 1) + 2.0f * g.at(x + 1, y) + g.at(x + 1, y + 1) -
                        g.at(x - 1, y - 1) - 2.0f * g.at(x - 1, y) - g.at(x - 1, y + 1)) * 0.25f;
            float gy = (g.at(x - 1, y + 1) + 2.0f * g.at(x, y + 1) + g.at(x + 1, y + 1) -
                        g.at(x - 1, y - 1) - 2.0f * g.at(x, y - 1) - g.at(x + 1, y - 1)) * 0.25f;
            agx[static_cast<size_t>(y) * w + x] = std::abs(gx);
            agy[static_cast<size_t>(y) * w + x] = std::abs(gy);
        }
    }

    std::vector<float> col(w, 0.0f), row(h, 0.0f);
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) {
            col[x] += agx[static_cast<size_t>(y) * w + x];
            row[y] += agy[static_cast<size_t>(y) * w + x];
        }
    for (int x = 1; x < w - 1; ++x) col[x] /= static_cast<float>(h - 2);
    for (int y = 1; y < h - 1; ++y) row[y] /= static_cast<float>(w - 2);

    std::vector<int> xs = profile_peaks(col, 1, w - 1, 12, 3);
    std::vector<int> ys = profile_peaks(row, 1, h - 1, 12, 3);
    if (xs.size() < 2 || ys.size() < 2) return std::nullopt;

    double frame = static_cast<double>(w) * h;
    float best_score = -1.0f;
    CropBox best{};
    for (size_t i = 0; i < xs.size(); ++i) {
        for (size_t j = i + 1; j < xs.size(); ++j) {
            int x0 = xs[i], x1 = xs[j];
            int bw = x1 - x0 + 1;
            for (size_t u = 0; u < ys.size(); ++u) {
                for (size_t v = u + 1; v < ys.size(); ++v) {
                    int y0 = ys[u], y1 = ys[v];
                    int bh = y1 - y0 + 1;
                    double frac = static_cast<double>(bw) * bh / frame;
                    if (frac < cfg.min_frac || frac > cfg.max_frac || frac >= 0.95) continue;
                    double s = 0.0;
                    for (int y = y0; y <= y1; ++y)
                        s += agx[static_cast<size_t>(y) * w + x0] +
                             agx[static_cast<size_t>(y) * w + x1];
                    for (int x = x0; x <= x1; ++x)
                        s += agy[static_cast<size_t>(y0) * w + x] +
                             agy[static_cast<size_t>(y1) * w + x];
                    float score = static_cast<float>(s / (2.0 * bh + 2.0 * bw));
                    if (score > best_score) {
                        best_score = score;
                        best = {x0, y0, bw, bh};
                    }
                }
            }
        }
    }
    if (best_score < cfg.edge_threshold) return std::nullopt;
    return best;
}

std::map<std::string, CropBox> load_crop_boxes(const std::string& path) {
    std::vector<std::string> lines = read_lines(path);
    std::map<std::string, CropBox> out;
    for (size_t i = 1; i < lines.size(); ++i) { // first line is the header
        std::vector<std::string> f = csv_split(lines[i]);
        if (f.size() != 5) throw MalformedRow("crop box row " + std::to_string(i + 1));
        long vals[4];
        for (int k = 0; k < 4; ++k) {
            try {
                size_t used = 0;
                vals[k] = std::stol(f[k + 1], &used);
                if (used != f[k + 1].size()) throw MalformedRow("");
            } catch (const MalformedRow&) {
                throw MalformedRow("crop box row " + std::to_string(i + 1) + ": bad integer");
            } catch (const std::exception&) {
                throw MalformedRow("crop box row " + std::to_string(i + 1) + ": bad integer");
            }
        }
        if (vals[2] <= 0 || vals[3] <= 0 || vals[0] < 0 || vals[1] < 0)
            throw NegativeDimension("crop box row " + std::to_string(i + 1));
        out[f[0]] = {static_cast<int>(vals[0]), static_cast<int>(vals[1]),
                     static_cast<int>(vals[2]), static_cast<int>(vals[3])};
    }
    return out;
}

BranchInputs route_variants(const ImageBuf& original, const std::optional<CropBox>& detection) {
    BranchInputs out;
    bool full_frame = detection && detection->x == 0 && detection->y == 0 &&
                      detection->w == original.width && detection->h == original.height;
    if (!detection || full_frame) {
        out.global = original;
        out.local = {original};
        return out;
    }
    if (!detection->inside(original.width, original.height))
        throw BoxOutOfBounds("detection box outside image");
    ImageBuf crop = imaging::crop(original, *detection);
    out.global = crop;
    out.local = {original, crop};
    out.has_crop = true;
    return out;
}

} // namespace copydet
