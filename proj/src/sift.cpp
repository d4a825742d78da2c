#include "copydet/sift.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "copydet/binio.hpp"

namespace copydet::sift {

namespace {

constexpr float kAssumedInputSigma = 0.5f;
constexpr int kMaxRefineSteps = 5;
constexpr int kOriBins = 36;
constexpr float kOriSigmaFactor = 1.5f;
constexpr float kOriPeakRatio = 0.8f;
constexpr int kDescGrid = 4;
constexpr int kDescOriBins = 8;
constexpr float kDescCellWidth = 3.0f; // in units of keypoint sigma
constexpr float kTwoPi = 6.283185307179586f;

inline float pix(const GrayImage& img, int x, int y) {
    return img.data[static_cast<size_t>(y) * img.width + x];
}

GrayImage downsample2(const GrayImage& img) {
    GrayImage out(std::max(1, img.width / 2), std::max(1, img.height / 2));
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(2 * x, 2 * y);
    return out;
}

struct Candidate {
    int octave;
    int level;
    int x;
    int y;
};

// 3D quadratic fit around a discrete DoG sample. Returns false when the
// Hessian is near-singular.
bool fit_quadratic(const std::vector<GrayImage>& dog, int lvl, int x, int y, float off[3],
                   float* interp_val) {
    const GrayImage& cur = dog[static_cast<size_t>(lvl)];
    const GrayImage& lo = dog[static_cast<size_t>(lvl) - 1];
    const GrayImage& hi = dog[static_cast<size_t>(lvl) + 1];

    float gx = 0.5f * (pix(cur, x + 1, y) - pix(cur, x - 1, y));
    float gy = 0.5f * (pix(cur, x, y + 1) - pix(cur, x, y - 1));
    float gs = 0.5f * (pix(hi, x, y) - pix(lo, x, y));

    float v = pix(cur, x, y);
    float hxx = pix(cur, x + 1, y) + pix(cur, x - 1, y) - 2 * v;
    float hyy = pix(cur, x, y + 1) + pix(cur, x, y - 1) - 2 * v;
    float hss = pix(hi, x, y) + pix(lo, x, y) - 2 * v;
    float hxy = 0.25f * (pix(cur, x + 1, y + 1) - pix(cur, x + 1, y - 1) -
                         pix(cur, x - 1, y + 1) + pix(cur, x - 1, y - 1));
    float hxs = 0.25f * (pix(hi, x + 1, y) - pix(hi, x - 1, y) - pix(lo, x + 1, y) +
                         pix(lo, x - 1, y));
    float hys = 0.25f * (pix(hi, x, y + 1) - pix(hi, x, y - 1) - pix(lo, x, y + 1) +
                         pix(lo, x, y - 1));

    float det = hxx * (hyy * hss - hys * hys) - hxy * (hxy * hss - hys * hxs) +
                hxs * (hxy * hys - hyy * hxs);
    if (std::abs(det) < 1e-30f) return false;

    // Cramer solve of H * off = -g
    float b0 = -gx, b1 = -gy, b2 = -gs;
    float d0 = b0 * (hyy * hss - hys * hys) - hxy * (b1 * hss - hys * b2) +
               hxs * (b1 * hys - hyy * b2);
    float d1 = hxx * (b1 * hss - hys * b2) - b0 * (hxy * hss - hys * hxs) +
               hxs * (hxy * b2 - b1 * hxs);
    float d2 = hxx * (hyy * b2 - b1 * hys) - hxy * (hxy * b2 - b1 * hxs) +
               b0 * (hxy * hys - hyy * hxs);
    off[0] = d0 / det;
    off[1] = d1 / det;
    off[2] = d2 / det;
    *interp_val = v + 0.5f * (gx * off[0] + gy * off[1] + gs * off[2]);
    return true;
}

bool on_edge(const GrayImage& img, int x, int y, float edge_ratio) {
    float v = pix(img, x, y);
    float hxx = pix(img, x + 1, y) + pix(img, x - 1, y) - 2 * v;
    float hyy = pix(img, x, y + 1) + pix(img, x, y - 1) - 2 * v;
    float hxy = 0.25f * (pix(img, x + 1, y + 1) - pix(img, x + 1, y - 1) -
                         pix(img, x - 1, y + 1) + pix(img, x - 1, y - 1));
    float det = hxx * hyy - hxy * hxy;
    float tr = hxx + hyy;
    if (det <= 0) return true;
    return tr * tr * edge_ratio >= det * (edge_ratio + 1) * (edge_ratio + 1);
}

bool is_extremum(const std::vector<GrayImage>& dog, int lvl, int x, int y) {
    const float val = pix(dog[static_cast<size_t>(lvl)], x, y);
    bool is_min = true, is_max = true;
    for (int dl = -1; dl <= 1; ++dl) {
        const GrayImage& img = dog[static_cast<size_t>(lvl + dl)];
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dl == 0 && dx == 0 && dy == 0) continue;
                float nb = pix(img, x + dx, y + dy);
                if (nb > val) is_max = false;
                if (nb < val) is_min = false;
                if (!is_min && !is_max) return false;
            }
    }
    return is_min || is_max;
}

inline float wrap_angle(float a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0) a += kTwoPi;
    return a;
}

void smooth_histogram36(float hist[kOriBins]) {
    float tmp[kOriBins];
    for (int pass = 0; pass < 6; ++pass) {
        for (int i = 0; i < kOriBins; ++i) {
            float prev = hist[(i + kOriBins - 1) % kOriBins];
            float next = hist[(i + 1) % kOriBins];
            tmp[i] = (prev + hist[i] + next) / 3.0f;
        }
        std::copy(tmp, tmp + kOriBins, hist);
    }
}

} // namespace

GrayImage gaussian_blur(const GrayImage& img, float sigma) {
    if (sigma <= 0) return img;
    int radius = std::max(1, static_cast<int>(std::ceil(3.5f * sigma)));
    std::vector<float> kernel(static_cast<size_t>(2 * radius + 1));
    float sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        float v = std::exp(-(static_cast<float>(i) * i) / (2 * sigma * sigma));
        kernel[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : kernel) v /= sum;

    const int w = img.width, h = img.height;
    GrayImage tmp(w, h), out(w, h);
    for (int y = 0; y < h; ++y) {
        const float* row = &img.data[static_cast<size_t>(y) * w];
        for (int x = 0; x < w; ++x) {
            float acc = 0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<size_t>(k + radius)] * row[std::clamp(x + k, 0, w - 1)];
            tmp.at(x, y) = acc;
        }
    }
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            float acc = 0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<size_t>(k + radius)] * tmp.at(x, std::clamp(y + k, 0, h - 1));
            out.at(x, y) = acc;
        }
    }
    return out;
}

ScaleSpace build_scale_space(const GrayImage& img, const SiftParams& p) {
    int min_edge = std::min(img.width, img.height);
    if (min_edge < 16) throw DegenerateImage("build_scale_space: min edge < 16");

    const int S = p.scales_per_octave;
    ScaleSpace ss;
    ss.scales_per_octave = S;
    ss.num_octaves = std::max(1, static_cast<int>(std::floor(std::log2(min_edge))) - 2);
    ss.gaussian.resize(static_cast<size_t>(ss.num_octaves));
    ss.dog.resize(static_cast<size_t>(ss.num_octaves));

    // blur increments between consecutive levels within an octave
    const int levels = S + 3;
    std::vector<float> sigma_diff(static_cast<size_t>(levels));
    float k = std::pow(2.0f, 1.0f / static_cast<float>(S));
    for (int i = 1; i < levels; ++i) {
        float prev = p.base_sigma * std::pow(k, static_cast<float>(i - 1));
        float cur = prev * k;
        sigma_diff[static_cast<size_t>(i)] = std::sqrt(cur * cur - prev * prev);
    }

    // the input is assumed to carry sigma 0.5 of blur already
    float first = std::sqrt(std::max(0.0f, p.base_sigma * p.base_sigma -
                                               kAssumedInputSigma * kAssumedInputSigma));
    GrayImage base = gaussian_blur(img, first);

    for (int o = 0; o < ss.num_octaves; ++o) {
        auto& oct = ss.gaussian[static_cast<size_t>(o)];
        oct.reserve(static_cast<size_t>(levels));
        oct.push_back(std::move(base));
        for (int i = 1; i < levels; ++i)
            oct.push_back(gaussian_blur(oct.back(), sigma_diff[static_cast<size_t>(i)]));
        if (o + 1 < ss.num_octaves)
            base = downsample2(oct[static_cast<size_t>(S)]); // sigma doubled there

        auto& dog_oct = ss.dog[static_cast<size_t>(o)];
        dog_oct.reserve(static_cast<size_t>(levels - 1));
        for (int i = 1; i < levels; ++i) {
            GrayImage diff(oct[static_cast<size_t>(i)].width, oct[static_cast<size_t>(i)].height);
            const auto& a = oct[static_cast<size_t>(i)].data;
            const auto& b = oct[static_cast<size_t>(i) - 1].data;
            for (size_t j = 0; j < diff.data.size(); ++j) diff.data[j] = a[j] - b[j];
            dog_oct.push_back(std::move(diff));
        }
    }
    return ss;
}

std::vector<Keypoint> detect_keypoints(const ScaleSpace& ss, const SiftParams& p) {
    const int S = ss.scales_per_octave;
    const float final_thresh = p.contrast_threshold / static_cast<float>(S);
    const float prefilter = 0.5f * final_thresh;

    std::vector<Keypoint> kps;
    for (int o = 0; o < ss.num_octaves; ++o) {
        const auto& dog = ss.dog[static_cast<size_t>(o)];
        const int w = dog[0].width, h = dog[0].height;
        if (w < 3 || h < 3) continue;
        for (int lvl = 1; lvl <= S; ++lvl) {
            const GrayImage& img = dog[static_cast<size_t>(lvl)];
            for (int y = 1; y < h - 1; ++y) {
                for (int x = 1; x < w - 1; ++x) {
                    float val = pix(img, x, y);
                    if (std::abs(val) < prefilter) continue;
                    if (!is_extremum(dog, lvl, x, y)) continue;

                    // refine, stepping to the neighboring sample while the
                    // offset exceeds half a pixel in any dimension
                    int cl = lvl, cx = x, cy = y;
                    float off[3];
                    float interp = 0;
                    bool converged = false;
                    for (int step = 0; step < kMaxRefineSteps; ++step) {
                        if (!fit_quadratic(dog, cl, cx, cy, off, &interp)) break;
                        int dx = off[0] > 0.5f ? 1 : (off[0] < -0.5f ? -1 : 0);
                        int dy = off[1] > 0.5f ? 1 : (off[1] < -0.5f ? -1 : 0);
                        int dl = off[2] > 0.5f ? 1 : (off[2] < -0.5f ? -1 : 0);
                        if (dx == 0 && dy == 0 && dl == 0) {
                            converged = true;
                            break;
                        }
                        cx += dx;
                        cy += dy;
                        cl += dl;
                        if (cl < 1 || cl > S || cx < 1 || cx >= w - 1 || cy < 1 || cy >= h - 1)
                            break;
                    }
                    if (!converged) continue;
                    if (std::abs(interp) < final_thresh) continue;
                    if (on_edge(dog[static_cast<size_t>(cl)], cx, cy, p.edge_ratio)) continue;

                    Keypoint kp;
                    kp.octave = o;
                    kp.level = cl;
                    kp.lx = static_cast<float>(cx) + off[0];
                    kp.ly = static_cast<float>(cy) + off[1];
                    float lvl_f = static_cast<float>(cl) + off[2];
                    kp.lsigma = p.base_sigma * std::pow(2.0f, lvl_f / static_cast<float>(S));
                    float cell = std::pow(2.0f, static_cast<float>(o));
                    kp.x = kp.lx * cell;
                    kp.y = kp.ly * cell;
                    kp.scale = kp.lsigma * cell;
                    kp.response = std::abs(interp);
                    kps.push_back(kp);
                }
            }
        }
    }

    // drop refinements that escaped the frame
    const float W = static_cast<float>(ss.gaussian[0][0].width);
    const float H = static_cast<float>(ss.gaussian[0][0].height);
    std::erase_if(kps, [&](const Keypoint& kp) {
        return kp.x < 0 || kp.y < 0 || kp.x > W - 1 || kp.y > H - 1;
    });

    std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
        if (a.response != b.response) return a.response > b.response;
        if (a.y != b.y) return a.y < b.y;
        if (a.x != b.x) return a.x < b.x;
        return a.scale < b.scale;
    });
    if (static_cast<int>(kps.size()) > p.max_keypoints)
        kps.resize(static_cast<size_t>(p.max_keypoints));
    return kps;
}

std::vector<Keypoint> assign_orientations(const std::vector<Keypoint>& kps,
                                          const ScaleSpace& ss, const SiftParams& p) {
    (void)p;
    std::vector<Keypoint> out;
    out.reserve(kps.size());
    for (const Keypoint& kp : kps) {
        const GrayImage& img =
            ss.gaussian[static_cast<size_t>(kp.octave)][static_cast<size_t>(kp.level)];
        const int w = img.width, h = img.height;
        float sigma_w = kOriSigmaFactor * kp.lsigma;
        int radius = static_cast<int>(std::lround(3.0f * sigma_w));
        int cx = static_cast<int>(std::lround(kp.lx));
        int cy = static_cast<int>(std::lround(kp.ly));

        float hist[kOriBins] = {};
        for (int dy = -radius; dy <= radius; ++dy) {
            int y = cy + dy;
            if (y < 1 || y >= h - 1) continue;
            for (int dx = -radius; dx <= radius; ++dx) {
                int x = cx + dx;
                if (x < 1 || x >= w - 1) continue;
                float gx = 0.5f * (pix(img, x + 1, y) - pix(img, x - 1, y));
                float gy = 0.5f * (pix(img, x, y + 1) - pix(img, x, y - 1));
                float mag = std::sqrt(gx * gx + gy * gy);
                float fx = static_cast<float>(x) - kp.lx;
                float fy = static_cast<float>(y) - kp.ly;
                float weight = std::exp(-(fx * fx + fy * fy) / (2 * sigma_w * sigma_w));
                float theta = wrap_angle(std::atan2(gy, gx));
                int bin = static_cast<int>(std::lround(kOriBins / kTwoPi * theta)) % kOriBins;
                hist[bin] += weight * mag;
            }
        }
        smooth_histogram36(hist);

        float peak = *std::max_element(hist, hist + kOriBins);
        if (peak <= 0) continue;
        for (int j = 0; j < kOriBins; ++j) {
            float prev = hist[(j + kOriBins - 1) % kOriBins];
            float next = hist[(j + 1) % kOriBins];
            if (hist[j] < kOriPeakRatio * peak || prev > hist[j] || next > hist[j]) continue;
            // parabolic peak interpolation
            float denom = prev - 2 * hist[j] + next;
            float shift = denom != 0 ? 0.5f * (prev - next) / denom : 0.0f;
            float theta = wrap_angle(kTwoPi * (static_cast<float>(j) + shift) /
                                     static_cast<float>(kOriBins));
            Keypoint oriented = kp;
            oriented.orientation = theta;
            out.push_back(oriented);
        }
    }
    return out;
}

namespace detail {

void normalize_descriptor(std::array<float, 128>& v, float clip) {
    float norm = 0;
    for (float x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm <= 0) return;
    for (auto& x : v) x = std::min(x / norm, clip);
    float norm2 = 0;
    for (float x : v) norm2 += x * x;
    norm2 = std::sqrt(norm2);
    if (norm2 <= 0) return;
    for (auto& x : v) x /= norm2;
}

SiftDescriptor quantize_descriptor(std::array<float, 128> v, float clip) {
    normalize_descriptor(v, clip);
    SiftDescriptor d;
    for (size_t i = 0; i < v.size(); ++i) {
        long q = std::lround(v[i] * 512.0f);
        d[i] = static_cast<uint8_t>(std::clamp(q, 0L, 255L));
    }
    return d;
}

} // namespace detail

std::vector<SiftDescriptor> compute_descriptors(const std::vector<Keypoint>& kps,
                                                const ScaleSpace& ss, const SiftParams& p) {
    std::vector<SiftDescriptor> out;
    out.reserve(kps.size());
    const float bins_per_rad = kDescOriBins / kTwoPi;
    const float exp_scale = -2.0f / (kDescGrid * kDescGrid); // gaussian window, sigma = grid/2

    for (const Keypoint& kp : kps) {
        const GrayImage& img =
            ss.gaussian[static_cast<size_t>(kp.octave)][static_cast<size_t>(kp.level)];
        const int w = img.width, h = img.height;
        float hist_width = kDescCellWidth * kp.lsigma;
        int radius = static_cast<int>(
            std::lround(hist_width * std::sqrt(2.0f) * (kDescGrid + 1) * 0.5f));
        float cos_t = std::cos(kp.orientation) / hist_width;
        float sin_t = std::sin(kp.orientation) / hist_width;

        // (grid+2)^2 x (bins+2) accumulator so trilinear spill has a home
        float acc[kDescGrid + 2][kDescGrid + 2][kDescOriBins + 2] = {};

        for (int di = -radius; di <= radius; ++di) {
            int y = static_cast<int>(std::lround(kp.ly)) + di;
            if (y < 1 || y >= h - 1) continue;
            for (int dj = -radius; dj <= radius; ++dj) {
                int x = static_cast<int>(std::lround(kp.lx)) + dj;
                if (x < 1 || x >= w - 1) continue;
                float jj = static_cast<float>(x) - kp.lx;
                float ii = static_cast<float>(y) - kp.ly;
                float u = jj * cos_t + ii * sin_t;  // cell units, rotated
                float v = -jj * sin_t + ii * cos_t;
                float cbin = u + kDescGrid / 2.0f - 0.5f;
                float rbin = v + kDescGrid / 2.0f - 0.5f;
                if (rbin <= -1 || rbin >= kDescGrid || cbin <= -1 || cbin >= kDescGrid)
                    continue;

                float gx = 0.5f * (pix(img, x + 1, y) - pix(img, x - 1, y));
                float gy = 0.5f * (pix(img, x, y + 1) - pix(img, x, y - 1));
                float mag = std::sqrt(gx * gx + gy * gy);
                float weight = std::exp((u * u + v * v) * exp_scale);
                float obin = wrap_angle(std::atan2(gy, gx) - kp.orientation) * bins_per_rad;

                int r0 = static_cast<int>(std::floor(rbin));
                int c0 = static_cast<int>(std::floor(cbin));
                int o0 = static_cast<int>(std::floor(obin));
                float fr = rbin - r0, fc = cbin - c0, fo = obin - o0;
                float contrib = mag * weight;
                for (int rr = 0; rr <= 1; ++rr) {
                    float wr = contrib * (rr ? fr : 1 - fr);
                    for (int cc = 0; cc <= 1; ++cc) {
                        float wc = wr * (cc ? fc : 1 - fc);
                        for (int oo = 0; oo <= 1; ++oo) {
                            float wo = wc * (oo ? fo : 1 - fo);
                            acc[r0 + rr + 1][c0 + cc + 1][(o0 + oo) % kDescOriBins] += wo;
                        }
                    }
                }
            }
        }

        std::array<float, 128> vec{};
        for (int r = 0; r < kDescGrid; ++r)
            for (int c = 0; c < kDescGrid; ++c)
                for (int o = 0; o < kDescOriBins; ++o)
                    vec[static_cast<size_t>((r * kDescGrid + c) * kDescOriBins + o)] =
                        acc[r + 1][c + 1][o];
        out.push_back(detail::quantize_descriptor(vec, p.descriptor_clip));
    }
    return out;
}

FeatureSet extract(const GrayImage& img, const SiftParams& p) {
    ScaleSpace ss = build_scale_space(img, p);
    std::vector<Keypoint> kps = detect_keypoints(ss, p);
    kps = assign_orientations(kps, ss, p);

    // orientation duplication can overshoot the cap; re-apply it
    std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
        if (a.response != b.response) return a.response > b.response;
        if (a.y != b.y) return a.y < b.y;
        if (a.x != b.x) return a.x < b.x;
        if (a.scale != b.scale) return a.scale < b.scale;
        return a.orientation < b.orientation;
    });
    if (static_cast<int>(kps.size()) > p.max_keypoints)
        kps.resize(static_cast<size_t>(p.max_keypoints));

    FeatureSet fs;
    fs.keypoints = std::move(kps);
    fs.descriptors = compute_descriptors(fs.keypoints, ss, p);
    return fs;
}

void save_feature_sets(const std::vector<FeatureSet>& sets, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    for (const auto& fs : sets) {
        out.write("SFT1", 4);
        write_string(out, fs.image_id);
        write_pod<uint32_t>(out, static_cast<uint32_t>(fs.keypoints.size()));
        for (size_t i = 0; i < fs.keypoints.size(); ++i) {
            const Keypoint& kp = fs.keypoints[i];
            write_pod<float>(out, kp.x);
            write_pod<float>(out, kp.y);
            write_pod<float>(out, kp.scale);
            write_pod<float>(out, kp.orientation);
            write_pod<float>(out, kp.response);
            out.write(reinterpret_cast<const char*>(fs.descriptors[i].data()), 128);
        }
    }
    if (!out) throw IoFailure("write failed: " + path);
}

std::vector<FeatureSet> load_feature_sets(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path);
    std::vector<FeatureSet> sets;
    while (in.peek() != EOF) {
        expect_magic(in, "SFT1", "feature set");
        FeatureSet fs;
        fs.image_id = read_string(in);
        uint32_t count = 0;
        read_pod(in, count);
        fs.keypoints.resize(count);
        fs.descriptors.resize(count);
        for (uint32_t i = 0; i < count; ++i) {
            Keypoint& kp = fs.keypoints[i];
            read_pod(in, kp.x);
            read_pod(in, kp.y);
            read_pod(in, kp.scale);
            read_pod(in, kp.orientation);
            read_pod(in, kp.response);
            in.read(reinterpret_cast<char*>(fs.descriptors[i].data()), 128);
            if (!in) throw IoFailure("truncated feature set: " + path);
        }
        sets.push_back(std::move(fs));
    }
    return sets;
}

} // namespace copydet::sift
