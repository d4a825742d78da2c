#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "copydet/errors.hpp"
#include "copydet/image.hpp"
#include "copydet/rng.hpp"
#include "copydet/sift.hpp"
#include "copydet/synth.hpp"
#include "support.hpp"

using namespace copydet;
namespace cs = copydet::sift;

namespace {

constexpr double kPi = 3.14159265358979323846;

GrayImage gaussian_blob(int w, int h, double cx, double cy, double sigma, float amp) {
    GrayImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            img.at(x, y) = 0.05f + amp * static_cast<float>(std::exp(-d2 / (2 * sigma * sigma)));
        }
    return img;
}

GrayImage synth_gray(int w, int h, uint64_t seed) {
    return imaging::to_grayscale(imaging::synth_texture(w, h, seed));
}

// quarter-turn counter-clockwise: (x, y) -> (y, w-1-x)
GrayImage rot90(const GrayImage& img) {
    GrayImage out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(y, img.width - 1 - x) = img.at(x, y);
    return out;
}

float angle_gap(float a, float b) {
    float d = std::fmod(std::fabs(a - b), 2.0f * static_cast<float>(kPi));
    return std::min(d, 2.0f * static_cast<float>(kPi) - d);
}

} // namespace

TEST_SUITE("sift") {

TEST_CASE("scale space has the expected shape") {
    GrayImage img = synth_gray(300, 420, 1);
    cs::SiftParams p;
    cs::ScaleSpace ss = cs::build_scale_space(img, p);
    CHECK(ss.num_octaves == 6); // floor(log2(300)) - 2
    REQUIRE(ss.gaussian.size() == 6);
    for (int o = 0; o < ss.num_octaves; ++o) {
        CHECK(ss.gaussian[o].size() == 6); // scales_per_octave + 3
        CHECK(ss.dog[o].size() == 5);      // scales_per_octave + 2
    }
    // octaves halve the frame each step
    CHECK(ss.gaussian[1][0].width == ss.gaussian[0][0].width / 2);
    CHECK(ss.gaussian[1][0].height == ss.gaussian[0][0].height / 2);
}

TEST_CASE("scale space of a constant image is zero everywhere in the DoG") {
    GrayImage img(64, 64);
    for (auto& v : img.data) v = 0.35f;
    cs::ScaleSpace ss = cs::build_scale_space(img, cs::SiftParams{});
    for (const auto& octave : ss.dog)
        for (const auto& level : octave)
            for (float v : level.data) CHECK(std::fabs(v) < 1e-6f);
}

TEST_CASE("constant image yields no keypoints and extract is total") {
    GrayImage img(128, 96);
    for (auto& v : img.data) v = 0.5f;
    cs::FeatureSet fs = cs::extract(img, cs::SiftParams{});
    CHECK(fs.size() == 0);
}

TEST_CASE("a single blob is found where a brute-force DoG scan puts it") {
    GrayImage img = gaussian_blob(300, 300, 150.0, 150.0, 4.0, 0.8f);
    cs::SiftParams p;
    cs::ScaleSpace ss = cs::build_scale_space(img, p);

    // oracle: strongest |DoG| sample over the whole pyramid, mapped to input coords
    double best = 0;
    double bx = -1, by = -1;
    for (int o = 0; o < ss.num_octaves; ++o) {
        double step = std::pow(2.0, o);
        for (const auto& lvl : ss.dog[o])
            for (int y = 1; y + 1 < lvl.height; ++y)
                for (int x = 1; x + 1 < lvl.width; ++x)
                    if (std::fabs(lvl.at(x, y)) > best) {
                        best = std::fabs(lvl.at(x, y));
                        bx = x * step;
                        by = y * step;
                    }
    }
    REQUIRE(best > 0);
    CHECK(std::hypot(bx - 150.0, by - 150.0) <= 3.0);

    std::vector<cs::Keypoint> kps = cs::detect_keypoints(ss, p);
    REQUIRE_FALSE(kps.empty());
    double nearest = 1e9;
    for (const auto& kp : kps) nearest = std::min(nearest, std::hypot(kp.x - 150.0, kp.y - 150.0));
    CHECK(nearest <= 3.0);
}

TEST_CASE("straight step edges are rejected by the curvature gate") {
    // vertical step at x = 150, softened so the pyramid sees a clean edge
    GrayImage img(300, 300);
    for (int y = 0; y < 300; ++y)
        for (int x = 0; x < 300; ++x)
            img.at(x, y) = 1.0f / (1.0f + std::exp(-(x - 150.0f) / 1.5f));
    cs::SiftParams p;
    cs::ScaleSpace ss = cs::build_scale_space(img, p);

    // oracle: along the edge interior the spatial Hessian is strongly anisotropic,
    // so tr^2/det exceeds the (r+1)^2/r gate wherever the DoG response is strong
    const auto& lvl = ss.dog[0][1];
    float gate = (p.edge_ratio + 1) * (p.edge_ratio + 1) / p.edge_ratio;
    int strong = 0, above_gate = 0;
    for (int y = 40; y < 260; y += 20) {
        int bx = 1;
        float bv = 0;
        for (int x = 140; x <= 160; ++x)
            if (std::fabs(lvl.at(x, y)) > bv) {
                bv = std::fabs(lvl.at(x, y));
                bx = x;
            }
        if (bv < 0.01f) continue;
        ++strong;
        float dxx = lvl.at(bx + 1, y) - 2 * lvl.at(bx, y) + lvl.at(bx - 1, y);
        float dyy = lvl.at(bx, y + 1) - 2 * lvl.at(bx, y) + lvl.at(bx, y - 1);
        float dxy = (lvl.at(bx + 1, y + 1) - lvl.at(bx - 1, y + 1) - lvl.at(bx + 1, y - 1) +
                     lvl.at(bx - 1, y - 1)) /
                    4.0f;
        float tr = dxx + dyy, det = dxx * dyy - dxy * dxy;
        if (det <= 0 || tr * tr / det >= gate) ++above_gate;
    }
    REQUIRE(strong > 0);
    CHECK(above_gate == strong);

    // behavioral consequence: no keypoints on the edge interior
    for (const auto& kp : cs::detect_keypoints(ss, p)) {
        bool on_edge = std::fabs(kp.x - 150.0f) < 4.0f && kp.y > 40 && kp.y < 260;
        CHECK_FALSE(on_edge);
    }
}

TEST_CASE("a uniform ramp produces orientations aligned with its gradient") {
    // ramp rising along +x: gradient direction 0 everywhere
    GrayImage img(200, 200);
    for (int y = 0; y < 200; ++y)
        for (int x = 0; x < 200; ++x) img.at(x, y) = 0.2f + 0.003f * x;
    cs::SiftParams p;
    cs::ScaleSpace ss = cs::build_scale_space(img, p);

    cs::Keypoint kp;
    kp.octave = 0;
    kp.level = 1;
    kp.lx = kp.x = 100.0f;
    kp.ly = kp.y = 100.0f;
    kp.lsigma = kp.scale = p.base_sigma * std::pow(2.0f, 1.0f / p.scales_per_octave);
    std::vector<cs::Keypoint> oriented = cs::assign_orientations({kp}, ss, p);
    REQUIRE_FALSE(oriented.empty());
    for (const auto& o : oriented)
        CHECK(angle_gap(o.orientation, 0.0f) < 10.0f * static_cast<float>(kPi) / 180.0f);
}

TEST_CASE("two orthogonal ramp populations duplicate the keypoint") {
    // left half rises along +x, right half along +y; a window at the seam sees both
    GrayImage img(200, 200);
    for (int y = 0; y < 200; ++y)
        for (int x = 0; x < 200; ++x)
            img.at(x, y) = x < 100 ? 0.1f + 0.004f * x : 0.1f + 0.004f * y;
    cs::SiftParams p;
    cs::ScaleSpace ss = cs::build_scale_space(img, p);

    cs::Keypoint kp;
    kp.octave = 0;
    kp.level = 1;
    kp.lx = kp.x = 100.0f;
    kp.ly = kp.y = 100.0f;
    kp.lsigma = kp.scale = p.base_sigma * std::pow(2.0f, 1.0f / p.scales_per_octave);
    std::vector<cs::Keypoint> oriented = cs::assign_orientations({kp}, ss, p);
    REQUIRE(oriented.size() >= 2);
    bool has_x = false, has_y = false;
    for (const auto& o : oriented) {
        if (angle_gap(o.orientation, 0.0f) < 0.4f) has_x = true;
        if (angle_gap(o.orientation, static_cast<float>(kPi) / 2) < 0.4f) has_y = true;
    }
    CHECK(has_x);
    CHECK(has_y);
}

TEST_CASE("quarter-turn rotation shifts orientations by a quarter turn") {
    GrayImage img = synth_gray(256, 256, 21);
    GrayImage rot = rot90(img);
    cs::SiftParams p;
    cs::FeatureSet a = cs::extract(img, p);
    cs::FeatureSet b = cs::extract(rot, p);
    REQUIRE(a.size() > 20);
    REQUIRE(b.size() > 20);

    int matched = 0, aligned = 0;
    for (const auto& ka : a.keypoints) {
        // (x, y) lands at (y, w-1-x) after the quarter turn
        float ex = ka.y, ey = img.width - 1 - ka.x;
        const cs::Keypoint* best = nullptr;
        float bd = 2.0f;
        for (const auto& kb : b.keypoints) {
            float d = std::hypot(kb.x - ex, kb.y - ey);
            float sr = kb.scale / ka.scale;
            if (d < bd && sr > 0.8f && sr < 1.25f) {
                bd = d;
                best = &kb;
            }
        }
        if (!best) continue;
        ++matched;
        float d = angle_gap(best->orientation + static_cast<float>(kPi) / 2, ka.orientation);
        if (d < 10.0f * static_cast<float>(kPi) / 180.0f) ++aligned;
    }
    REQUIRE(matched >= 10);
    CHECK(aligned >= (matched * 8) / 10);
}

TEST_CASE("descriptors are 128 clamped bytes") {
    GrayImage img = synth_gray(300, 300, 31);
    cs::FeatureSet fs = cs::extract(img, cs::SiftParams{});
    REQUIRE(fs.size() > 0);
    CHECK(fs.descriptors.size() == fs.keypoints.size());
    for (const auto& d : fs.descriptors) {
        CHECK(d.size() == 128);
        bool nonzero = false;
        for (uint8_t v : d) nonzero |= v != 0;
        CHECK(nonzero);
    }
}

TEST_CASE("normalization clips and renormalizes to unit length") {
    Rng rng(5);
    std::array<float, 128> v{};
    for (auto& x : v) x = static_cast<float>(rng.uniform_real(0.0, 1.0));
    cs::detail::normalize_descriptor(v, 0.2f);
    double n = 0;
    float mx = 0;
    for (float x : v) {
        n += static_cast<double>(x) * x;
        mx = std::max(mx, x);
    }
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));

    // flat vector: no element reaches the clip, quantization is round(512 x)
    std::array<float, 128> flat{};
    flat.fill(1.0f);
    cs::SiftDescriptor q = cs::detail::quantize_descriptor(flat, 0.2f);
    for (uint8_t b : q) CHECK(b == 45); // round(512 / sqrt(128))
}

TEST_CASE("extraction is deterministic and capped") {
    GrayImage img = synth_gray(300, 240, 41);
    cs::SiftParams p;
    cs::FeatureSet a = cs::extract(img, p);
    cs::FeatureSet b = cs::extract(img, p);
    CHECK(a.keypoints.size() == b.keypoints.size());
    CHECK(a.descriptors == b.descriptors);
    REQUIRE(a.size() >= 1);
    CHECK(a.size() <= static_cast<size_t>(p.max_keypoints));

    cs::SiftParams tight = p;
    tight.max_keypoints = 5;
    cs::FeatureSet c = cs::extract(img, tight);
    CHECK(c.size() <= 5);
    for (size_t i = 1; i < c.keypoints.size(); ++i)
        CHECK(c.keypoints[i - 1].response >= c.keypoints[i].response);
}

TEST_CASE("keypoint coordinates stay inside the frame") {
    GrayImage img = synth_gray(320, 200, 51);
    cs::FeatureSet fs = cs::extract(img, cs::SiftParams{});
    for (const auto& kp : fs.keypoints) {
        CHECK(kp.x >= 0);
        CHECK(kp.y >= 0);
        CHECK(kp.x <= 319);
        CHECK(kp.y <= 199);
        CHECK(kp.scale > 0);
        CHECK(kp.orientation >= 0);
        CHECK(kp.orientation < 2 * kPi + 1e-5);
    }
}

TEST_CASE("feature sets round-trip through the archive format") {
    testsupport::TempDir tmp;
    std::vector<cs::FeatureSet> sets;
    for (int i = 0; i < 3; ++i) {
        cs::FeatureSet fs = cs::extract(synth_gray(128, 160, 60 + i), cs::SiftParams{});
        fs.image_id = "img_" + std::to_string(i);
        sets.push_back(std::move(fs));
    }
    cs::save_feature_sets(sets, tmp.file("f.bin"));
    std::vector<cs::FeatureSet> back = cs::load_feature_sets(tmp.file("f.bin"));
    REQUIRE(back.size() == sets.size());
    for (size_t i = 0; i < sets.size(); ++i) {
        CHECK(back[i].image_id == sets[i].image_id);
        CHECK(back[i].descriptors == sets[i].descriptors);
        REQUIRE(back[i].keypoints.size() == sets[i].keypoints.size());
        for (size_t k = 0; k < sets[i].keypoints.size(); ++k) {
            CHECK(back[i].keypoints[k].x == sets[i].keypoints[k].x);
            CHECK(back[i].keypoints[k].y == sets[i].keypoints[k].y);
            CHECK(back[i].keypoints[k].scale == sets[i].keypoints[k].scale);
            CHECK(back[i].keypoints[k].orientation == sets[i].keypoints[k].orientation);
            CHECK(back[i].keypoints[k].response == sets[i].keypoints[k].response);
        }
    }
}

}
