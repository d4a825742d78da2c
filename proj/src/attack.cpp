#include "copydet/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "copydet/codec.hpp"
#include "copydet/csvio.hpp"
#include "copydet/rng.hpp"

namespace copydet::imaging {

namespace {

struct KindName {
    AttackKind kind;
    const char* name;
};

constexpr KindName kKindNames[] = {
    {AttackKind::Crop, "crop"},
    {AttackKind::Rotate, "rotate"},
    {AttackKind::FlipH, "flip-h"},
    {AttackKind::GaussianBlur, "gaussian-blur"},
    {AttackKind::JpegRecompress, "jpeg-recompress"},
    {AttackKind::Brightness, "brightness"},
    {AttackKind::Contrast, "contrast"},
    {AttackKind::Grayscale, "grayscale"},
    {AttackKind::Pad, "pad"},
    {AttackKind::Resize, "resize"},
    {AttackKind::OverlayPaste, "overlay-paste"},
    {AttackKind::Pixelate, "pixelate"},
};

double param_or_draw(const nlohmann::json& params, const char* key, Rng& rng, double lo,
                     double hi) {
    if (params.contains(key)) {
        double v = params.at(key).get<double>();
        if (v < lo || v > hi)
            throw ParamOutOfRange(std::string("attack param ") + key + " out of range");
        return v;
    }
    return rng.uniform_real(lo, hi);
}

int param_or_draw_int(const nlohmann::json& params, const char* key, Rng& rng, int lo,
                      int hi) {
    if (params.contains(key)) {
        int v = params.at(key).get<int>();
        if (v < lo || v > hi)
            throw ParamOutOfRange(std::string("attack param ") + key + " out of range");
        return v;
    }
    return static_cast<int>(rng.uniform_int(lo, hi));
}

uint8_t clamp_u8(long v) { return static_cast<uint8_t>(std::clamp(v, 0L, 255L)); }

ImageBuf attack_crop(const ImageBuf& img, const nlohmann::json& params, Rng& rng) {
    double frac = param_or_draw(params, "area_frac", rng, 0.3, 1.0);
    if (frac <= 0.0 || frac > 1.0)
        throw ParamOutOfRange("crop: area_frac must be in (0, 1]");
    double edge = std::sqrt(frac);
    int w2 = std::max(1, static_cast<int>(std::lround(img.width * edge)));
    int h2 = std::max(1, static_cast<int>(std::lround(img.height * edge)));
    w2 = std::min(w2, img.width);
    h2 = std::min(h2, img.height);
    int x = w2 < img.width ? static_cast<int>(rng.uniform_int(0, img.width - w2)) : 0;
    int y = h2 < img.height ? static_cast<int>(rng.uniform_int(0, img.height - h2)) : 0;
    return crop(img, CropBox{x, y, w2, h2});
}

ImageBuf attack_rotate(const ImageBuf& img, const nlohmann::json& params, Rng& rng) {
    double deg = param_or_draw(params, "degrees", rng, -30.0, 30.0);
    if (deg < -180.0 || deg > 180.0)
        throw ParamOutOfRange("rotate: degrees must be in [-180, 180]");
    double rad = deg * M_PI / 180.0;
    double c = std::cos(rad), s = std::sin(rad);
    double cx = (img.width - 1) * 0.5, cy = (img.height - 1) * 0.5;
    ImageBuf out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            // inverse map, border handled by clamping (edge replication)
            double dx = x - cx, dy = y - cy;
            double sx = c * dx + s * dy + cx;
            double sy = -s * dx + c * dy + cy;
            sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
            sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
            int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
            int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
            float fx = static_cast<float>(sx - x0), fy = static_cast<float>(sy - y0);
            for (int ch = 0; ch < img.channels; ++ch) {
                float v = (1 - fy) * ((1 - fx) * img.at(x0, y0, ch) + fx * img.at(x1, y0, ch)) +
                          fy * ((1 - fx) * img.at(x0, y1, ch) + fx * img.at(x1, y1, ch));
                out.at(x, y, ch) = clamp_u8(std::lround(v));
            }
        }
    }
    return out;
}

ImageBuf attack_brightness(const ImageBuf& img, const nlohmann::json& params, Rng& rng) {
    double offset = param_or_draw(params, "offset", rng, -60.0, 60.0);
    if (offset < -100.0 || offset > 100.0)
        throw ParamOutOfRange("brightness: offset must be in [-100, 100]");
    long off = std::lround(offset);
    ImageBuf out = img;
    for (auto& v : out.data) v = clamp_u8(static_cast<long>(v) + off);
    return out;
}

ImageBuf attack_contrast(const ImageBuf& img, const nlohmann::json& params, Rng& rng) {
    double factor = param_or_draw(params, "factor", rng, 0.5, 1.8);
    if (factor < 0.2 || factor > 3.0)
        throw ParamOutOfRange("contrast: factor must be in [0.2, 3]");
    ImageBuf out = img;
    for (auto& v : out.data)
        v = clamp_u8(std::lround(128.0 + (static_cast<double>(v) - 128.0) * factor));
    return out;
}

ImageBuf attack_grayscale(const ImageBuf& img) {
    if (img.channels == 1) return img;
    ImageBuf out(img.width, img.height, 3);
    const size_t n = static_cast<size_t>(img.width) * img.height;
    for (size_t i = 0; i < n; ++i) {
        const uint8_t* p = &img.data[i * 3];
        uint8_t g = clamp_u8(std::lround(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]));
        out.data[i * 3] = out.data[i * 3 + 1] = out.data[i * 3 + 2] = g;
    }
    return out;
}

ImageBuf attack_pad(const ImageBuf& img, const nlohmann::json& params, Rng& rng) {
    double frac = param_or_draw(params, "frac", rng, 0.05, 0.25);
    if (frac < 0.02 || frac > 0.5)
        throw ParamOutOfRange("pad: frac must be in [0.02, 0.5]");
    int value = param_or_draw_int(params, "value", rng, 0, 255);
    int m = std::max(1, static_cast<int>(std::lround(std::min(img.width, img.height) * frac)));
    ImageBuf out(img.width + 2 * m, img.height + 2 * m, img.channels);
    std::fill(out.data.begin(), out.data.end(), static_cast<uint8_t>(value));
    for (int y = 0; y < img.height; ++y)
        std::copy(&img.data[static_cast<size_t>(y) * img.width * img.channels],
                  &img.data[static_cast<size_t>(y) * img.width * img.channels] +
                      static_cast<size_t>(img.width) * img.channels,
                  &out.data[(static_cast<size_t>(y + m) * out.width + m) * img.channels]);
    return out;
}

ImageBuf attack_resize(const ImageBuf& img, const nlohmann::json& params, Rng& rng) {
    double scale = param_or_draw(params, "scale", rng, 0.4, 2.0);
    if (scale < 0.1 || scale > 4.0)
        throw ParamOutOfRange("resize: scale must be in [0.1, 4]");
    int w = std::max(1, static_cast<int>(std::lround(img.width * scale)));
    int h = std::max(1, static_cast<int>(std::lround(img.height * scale)));
    return resize(img, w, h);
}

ImageBuf attack_pixelate(const ImageBuf& img, const nlohmann::json& params, Rng& rng) {
    int block = param_or_draw_int(params, "block", rng, 4, 16);
    if (block < 2 || block > 64)
        throw ParamOutOfRange("pixelate: block must be in [2, 64]");
    ImageBuf out = img;
    for (int by = 0; by < img.height; by += block) {
        int bh = std::min(block, img.height - by);
        for (int bx = 0; bx < img.width; bx += block) {
            int bw = std::min(block, img.width - bx);
            for (int c = 0; c < img.channels; ++c) {
                long sum = 0;
                for (int y = by; y < by + bh; ++y)
                    for (int x = bx; x < bx + bw; ++x) sum += img.at(x, y, c);
                uint8_t mean = clamp_u8(std::lround(static_cast<double>(sum) / (bw * bh)));
                for (int y = by; y < by + bh; ++y)
                    for (int x = bx; x < bx + bw; ++x) out.at(x, y, c) = mean;
            }
        }
    }
    return out;
}

// low-frequency value noise, used as the unrelated background
ImageBuf procedural_background(int w, int h, int channels, Rng& rng) {
    const int cell = 32;
    int gw = w / cell + 2, gh = h / cell + 2;
    std::vector<float> grid(static_cast<size_t>(gw) * gh * channels);
    for (auto& v : grid) v = static_cast<float>(rng.uniform_real(32.0, 224.0));
    ImageBuf out(w, h, channels);
    for (int y = 0; y < h; ++y) {
        int gy = y / cell;
        float fy = static_cast<float>(y % cell) / cell;
        for (int x = 0; x < w; ++x) {
            int gx = x / cell;
            float fx = static_cast<float>(x % cell) / cell;
            for (int c = 0; c < channels; ++c) {
                auto g = [&](int i, int j) {
                    return grid[(static_cast<size_t>(j) * gw + i) * channels + c];
                };
                float v = (1 - fy) * ((1 - fx) * g(gx, gy) + fx * g(gx + 1, gy)) +
                          fy * ((1 - fx) * g(gx, gy + 1) + fx * g(gx + 1, gy + 1));
                out.at(x, y, c) = clamp_u8(std::lround(v));
            }
        }
    }
    return out;
}

std::pair<ImageBuf, OverlayRecord> attack_overlay(const ImageBuf& img,
                                                  const nlohmann::json& params, Rng& rng) {
    int bg_w = params.contains("bg_w") ? param_or_draw_int(params, "bg_w", rng, 64, 4096)
                                       : std::max(128, img.width);
    int bg_h = params.contains("bg_h") ? param_or_draw_int(params, "bg_h", rng, 64, 4096)
                                       : std::max(128, img.height);

    int fg_w, fg_h;
    if (params.contains("fg_w") || params.contains("fg_h")) {
        fg_w = param_or_draw_int(params, "fg_w", rng, 1, bg_w);
        fg_h = param_or_draw_int(params, "fg_h", rng, 1, bg_h);
    } else {
        // keep aspect, foreground min edge a seeded fraction of background's
        double frac = param_or_draw(params, "fg_frac", rng, 0.3, 0.7);
        double scale = frac * std::min(bg_w, bg_h) / std::min(img.width, img.height);
        fg_w = std::clamp(static_cast<int>(std::lround(img.width * scale)), 1, bg_w);
        fg_h = std::clamp(static_cast<int>(std::lround(img.height * scale)), 1, bg_h);
    }
    if (fg_w > bg_w || fg_h > bg_h)
        throw ParamOutOfRange("overlay-paste: foreground exceeds background");

    int x = params.contains("x") ? param_or_draw_int(params, "x", rng, 0, bg_w - fg_w)
                                 : static_cast<int>(rng.uniform_int(0, bg_w - fg_w));
    int y = params.contains("y") ? param_or_draw_int(params, "y", rng, 0, bg_h - fg_h)
                                 : static_cast<int>(rng.uniform_int(0, bg_h - fg_h));
    if (x < 0 || y < 0 || x + fg_w > bg_w || y + fg_h > bg_h)
        throw ParamOutOfRange("overlay-paste: paste box outside background");

    ImageBuf bg = procedural_background(bg_w, bg_h, img.channels, rng);
    ImageBuf fg = resize(img, fg_w, fg_h);
    for (int yy = 0; yy < fg_h; ++yy)
        std::copy(&fg.data[static_cast<size_t>(yy) * fg_w * fg.channels],
                  &fg.data[static_cast<size_t>(yy) * fg_w * fg.channels] +
                      static_cast<size_t>(fg_w) * fg.channels,
                  &bg.data[(static_cast<size_t>(y + yy) * bg_w + x) * bg.channels]);
    OverlayRecord rec;
    rec.background_id = "procedural";
    rec.box = CropBox{x, y, fg_w, fg_h};
    return {std::move(bg), rec};
}

} // namespace

const char* attack_kind_name(AttackKind kind) {
    for (const auto& kn : kKindNames)
        if (kn.kind == kind) return kn.name;
    throw ParamOutOfRange("unknown attack kind");
}

AttackKind attack_kind_from_name(const std::string& name) {
    for (const auto& kn : kKindNames)
        if (name == kn.name) return kn.kind;
    throw ParamOutOfRange("unknown attack kind: " + name);
}

ImageBuf gaussian_blur(const ImageBuf& img, double sigma) {
    if (sigma <= 0.0) throw ParamOutOfRange("gaussian_blur: sigma must be > 0");
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> kernel(static_cast<size_t>(2 * radius + 1));
    float sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        float v = std::exp(static_cast<float>(-(i * i) / (2.0 * sigma * sigma)));
        kernel[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : kernel) v /= sum;

    const int w = img.width, h = img.height, ch = img.channels;
    std::vector<float> tmp(static_cast<size_t>(w) * h * ch);
    // horizontal pass, edge replication
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                float acc = 0;
                for (int k = -radius; k <= radius; ++k) {
                    int xs = std::clamp(x + k, 0, w - 1);
                    acc += kernel[static_cast<size_t>(k + radius)] * img.at(xs, y, c);
                }
                tmp[(static_cast<size_t>(y) * w + x) * ch + c] = acc;
            }
    ImageBuf out(w, h, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                float acc = 0;
                for (int k = -radius; k <= radius; ++k) {
                    int ys = std::clamp(y + k, 0, h - 1);
                    acc += kernel[static_cast<size_t>(k + radius)] *
                           tmp[(static_cast<size_t>(ys) * w + x) * ch + c];
                }
                out.at(x, y, c) = clamp_u8(std::lround(acc));
            }
    return out;
}

std::pair<ImageBuf, std::optional<OverlayRecord>> apply_attack(const ImageBuf& img,
                                                               const AttackSpec& spec) {
    Rng rng(spec.seed);
    switch (spec.kind) {
        case AttackKind::Crop:
            return {attack_crop(img, spec.params, rng), std::nullopt};
        case AttackKind::Rotate:
            return {attack_rotate(img, spec.params, rng), std::nullopt};
        case AttackKind::FlipH:
            return {flip_horizontal(img), std::nullopt};
        case AttackKind::GaussianBlur: {
            double sigma = param_or_draw(spec.params, "sigma", rng, 0.8, 3.0);
            if (sigma <= 0.0 || sigma > 8.0)
                throw ParamOutOfRange("gaussian-blur: sigma must be in (0, 8]");
            return {gaussian_blur(img, sigma), std::nullopt};
        }
        case AttackKind::JpegRecompress: {
            int quality = param_or_draw_int(spec.params, "quality", rng, 20, 90);
            if (quality < 5 || quality > 95)
                throw ParamOutOfRange("jpeg-recompress: quality must be in [5, 95]");
            return {decode_image(encode_jpeg(img, quality)), std::nullopt};
        }
        case AttackKind::Brightness:
            return {attack_brightness(img, spec.params, rng), std::nullopt};
        case AttackKind::Contrast:
            return {attack_contrast(img, spec.params, rng), std::nullopt};
        case AttackKind::Grayscale:
            return {attack_grayscale(img), std::nullopt};
        case AttackKind::Pad:
            return {attack_pad(img, spec.params, rng), std::nullopt};
        case AttackKind::Resize:
            return {attack_resize(img, spec.params, rng), std::nullopt};
        case AttackKind::OverlayPaste: {
            auto [out, rec] = attack_overlay(img, spec.params, rng);
            return {std::move(out), rec};
        }
        case AttackKind::Pixelate:
            return {attack_pixelate(img, spec.params, rng), std::nullopt};
    }
    throw ParamOutOfRange("unknown attack kind");
}

std::vector<ManifestRow> load_attack_manifest(const std::string& path) {
    auto lines = read_lines(path);
    std::vector<ManifestRow> rows;
    for (size_t i = 1; i < lines.size(); ++i) {
        auto fields = csv_split(lines[i]);
        if (fields.size() != 5)
            throw MalformedRow("manifest row " + std::to_string(i) + ": expected 5 fields");
        ManifestRow row;
        row.query_id = fields[0];
        row.source_id = fields[1];
        row.spec.kind = attack_kind_from_name(fields[2]);
        try {
            row.spec.params = fields[3].empty() ? nlohmann::json::object()
                                                : nlohmann::json::parse(fields[3]);
        } catch (const nlohmann::json::parse_error&) {
            throw MalformedRow("manifest row " + std::to_string(i) + ": bad params json");
        }
        row.spec.seed = std::stoull(fields[4]);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_attack_manifest(const std::vector<ManifestRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    out << "query_id,source_reference_id,attack_kind,params_json,seed\n";
    for (const auto& row : rows) {
        out << csv_escape(row.query_id) << ',' << csv_escape(row.source_id) << ','
            << attack_kind_name(row.spec.kind) << ','
            << csv_escape(row.spec.params.dump()) << ',' << row.spec.seed << '\n';
    }
    if (!out) throw IoFailure("write failed: " + path);
}

} // namespace copydet::imaging
