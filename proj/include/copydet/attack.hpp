#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "copydet/image.hpp"

namespace copydet::imaging {

enum class AttackKind {
    Crop,
    Rotate,
    FlipH,
    GaussianBlur,
    JpegRecompress,
    Brightness,
    Contrast,
    Grayscale,
    Pad,
    Resize,
    OverlayPaste,
    Pixelate,
};

const char* attack_kind_name(AttackKind kind);
AttackKind attack_kind_from_name(const std::string& name);

// One synthetic edit. Same (kind, params, seed) always produces the
// same output bytes.
//
// Per-kind params (missing keys fall back to seeded draws within range):
//   crop            area_frac (0,1]
//   rotate          degrees [-180,180]
//   flip-h          -
//   gaussian-blur   sigma (0,8]
//   jpeg-recompress quality [5,95]
//   brightness      offset [-100,100]
//   contrast        factor [0.2,3]
//   grayscale       -
//   pad             frac [0.02,0.5], value [0,255]
//   resize          scale [0.1,4]
//   overlay-paste   bg_w,bg_h [64,4096]; x,y,fg_w,fg_h optional
//   pixelate        block [2,64]
struct AttackSpec {
    AttackKind kind = AttackKind::FlipH;
    nlohmann::json params = nlohmann::json::object();
    uint64_t seed = 0;
};

// Paste provenance for an overlay-paste output.
struct OverlayRecord {
    std::string background_id;
    std::string foreground_id;
    CropBox box;
};

std::pair<ImageBuf, std::optional<OverlayRecord>> apply_attack(const ImageBuf& img,
                                                               const AttackSpec& spec);

// gaussian-blur primitive, shared with the attack path
ImageBuf gaussian_blur(const ImageBuf& img, double sigma);

// Attack manifest rows: query_id,source_reference_id,attack_kind,params_json,seed
struct ManifestRow {
    std::string query_id;
    std::string source_id;
    AttackSpec spec;
};

std::vector<ManifestRow> load_attack_manifest(const std::string& path);
void write_attack_manifest(const std::vector<ManifestRow>& rows, const std::string& path);

} // namespace copydet::imaging
