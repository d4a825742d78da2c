#include "copydet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>

#include "copydet/attack.hpp"
#include "copydet/codec.hpp"
#include "copydet/csvio.hpp"
#include "copydet/errors.hpp"
#include "copydet/evalkit.hpp"
#include "copydet/parallel.hpp"
#include "copydet/rng.hpp"
#include "copydet/synth.hpp"
#include "copydet/vecindex.hpp"

namespace fs = std::filesystem;

namespace copydet {

using imaging::AttackKind;
using sift::extract;
using sift::load_feature_sets;
using sift::save_feature_sets;

// --- config ---------------------------------------------------------------------

nlohmann::json config_to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["corpus_dir"] = c.corpus_dir;
    j["query_dir"] = c.query_dir;
    j["output_dir"] = c.output_dir;
    j["index_file"] = c.index_file;
    j["embedding_file"] = c.embedding_file;
    j["projection_file"] = c.projection_file;
    j["features_file"] = c.features_file;
    j["ground_truth_file"] = c.ground_truth_file;
    j["crop_boxes_file"] = c.crop_boxes_file;
    j["attack_manifest"] = c.attack_manifest;
    j["min_edge"] = c.min_edge;
    j["threads"] = c.threads;
    j["seed"] = c.seed;
    j["dtype"] = c.dtype;
    j["nlist"] = c.nlist;
    j["nprobe"] = c.nprobe;
    j["train_sample"] = c.train_sample;
    j["sift"] = {{"scales_per_octave", c.sift.scales_per_octave},
                 {"base_sigma", c.sift.base_sigma},
                 {"contrast_threshold", c.sift.contrast_threshold},
                 {"edge_ratio", c.sift.edge_ratio},
                 {"max_keypoints", c.sift.max_keypoints},
                 {"descriptor_clip", c.sift.descriptor_clip}};
    j["matcher"] = {{"ratio_threshold", c.matcher.ratio_threshold},
                    {"local_l2_threshold", c.matcher.local_l2_threshold},
                    {"min_points", c.matcher.min_points},
                    {"global_k", c.matcher.global_k}};
    j["detector"] = {{"edge_threshold", c.detector.edge_threshold},
                     {"min_frac", c.detector.min_frac},
                     {"max_frac", c.detector.max_frac}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"lr", c.train.lr},
                  {"margin", c.train.margin},
                  {"batch_size", c.train.batch_size},
                  {"xbm_capacity", c.train.xbm_capacity},
                  {"seed", c.train.seed}};
    j["use_heuristic_detector"] = c.use_heuristic_detector;
    j["branches"] = {{"global", c.branch_global}, {"cropped", c.branch_cropped}};
    j["global_similarity_threshold"] = c.global_similarity_threshold;
    return j;
}

template <typename T>
static void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    get_if(j, "corpus_dir", c.corpus_dir);
    get_if(j, "query_dir", c.query_dir);
    get_if(j, "output_dir", c.output_dir);
    get_if(j, "index_file", c.index_file);
    get_if(j, "embedding_file", c.embedding_file);
    get_if(j, "projection_file", c.projection_file);
    get_if(j, "features_file", c.features_file);
    get_if(j, "ground_truth_file", c.ground_truth_file);
    get_if(j, "crop_boxes_file", c.crop_boxes_file);
    get_if(j, "attack_manifest", c.attack_manifest);
    get_if(j, "min_edge", c.min_edge);
    get_if(j, "threads", c.threads);
    get_if(j, "seed", c.seed);
    get_if(j, "dtype", c.dtype);
    get_if(j, "nlist", c.nlist);
    get_if(j, "nprobe", c.nprobe);
    get_if(j, "train_sample", c.train_sample);
    if (j.contains("sift")) {
        const auto& s = j.at("sift");
        get_if(s, "scales_per_octave", c.sift.scales_per_octave);
        get_if(s, "base_sigma", c.sift.base_sigma);
        get_if(s, "contrast_threshold", c.sift.contrast_threshold);
        get_if(s, "edge_ratio", c.sift.edge_ratio);
        get_if(s, "max_keypoints", c.sift.max_keypoints);
        get_if(s, "descriptor_clip", c.sift.descriptor_clip);
    }
    if (j.contains("matcher")) {
        const auto& m = j.at("matcher");
        get_if(m, "ratio_threshold", c.matcher.ratio_threshold);
        get_if(m, "local_l2_threshold", c.matcher.local_l2_threshold);
        get_if(m, "min_points", c.matcher.min_points);
        get_if(m, "global_k", c.matcher.global_k);
    }
    if (j.contains("detector")) {
        const auto& d = j.at("detector");
        get_if(d, "edge_threshold", c.detector.edge_threshold);
        get_if(d, "min_frac", c.detector.min_frac);
        get_if(d, "max_frac", c.detector.max_frac);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        get_if(t, "epochs", c.train.epochs);
        get_if(t, "lr", c.train.lr);
        get_if(t, "margin", c.train.margin);
        get_if(t, "batch_size", c.train.batch_size);
        get_if(t, "xbm_capacity", c.train.xbm_capacity);
        get_if(t, "seed", c.train.seed);
    }
    get_if(j, "use_heuristic_detector", c.use_heuristic_detector);
    if (j.contains("branches")) {
        const auto& b = j.at("branches");
        get_if(b, "global", c.branch_global);
        get_if(b, "cropped", c.branch_cropped);
    }
    get_if(j, "global_similarity_threshold", c.global_similarity_threshold);
    if (c.threads < 0) throw ParamOutOfRange("threads must be >= 0");
    if (c.min_edge < 16) throw ParamOutOfRange("min_edge must be >= 16");
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open config: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedRow("config parse error: " + std::string(e.what()));
    }
    return config_from_json(j);
}

void save_config(const PipelineConfig& cfg, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoFailure("cannot open for write: " + path);
    f << config_to_json(cfg).dump(2) << '\n';
    if (!f) throw IoFailure("write failed: " + path);
}

// --- discovery --------------------------------------------------------------------

std::vector<std::string> discover_images(const std::string& dir) {
    if (!fs::is_directory(dir)) throw NoImagesFound("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
            out.push_back(entry.path().generic_string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string image_id_from_path(const std::string& path) {
    return fs::path(path).stem().string();
}

// --- extract ---------------------------------------------------------------------

namespace {

struct LoadedImage {
    bool ok = false;
    std::string id;
    ImageBuf img; // already resized to min_edge
};

LoadedImage load_and_resize(const std::string& path, int min_edge) {
    LoadedImage li;
    li.id = image_id_from_path(path);
    try {
        ImageBuf raw = imaging::load_image(path);
        li.img = imaging::resize_min_edge(raw, min_edge);
        li.ok = true;
    } catch (const Error& e) {
        std::cerr << "warning: skipping " << path << ": " << e.what() << '\n';
    }
    return li;
}

} // namespace

int cmd_extract(const PipelineConfig& cfg, const std::string& input_dir,
                const std::string& out_file) {
    std::vector<std::string> paths = discover_images(input_dir);
    if (paths.empty()) throw NoImagesFound("no images under " + input_dir);

    std::vector<std::optional<FeatureSet>> slots(paths.size());
    std::atomic<size_t> skipped{0};
    parallel_for(paths.size(), cfg.threads, [&](size_t i) {
        LoadedImage li = load_and_resize(paths[i], cfg.min_edge);
        if (!li.ok) {
            skipped.fetch_add(1);
            return;
        }
        FeatureSet fsx = extract(imaging::to_grayscale(li.img), cfg.sift);
        fsx.image_id = li.id;
        slots[i] = std::move(fsx);
    });

    std::vector<FeatureSet> sets;
    sets.reserve(paths.size());
    for (auto& s : slots)
        if (s) sets.push_back(std::move(*s));
    save_feature_sets(sets, out_file);
    std::cout << "extracted " << sets.size() << " feature sets to " << out_file;
    if (skipped > 0) std::cout << " (" << skipped.load() << " files skipped)";
    std::cout << '\n';
    return skipped > 0 ? 1 : 0;
}

// --- index / embed / train ---------------------------------------------------------

int cmd_index(const PipelineConfig& cfg, const std::string& features_file,
              const std::string& out_file) {
    std::vector<FeatureSet> sets = load_feature_sets(features_file);
    Dtype dt = dtype_from_name(cfg.dtype);
    DescriptorIndex idx = cfg.nlist > 0
                              ? build_partitioned(sets, dt, cfg.nlist, cfg.train_sample, cfg.seed)
                              : build_flat(sets, dt);
    save_index(idx, out_file);
    std::cout << "indexed " << idx.count() << " descriptors from " << idx.image_ids.size()
              << " images (dtype " << dtype_name(dt) << ", nlist " << idx.nlist << ") to "
              << out_file << '\n';
    return 0;
}

int cmd_embed(const PipelineConfig& cfg, const std::string& input_dir,
              const std::string& out_file) {
    std::vector<std::string> paths = discover_images(input_dir);
    if (paths.empty()) throw NoImagesFound("no images under " + input_dir);
    Projection proj = cfg.projection_file.empty() ? identity_projection(kBaseDim)
                                                  : load_projection(cfg.projection_file);

    std::vector<std::optional<GlobalEmbedding>> slots(paths.size());
    std::atomic<size_t> skipped{0};
    parallel_for(paths.size(), cfg.threads, [&](size_t i) {
        LoadedImage li = load_and_resize(paths[i], cfg.min_edge);
        if (!li.ok) {
            skipped.fetch_add(1);
            return;
        }
        slots[i] = embed(li.img, proj, li.id);
    });

    EmbeddingStore store;
    for (auto& s : slots) {
        if (!s) continue;
        store.ids.push_back(s->image_id);
        store.rows.insert(store.rows.end(), s->v.begin(), s->v.end());
    }
    save_embeddings(store, out_file);
    std::cout << "embedded " << store.size() << " images to " << out_file;
    if (skipped > 0) std::cout << " (" << skipped.load() << " files skipped)";
    std::cout << '\n';
    return skipped > 0 ? 1 : 0;
}

int cmd_train(const PipelineConfig& cfg, const std::string& input_dir,
              const std::string& labels_file, const std::string& out_file) {
    std::vector<std::string> paths = discover_images(input_dir);
    if (paths.empty()) throw NoImagesFound("no images under " + input_dir);

    // group labels: image id -> source id; unlabeled images are their own source
    std::map<std::string, std::string> labels;
    if (!labels_file.empty()) {
        GroundTruth gt = load_ground_truth(labels_file);
        for (const auto& [q, r] : gt.pairs) labels[q] = r;
    }

    std::vector<std::optional<std::pair<std::string, std::vector<float>>>> slots(paths.size());
    std::atomic<size_t> skipped{0};
    parallel_for(paths.size(), cfg.threads, [&](size_t i) {
        LoadedImage li = load_and_resize(paths[i], cfg.min_edge);
        if (!li.ok) {
            skipped.fetch_add(1);
            return;
        }
        auto it = labels.find(li.id);
        std::string source = it != labels.end() ? it->second : li.id;
        slots[i] = std::make_pair(source, baseline_embed(li.img));
    });

    std::vector<float> feats;
    std::vector<std::string> ids;
    for (auto& s : slots) {
        if (!s) continue;
        ids.push_back(s->first);
        feats.insert(feats.end(), s->second.begin(), s->second.end());
    }

    TrainResult res = train_projection(feats, kBaseDim, ids, cfg.train);
    for (size_t e = 0; e < res.epoch_loss.size(); ++e) {
        if (e == 0)
            std::cout << "initial mean loss " << res.epoch_loss[0] << '\n';
        else
            std::cout << "epoch " << e << " mean loss " << res.epoch_loss[e] << '\n';
    }
    save_projection(res.projection, out_file);
    std::cout << "projection written to " << out_file << '\n';
    return skipped > 0 ? 1 : 0;
}

// --- detect-overlay ------------------------------------------------------------------

int cmd_detect_overlay(const PipelineConfig& cfg, const std::string& input_dir,
                       const std::string& out_csv) {
    std::vector<std::string> paths = discover_images(input_dir);
    if (paths.empty()) throw NoImagesFound("no images under " + input_dir);

    struct Row {
        std::string id;
        CropBox box;
    };
    std::vector<std::optional<Row>> slots(paths.size());
    std::atomic<size_t> skipped{0};
    parallel_for(paths.size(), cfg.threads, [&](size_t i) {
        LoadedImage li = load_and_resize(paths[i], cfg.min_edge);
        if (!li.ok) {
            skipped.fetch_add(1);
            return;
        }
        std::optional<CropBox> det =
            detect_pasted_region(imaging::to_grayscale(li.img), cfg.detector);
        if (!det) return;
        // report in original-image coordinates
        ImageBuf raw = imaging::load_image(paths[i]);
        double sx = static_cast<double>(raw.width) / li.img.width;
        double sy = static_cast<double>(raw.height) / li.img.height;
        CropBox box{static_cast<int>(std::lround(det->x * sx)),
                    static_cast<int>(std::lround(det->y * sy)),
                    static_cast<int>(std::lround(det->w * sx)),
                    static_cast<int>(std::lround(det->h * sy))};
        box.w = std::max(1, std::min(box.w, raw.width - box.x));
        box.h = std::max(1, std::min(box.h, raw.height - box.y));
        slots[i] = Row{li.id, box};
    });

    std::ofstream f(out_csv);
    if (!f) throw IoFailure("cannot open for write: " + out_csv);
    f << "image_id,x,y,w,h\n";
    size_t found = 0;
    for (const auto& s : slots) {
        if (!s) continue;
        f << csv_escape(s->id) << ',' << s->box.x << ',' << s->box.y << ',' << s->box.w << ','
          << s->box.h << '\n';
        ++found;
    }
    if (!f) throw IoFailure("write failed: " + out_csv);
    std::cout << "detections: " << found << " / " << paths.size() << " images\n";
    return skipped > 0 ? 1 : 0;
}

// --- augment -------------------------------------------------------------------------

namespace {

std::string zero_pad(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%06d", prefix, i);
    return buf;
}

constexpr AttackKind kAttackCycle[] = {
    AttackKind::Crop,        AttackKind::Rotate,   AttackKind::FlipH,
    AttackKind::GaussianBlur, AttackKind::JpegRecompress, AttackKind::OverlayPaste,
    AttackKind::Brightness,  AttackKind::Contrast, AttackKind::Resize,
    AttackKind::Pixelate,    AttackKind::Pad,      AttackKind::Grayscale,
};

} // namespace

int cmd_augment(const PipelineConfig& cfg, const std::string& refs_dir,
                const std::string& out_dir, const AugmentOptions& opt) {
    fs::create_directories(out_dir);
    fs::path queries_dir = fs::path(out_dir) / "queries";

    Rng rng{cfg.seed};

    if (opt.synth_refs > 0) {
        fs::path refs_out = refs_dir.empty() ? fs::path(out_dir) / "refs" : fs::path(refs_dir);
        fs::create_directories(refs_out);
        for (int i = 0; i < opt.synth_refs; ++i) {
            uint64_t s = rng.next_u64();
            Rng dims{s};
            int w = static_cast<int>(dims.uniform_int(320, 640));
            int h = static_cast<int>(dims.uniform_int(320, 640));
            ImageBuf img = imaging::synth_texture(w, h, dims.next_u64());
            imaging::save_png(img, (refs_out / (zero_pad("ref_", i) + ".png")).string());
        }
        std::cout << "wrote " << opt.synth_refs << " synthetic references to " << refs_out
                  << '\n';
    }

    std::vector<imaging::ManifestRow> rows;
    if (!opt.manifest.empty()) {
        rows = imaging::load_attack_manifest(opt.manifest);
    } else if (opt.generate > 0) {
        std::string source_dir =
            refs_dir.empty() ? (fs::path(out_dir) / "refs").string() : refs_dir;
        std::vector<std::string> refs = discover_images(source_dir);
        if (refs.empty()) throw NoImagesFound("no reference images under " + source_dir);
        for (int i = 0; i < opt.generate; ++i) {
            imaging::ManifestRow row;
            row.query_id = zero_pad("q_", i);
            size_t ref_idx = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(refs.size()) - 1));
            row.source_id = image_id_from_path(refs[ref_idx]);
            row.spec.kind = kAttackCycle[static_cast<size_t>(i) % std::size(kAttackCycle)];
            row.spec.seed = rng.next_u64();
            if (row.spec.kind == AttackKind::Rotate) {
                Rng r{row.spec.seed};
                row.spec.params["degrees"] = r.uniform_real(-30.0, 30.0);
            }
            rows.push_back(std::move(row));
        }
    }

    GroundTruth gt;
    std::vector<std::pair<std::string, CropBox>> overlay_boxes;
    if (!rows.empty()) {
        fs::create_directories(queries_dir);
        // resolve source ids to paths once
        std::string source_dir =
            refs_dir.empty() ? (fs::path(out_dir) / "refs").string() : refs_dir;
        std::map<std::string, std::string> by_id;
        for (const std::string& p : discover_images(source_dir)) by_id[image_id_from_path(p)] = p;

        std::vector<std::optional<std::pair<std::string, CropBox>>> box_slots(rows.size());
        std::atomic<size_t> failures{0};
        parallel_for(rows.size(), cfg.threads, [&](size_t i) {
            const imaging::ManifestRow& row = rows[i];
            auto it = by_id.find(row.source_id);
            if (it == by_id.end()) {
                std::cerr << "warning: unknown source id " << row.source_id << '\n';
                failures.fetch_add(1);
                return;
            }
            ImageBuf src = imaging::load_image(it->second);
            auto [attacked, rec] = imaging::apply_attack(src, row.spec);
            imaging::save_png(attacked, (queries_dir / (row.query_id + ".png")).string());
            if (rec) box_slots[i] = std::make_pair(row.query_id, rec->box);
        });
        for (size_t i = 0; i < rows.size(); ++i) {
            gt.pairs.emplace(rows[i].query_id, rows[i].source_id);
            if (box_slots[i]) overlay_boxes.push_back(*box_slots[i]);
        }
        if (failures > 0) throw NoImagesFound("manifest references unknown source ids");
    }

    if (opt.distractors > 0) {
        fs::create_directories(queries_dir);
        for (int i = 0; i < opt.distractors; ++i) {
            uint64_t s = rng.next_u64() ^ 0xd15712ac7015ULL;
            Rng dims{s};
            int w = static_cast<int>(dims.uniform_int(320, 640));
            int h = static_cast<int>(dims.uniform_int(320, 640));
            ImageBuf img = imaging::synth_texture(w, h, dims.next_u64());
            imaging::save_png(img, (queries_dir / (zero_pad("d_", i) + ".png")).string());
        }
        std::cout << "wrote " << opt.distractors << " distractor queries\n";
    }

    if (!rows.empty()) {
        write_ground_truth(gt, (fs::path(out_dir) / "ground_truth.csv").string());
        imaging::write_attack_manifest(rows, (fs::path(out_dir) / "manifest.csv").string());
        std::ofstream f((fs::path(out_dir) / "overlay_boxes.csv").string());
        if (!f) throw IoFailure("cannot write overlay boxes");
        f << "image_id,x,y,w,h\n";
        for (const auto& [id, box] : overlay_boxes)
            f << csv_escape(id) << ',' << box.x << ',' << box.y << ',' << box.w << ',' << box.h
              << '\n';
        std::cout << "wrote " << rows.size() << " attacked queries, " << overlay_boxes.size()
                  << " overlay boxes\n";
    }
    return 0;
}

// --- run -----------------------------------------------------------------------------

namespace {

// per-variant descriptor sets with lazy flip extraction and score memo
struct VariantScorer {
    GrayImage gray;
    std::vector<SiftDescriptor> orig;
    std::optional<std::vector<SiftDescriptor>> flipped;
    std::map<std::string, int> memo;

    int score(const std::string& ref_id, const std::vector<SiftDescriptor>& ref,
              float ratio, const SiftParams& p) {
        auto it = memo.find(ref_id);
        if (it != memo.end()) return it->second;
        if (!flipped) flipped = extract(imaging::flip_horizontal(gray), p).descriptors;
        int s = std::max(pairwise_match_count(orig, ref, ratio),
                         pairwise_match_count(*flipped, ref, ratio));
        memo[ref_id] = s;
        return s;
    }
};

CropBox scale_box(const CropBox& box, double sx, double sy, int w, int h) {
    CropBox out{static_cast<int>(std::lround(box.x * sx)),
                static_cast<int>(std::lround(box.y * sy)),
                static_cast<int>(std::lround(box.w * sx)),
                static_cast<int>(std::lround(box.h * sy))};
    out.x = std::clamp(out.x, 0, w - 1);
    out.y = std::clamp(out.y, 0, h - 1);
    out.w = std::clamp(out.w, 1, w - out.x);
    out.h = std::clamp(out.h, 1, h - out.y);
    return out;
}

} // namespace

int cmd_run(const PipelineConfig& cfg) {
    if (cfg.index_file.empty() || !fs::exists(cfg.index_file))
        throw MissingIndex("index file not found: " + cfg.index_file);
    DescriptorIndex index = load_index(cfg.index_file);

    EmbeddingStore store;
    Projection proj;
    if (cfg.branch_global) {
        if (cfg.embedding_file.empty() || !fs::exists(cfg.embedding_file))
            throw MissingEmbeddings("embedding file not found: " + cfg.embedding_file);
        store = load_embeddings(cfg.embedding_file);
        proj = cfg.projection_file.empty() ? identity_projection(kBaseDim)
                                           : load_projection(cfg.projection_file);
    }

    std::map<std::string, CropBox> external_boxes;
    if (!cfg.crop_boxes_file.empty()) external_boxes = load_crop_boxes(cfg.crop_boxes_file);

    fs::create_directories(cfg.output_dir);
    std::string submission_path = (fs::path(cfg.output_dir) / "submission.csv").string();
    save_config(cfg, (fs::path(cfg.output_dir) / "config_used.json").string());

    std::vector<std::string> queries = discover_images(cfg.query_dir);
    if (queries.empty()) {
        write_submission({}, submission_path);
        std::cout << "no queries found; wrote empty submission\n";
        return 0;
    }

    // reference descriptors reconstructed once from the index blob
    std::vector<std::vector<SiftDescriptor>> ref_desc(index.image_ids.size());
    std::map<std::string, uint32_t> ref_ord;
    for (uint32_t i = 0; i < index.image_ids.size(); ++i) {
        ref_desc[i] = image_descriptors(index, i);
        ref_ord[index.image_ids[i]] = i;
    }

    std::vector<std::vector<ScoredPair>> per_query(queries.size());
    std::atomic<size_t> skipped{0};
    parallel_for(queries.size(), cfg.threads, [&](size_t qi) {
        LoadedImage li = load_and_resize(queries[qi], cfg.min_edge);
        if (!li.ok) {
            skipped.fetch_add(1);
            return;
        }

        // detection + routing; the cropped branch switch disables both
        std::optional<CropBox> det;
        if (cfg.branch_cropped) {
            auto ext = external_boxes.find(li.id);
            if (ext != external_boxes.end()) {
                ImageBuf raw = imaging::load_image(queries[qi]);
                det = scale_box(ext->second, static_cast<double>(li.img.width) / raw.width,
                                static_cast<double>(li.img.height) / raw.height, li.img.width,
                                li.img.height);
            } else if (cfg.use_heuristic_detector) {
                det = detect_pasted_region(imaging::to_grayscale(li.img), cfg.detector);
            }
        }
        BranchInputs routed = route_variants(li.img, det);

        VariantScorer orig_scorer;
        orig_scorer.gray = imaging::to_grayscale(routed.local[0]);
        orig_scorer.orig = extract(orig_scorer.gray, cfg.sift).descriptors;

        VariantScorer crop_scorer;
        if (routed.has_crop) {
            crop_scorer.gray = imaging::to_grayscale(routed.local[1]);
            crop_scorer.orig = extract(crop_scorer.gray, cfg.sift).descriptors;
        }
        VariantScorer& global_scorer = routed.has_crop ? crop_scorer : orig_scorer;

        std::vector<std::string> global_cands;
        if (cfg.branch_global) {
            GlobalEmbedding ge = embed(routed.global, proj, li.id);
            for (const GlobalHit& h :
                 topk_global(store, ge.v, static_cast<size_t>(cfg.matcher.global_k),
                             cfg.global_similarity_threshold))
                global_cands.push_back(h.id);
        }

        auto recall_ids = [&](const std::vector<SiftDescriptor>& desc) {
            std::vector<std::string> ids;
            if (desc.empty()) return ids;
            auto hits = search(index, desc, 1, cfg.nprobe, 1);
            for (const RecallCandidate& c : local_recall(hits, index, cfg.matcher))
                ids.push_back(c.id);
            return ids;
        };
        std::vector<std::string> local_orig_cands = recall_ids(orig_scorer.orig);
        std::vector<std::string> local_crop_cands;
        if (routed.has_crop) local_crop_cands = recall_ids(crop_scorer.orig);

        auto make_scorer = [&](VariantScorer* vs) -> BranchScorer {
            return [vs, &cfg, &ref_desc, &ref_ord](const std::string& ref_id) {
                return vs->score(ref_id, ref_desc[ref_ord.at(ref_id)],
                                 cfg.matcher.ratio_threshold, cfg.sift);
            };
        };
        per_query[qi] = fuse(li.id, global_cands, local_orig_cands, local_crop_cands,
                             make_scorer(&global_scorer), make_scorer(&orig_scorer),
                             make_scorer(&crop_scorer));
    });

    std::vector<ScoredPair> submission;
    for (auto& rows : per_query)
        for (ScoredPair& sp : rows) submission.push_back(std::move(sp));
    write_submission(submission, submission_path);

    // per-branch breakdown, so fused numbers can be audited offline
    {
        std::ofstream bf(fs::path(cfg.output_dir) / "branch_scores.csv");
        bf << "query_id,reference_id,global,local_orig,local_crop,fused\n";
        for (const ScoredPair& sp : submission)
            bf << csv_escape(sp.query_id) << ',' << csv_escape(sp.reference_id) << ','
               << sp.global_score << ',' << sp.local_orig_score << ',' << sp.local_crop_score
               << ',' << sp.fused << '\n';
    }
    std::cout << "wrote " << submission.size() << " scored pairs to " << submission_path << '\n';

    if (!cfg.ground_truth_file.empty()) {
        GroundTruth gt = load_ground_truth(cfg.ground_truth_file);
        PrCurve curve = micro_ap(submission, gt);
        write_pr_csv(curve, (fs::path(cfg.output_dir) / "pr.csv").string());
        std::cout << "micro_ap=" << curve.micro_ap << '\n';
    }
    return skipped > 0 ? 1 : 0;
}

int cmd_eval(const std::string& submission_csv, const std::string& gt_csv,
             const std::string& out_pr_csv) {
    std::vector<SubmissionRow> rows = load_submission(submission_csv);
    GroundTruth gt = load_ground_truth(gt_csv);
    PrCurve curve = micro_ap(rows, gt);
    if (!out_pr_csv.empty()) write_pr_csv(curve, out_pr_csv);
    std::cout << "micro_ap=" << curve.micro_ap << '\n';
    return 0;
}

} // namespace copydet
