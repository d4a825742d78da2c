#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "copydet/globalsim.hpp"
#include "copydet/matcher.hpp"
#include "copydet/preprocess.hpp"
#include "copydet/sift.hpp"

namespace copydet {

struct PipelineConfig {
    std::string corpus_dir;
    std::string query_dir;
    std::string output_dir = "out";
    std::string index_file;
    std::string embedding_file;
    std::string projection_file;
    std::string features_file;
    std::string ground_truth_file;
    std::string crop_boxes_file;
    std::string attack_manifest;

    int min_edge = 300;
    int threads = 0; // 0 = hardware concurrency
    uint64_t seed = 1;

    std::string dtype = "u8";
    uint32_t nlist = 0; // 0 = flat
    uint32_t nprobe = 8;
    uint64_t train_sample = 50000;

    SiftParams sift;
    MatcherConfig matcher;
    DetectorConfig detector;
    TrainConfig train;

    bool use_heuristic_detector = true;
    bool branch_global = true;
    bool branch_cropped = true;
    float global_similarity_threshold = 0.0f;
};

nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);
void save_config(const PipelineConfig& cfg, const std::string& path);

// recursive, extensions {png, jpg, jpeg}, lexicographically sorted
std::vector<std::string> discover_images(const std::string& dir);
std::string image_id_from_path(const std::string& path);

struct AugmentOptions {
    std::string manifest;  // replay an existing manifest
    int generate = 0;      // or synthesize this many attacked queries
    int distractors = 0;   // plus unrelated procedural queries
    int synth_refs = 0;    // and/or write a procedural reference corpus
};

int cmd_extract(const PipelineConfig& cfg, const std::string& input_dir,
                const std::string& out_file);
int cmd_index(const PipelineConfig& cfg, const std::string& features_file,
              const std::string& out_file);
int cmd_embed(const PipelineConfig& cfg, const std::string& input_dir,
              const std::string& out_file);
int cmd_train(const PipelineConfig& cfg, const std::string& input_dir,
              const std::string& labels_file, const std::string& out_file);
int cmd_detect_overlay(const PipelineConfig& cfg, const std::string& input_dir,
                       const std::string& out_csv);
int cmd_augment(const PipelineConfig& cfg, const std::string& refs_dir,
                const std::string& out_dir, const AugmentOptions& opt);
int cmd_run(const PipelineConfig& cfg);
int cmd_eval(const std::string& submission_csv, const std::string& gt_csv,
             const std::string& out_pr_csv);

} // namespace copydet
