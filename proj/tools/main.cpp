#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "copydet/errors.hpp"
#include "copydet/pipeline.hpp"

using namespace copydet;

int main(int argc, char** argv) {
    CLI::App app{"copydet: dual global/local image copy-detection pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    int threads = -1;
    int64_t seed = -1;
    app.add_option("--config", config_path, "pipeline config JSON file");
    app.add_option("--threads", threads, "worker threads (0 = all cores)");
    app.add_option("--seed", seed, "RNG seed");

    std::string input, output, labels, projection, features;
    std::string queries_dir, index_file, embedding_file, gt_file, crop_boxes;
    AugmentOptions aug;
    std::string submission;

    CLI::App* c_extract = app.add_subcommand("extract", "extract SIFT features from a directory");
    c_extract->add_option("--input", input, "image directory")->required();
    c_extract->add_option("--output", output, "feature archive path")->required();

    CLI::App* c_index = app.add_subcommand("index", "build a descriptor index from features");
    c_index->add_option("--features", features, "feature archive path")->required();
    c_index->add_option("--output", output, "index file path")->required();

    CLI::App* c_embed = app.add_subcommand("embed", "compute global embeddings for a directory");
    c_embed->add_option("--input", input, "image directory")->required();
    c_embed->add_option("--output", output, "embedding file path")->required();
    c_embed->add_option("--projection", projection, "projection file (identity when absent)");

    CLI::App* c_train = app.add_subcommand("train", "train the global projection");
    c_train->add_option("--input", input, "image directory")->required();
    c_train->add_option("--labels", labels, "CSV image_id,source_id grouping file");
    c_train->add_option("--output", output, "projection file path")->required();

    CLI::App* c_detect = app.add_subcommand("detect-overlay", "detect pasted regions");
    c_detect->add_option("--input", input, "image directory")->required();
    c_detect->add_option("--output", output, "crop-box CSV path")->required();

    CLI::App* c_augment = app.add_subcommand("augment", "generate attacked queries");
    c_augment->add_option("--refs", input, "reference image directory");
    c_augment->add_option("--output", output, "output directory")->required();
    c_augment->add_option("--manifest", aug.manifest, "attack manifest to replay");
    c_augment->add_option("--generate", aug.generate, "number of attacked queries to synthesize");
    c_augment->add_option("--distractors", aug.distractors, "number of distractor queries");
    c_augment->add_option("--synth-refs", aug.synth_refs, "number of procedural references");

    CLI::App* c_run = app.add_subcommand("run", "full query pipeline");
    c_run->add_option("--queries", queries_dir, "query image directory");
    c_run->add_option("--index", index_file, "descriptor index file");
    c_run->add_option("--embeddings", embedding_file, "embedding store file");
    c_run->add_option("--projection", projection, "projection file");
    c_run->add_option("--ground-truth", gt_file, "ground truth CSV for evaluation");
    c_run->add_option("--crop-boxes", crop_boxes, "external crop-box CSV");
    c_run->add_option("--output", output, "output directory");

    CLI::App* c_eval = app.add_subcommand("eval", "score a submission against ground truth");
    c_eval->add_option("--submission", submission, "submission CSV")->required();
    c_eval->add_option("--ground-truth", gt_file, "ground truth CSV")->required();
    c_eval->add_option("--output", output, "PR curve CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        if (threads >= 0) cfg.threads = threads;
        if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);

        if (c_extract->parsed()) return cmd_extract(cfg, input, output);
        if (c_index->parsed()) return cmd_index(cfg, features, output);
        if (c_embed->parsed()) {
            if (!projection.empty()) cfg.projection_file = projection;
            return cmd_embed(cfg, input, output);
        }
        if (c_train->parsed()) return cmd_train(cfg, input, labels, output);
        if (c_detect->parsed()) return cmd_detect_overlay(cfg, input, output);
        if (c_augment->parsed()) return cmd_augment(cfg, input, output, aug);
        if (c_run->parsed()) {
            if (!queries_dir.empty()) cfg.query_dir = queries_dir;
            if (!index_file.empty()) cfg.index_file = index_file;
            if (!embedding_file.empty()) cfg.embedding_file = embedding_file;
            if (!projection.empty()) cfg.projection_file = projection;
            if (!gt_file.empty()) cfg.ground_truth_file = gt_file;
            if (!crop_boxes.empty()) cfg.crop_boxes_file = crop_boxes;
            if (!output.empty()) cfg.output_dir = output;
            return cmd_run(cfg);
        }
        if (c_eval->parsed()) return cmd_eval(submission, gt_file, output);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
