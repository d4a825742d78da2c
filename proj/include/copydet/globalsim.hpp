#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "copydet/image.hpp"

namespace copydet {

constexpr size_t kGlobalDim = 256;
constexpr size_t kBaseDim = 512;

struct GlobalEmbedding {
    std::string image_id;
    std::vector<float> v; // kGlobalDim, L2-normalized
};

struct EmbeddingStore {
    std::vector<std::string> ids;
    std::vector<float> rows; // size() * kGlobalDim, normalized
    size_t size() const { return ids.size(); }
    const float* row(size_t i) const { return rows.data() + i * kGlobalDim; }
};

struct GlobalHit {
    std::string id;
    float similarity; // cosine
};

struct TripletBatch {
    std::vector<uint32_t> anchors, positives, negatives;
    std::vector<float> ap, an; // Euclidean distances per triple
    size_t size() const { return anchors.size(); }
};

struct XbmQueue {
    size_t capacity = 0;
    size_t dim = 0;
    std::deque<std::vector<float>> feats; // FIFO, oldest first
    std::deque<std::string> ids;
    size_t size() const { return ids.size(); }
};

struct Projection {
    size_t base_dim = kBaseDim;
    std::vector<float> m; // base_dim * kGlobalDim, row-major (input dim major)
    bool trained = false;
    float at(size_t i, size_t j) const { return m[i * kGlobalDim + j]; }
};

struct TrainConfig {
    int epochs = 20;
    float lr = 0.05f;
    float margin = 0.3f;
    size_t batch_size = 32;
    size_t xbm_capacity = 1024;
    uint64_t seed = 1;
};

struct TrainResult {
    Projection projection;
    // epoch_loss[0] is the pre-training training-set mean loss; epoch_loss[e]
    // the same measure after epoch e (fixed evaluation batching, no memory bank)
    std::vector<double> epoch_loss;
};

// 48-d mean-color thumbnail + 256-bin gray histogram + 2x2x52 HOG, each
// sub-block L2-normalized; 512 values total.
std::vector<float> baseline_embed(const ImageBuf& img);

Projection identity_projection(size_t base_dim = kBaseDim);

// project + L2-normalize; throws ZeroVector when the projected vector vanishes
std::vector<float> project_embed(const std::vector<float>& base, const Projection& p);
GlobalEmbedding embed(const ImageBuf& img, const Projection& p, const std::string& id = "");

std::vector<GlobalHit> topk_global(const EmbeddingStore& store, const std::vector<float>& q,
                                   size_t k, float threshold);

struct TripletGrad {
    float loss;
    float dap;
    float dan;
};
TripletGrad triplet_loss(float ap, float an, float margin);

// feats: n rows of `dim` values; distances Euclidean on the rows as given
TripletBatch mine_triplets(const std::vector<float>& feats, size_t dim,
                           const std::vector<std::string>& ids, float margin);

XbmQueue make_xbm(size_t capacity, size_t dim);
void xbm_push(XbmQueue& q, const std::vector<float>& batch_feats,
              const std::vector<std::string>& batch_ids);
std::vector<size_t> xbm_negatives(const XbmQueue& q, const std::string& anchor_id);

// mean triplet loss through projection + normalization + Euclidean distance,
// with optional gradient w.r.t. the projection matrix (for training and for
// finite-difference checks)
double triplet_forward_backward(const std::vector<float>& feats, size_t base_dim,
                                const std::vector<std::array<uint32_t, 3>>& triples,
                                const Projection& p, float margin,
                                std::vector<float>* grad);

TrainResult train_projection(const std::vector<float>& feats, size_t base_dim,
                             const std::vector<std::string>& ids, const TrainConfig& cfg);

void save_embeddings(const EmbeddingStore& store, const std::string& path);
EmbeddingStore load_embeddings(const std::string& path);

void save_projection(const Projection& p, const std::string& path);
Projection load_projection(const std::string& path);

} // namespace copydet
