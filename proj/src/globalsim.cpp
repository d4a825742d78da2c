#include "copydet/globalsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>

#include "copydet/binio.hpp"
#include "copydet/errors.hpp"
#include "copydet/rng.hpp"

namespace copydet {

static constexpr char kEmbMagic[4] = {'G', 'E', 'M', '1'};
static constexpr char kProjMagic[4] = {'P', 'R', 'J', '1'};
static constexpr uint32_t kEmbVersion = 1;
static constexpr uint32_t kProjVersion = 1;

static void normalize_block(float* v, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += static_cast<double>(v[i]) * v[i];
    if (s <= 0.0) return; // all-zero block stays zero
    float inv = static_cast<float>(1.0 / std::sqrt(s));
    for (size_t i = 0; i < n; ++i) v[i] *= inv;
}

std::vector<float> baseline_embed(const ImageBuf& img) {
    if (img.width < 8 || img.height < 8)
        throw DegenerateImage("baseline_embed needs min edge >= 8");
    std::vector<float> out(kBaseDim, 0.0f);

    // 4x4x3 mean-color thumbnail
    for (int cy = 0; cy < 4; ++cy) {
        int y0 = cy * img.height / 4, y1 = (cy + 1) * img.height / 4;
        for (int cx = 0; cx < 4; ++cx) {
            int x0 = cx * img.width / 4, x1 = (cx + 1) * img.width / 4;
            double sum[3] = {0, 0, 0};
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    for (int c = 0; c < 3; ++c)
                        sum[c] += img.at(x, y, std::min(c, img.channels - 1));
            double npx = static_cast<double>(y1 - y0) * (x1 - x0) * 255.0;
            for (int c = 0; c < 3; ++c)
                out[static_cast<size_t>(cy * 4 + cx) * 3 + c] = static_cast<float>(sum[c] / npx);
        }
    }
    normalize_block(out.data(), 48);

    GrayImage g = imaging::to_grayscale(img);

    // 256-bin gray histogram
    float* hist = out.data() + 48;
    for (float v : g.data) {
        int bin = std::min(255, static_cast<int>(v * 256.0f));
        hist[bin] += 1.0f;
    }
    normalize_block(hist, 256);

    // 2x2 spatial cells x 52 orientation bins, magnitude-weighted
    float* hog = out.data() + 48 + 256;
    constexpr double kTwoPi = 6.283185307179586;
    for (int y = 1; y < g.height - 1; ++y) {
        int cy = std::min(1, y * 2 / g.height);
        for (int x = 1; x < g.width - 1; ++x) {
            float gx = g.at(x + 1, y) - g.at(x - 1, y);
            float gy = g.at(x, y + 1) - g.at(x, y - 1);
            float mag = std::sqrt(gx * gx + gy * gy);
            if (mag <= 0.0f) continue;
            double ang = std::atan2(gy, gx);
            if (ang < 0) ang += kTwoPi;
            int bin = std::min(51, static_cast<int>(ang / kTwoPi * 52.0));
            int cx = std::min(1, x * 2 / g.width);
            hog[(cy * 2 + cx) * 52 + bin] += mag;
        }
    }
    normalize_block(hog, 208);
    return out;
}

Projection identity_projection(size_t base_dim) {
    if (base_dim == 0) throw ParamOutOfRange("projection base dim must be positive");
    Projection p;
    p.base_dim = base_dim;
    p.m.assign(base_dim * kGlobalDim, 0.0f);
    for (size_t j = 0; j < std::min(base_dim, kGlobalDim); ++j) p.m[j * kGlobalDim + j] = 1.0f;
    return p;
}

std::vector<float> project_embed(const std::vector<float>& base, const Projection& p) {
    if (base.size() != p.base_dim) throw DimensionMismatch("base feature dim mismatch");
    std::vector<float> u(kGlobalDim, 0.0f);
    for (size_t i = 0; i < p.base_dim; ++i) {
        float f = base[i];
        if (f == 0.0f) continue;
        const float* row = p.m.data() + i * kGlobalDim;
        for (size_t j = 0; j < kGlobalDim; ++j) u[j] += f * row[j];
    }
    double s = 0.0;
    for (float v : u) s += static_cast<double>(v) * v;
    if (s <= 0.0) throw ZeroVector("projected embedding is zero");
    float inv = static_cast<float>(1.0 / std::sqrt(s));
    for (float& v : u) v *= inv;
    return u;
}

GlobalEmbedding embed(const ImageBuf& img, const Projection& p, const std::string& id) {
    return {id, project_embed(baseline_embed(img), p)};
}

std::vector<GlobalHit> topk_global(const EmbeddingStore& store, const std::vector<float>& q,
                                   size_t k, float threshold) {
    if (store.size() == 0) throw EmptyStore("empty embedding store");
    if (q.size() != kGlobalDim) throw DimensionMismatch("query embedding dim");
    std::vector<size_t> order(store.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<float> sims(store.size());
    for (size_t i = 0; i < store.size(); ++i) {
        const float* r = store.row(i);
        double dot = 0.0;
        for (size_t j = 0; j < kGlobalDim; ++j) dot += static_cast<double>(q[j]) * r[j];
        sims[i] = static_cast<float>(dot);
    }
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return store.ids[a] < store.ids[b];
    });
    std::vector<GlobalHit> out;
    for (size_t i : order) {
        if (out.size() >= k) break;
        if (sims[i] < threshold) break; // order is descending
        out.push_back({store.ids[i], sims[i]});
    }
    return out;
}

TripletGrad triplet_loss(float ap, float an, float margin) {
    if (ap < 0.0f || an < 0.0f) throw NegativeDistance("triplet distances must be >= 0");
    if (margin <= 0.0f) throw ParamOutOfRange("margin must be > 0");
    float v = ap - an + margin;
    if (v >= 0.0f) return {v, 1.0f, -1.0f}; // boundary uses the active branch
    return {0.0f, 0.0f, 0.0f};
}

static double row_dist(const float* a, const float* b, size_t dim) {
    double s = 0.0;
    for (size_t j = 0; j < dim; ++j) {
        double d = static_cast<double>(a[j]) - b[j];
        s += d * d;
    }
    return std::sqrt(s);
}

TripletBatch mine_triplets(const std::vector<float>& feats, size_t dim,
                           const std::vector<std::string>& ids, float margin) {
    size_t n = ids.size();
    if (dim == 0 || feats.size() != n * dim) throw DimensionMismatch("feature matrix shape");
    TripletBatch out;
    std::vector<uint32_t> negs;
    for (uint32_t a = 0; a < n; ++a) {
        negs.clear();
        for (uint32_t i = 0; i < n; ++i)
            if (ids[i] != ids[a]) negs.push_back(i);
        if (negs.empty()) continue;
        for (uint32_t p = 0; p < n; ++p) {
            if (p == a || ids[p] != ids[a]) continue;
            double ap = row_dist(feats.data() + a * dim, feats.data() + p * dim, dim);
            uint32_t hardest = negs[0];
            double hardest_d = row_dist(feats.data() + a * dim, feats.data() + hardest * dim, dim);
            std::vector<std::pair<uint32_t, double>> semi;
            for (uint32_t nn : negs) {
                double an = row_dist(feats.data() + a * dim, feats.data() + nn * dim, dim);
                if (an < hardest_d) {
                    hardest_d = an;
                    hardest = nn;
                }
                if (ap < an && an < ap + margin) semi.emplace_back(nn, an);
            }
            std::vector<std::pair<uint32_t, double>> chosen;
            chosen.emplace_back(hardest, hardest_d);
            for (auto& s : semi)
                if (s.first != hardest) chosen.push_back(s);
            std::sort(chosen.begin(), chosen.end(),
                      [](const auto& x, const auto& y) { return x.first < y.first; });
            for (auto& c : chosen) {
                out.anchors.push_back(a);
                out.positives.push_back(p);
                out.negatives.push_back(c.first);
                out.ap.push_back(static_cast<float>(ap));
                out.an.push_back(static_cast<float>(c.second));
            }
        }
    }
    if (out.size() == 0) throw NoValidTriplets("no anchor-positive pair with a negative");
    return out;
}

XbmQueue make_xbm(size_t capacity, size_t dim) {
    if (capacity == 0 || dim == 0) throw ParamOutOfRange("xbm capacity/dim must be >= 1");
    XbmQueue q;
    q.capacity = capacity;
    q.dim = dim;
    return q;
}

void xbm_push(XbmQueue& q, const std::vector<float>& batch_feats,
              const std::vector<std::string>& batch_ids) {
    size_t b = batch_ids.size();
    if (batch_feats.size() != b * q.dim) throw DimensionMismatch("xbm batch shape");
    if (b > q.capacity) throw CapacityTooSmall("batch exceeds xbm capacity");
    for (size_t i = 0; i < b; ++i) {
        q.feats.emplace_back(batch_feats.begin() + static_cast<long>(i * q.dim),
                             batch_feats.begin() + static_cast<long>((i + 1) * q.dim));
        q.ids.push_back(batch_ids[i]);
    }
    while (q.ids.size() > q.capacity) {
        q.feats.pop_front();
        q.ids.pop_front();
    }
}

std::vector<size_t> xbm_negatives(const XbmQueue& q, const std::string& anchor_id) {
    std::vector<size_t> out;
    for (size_t i = 0; i < q.ids.size(); ++i)
        if (q.ids[i] != anchor_id) out.push_back(i);
    return out;
}

// --- training ------------------------------------------------------------------

namespace {

// projected + normalized rows, kept in double for gradient accuracy
struct Forward {
    std::vector<double> u, z;
    std::vector<double> norm;
    size_t rows = 0;
};

Forward forward_rows(const std::vector<float>& feats, size_t base_dim,
                     const std::vector<uint32_t>& rows, const Projection& p) {
    Forward fw;
    fw.rows = rows.size();
    fw.u.assign(fw.rows * kGlobalDim, 0.0);
    fw.z.assign(fw.rows * kGlobalDim, 0.0);
    fw.norm.assign(fw.rows, 0.0);
    for (size_t r = 0; r < rows.size(); ++r) {
        const float* f = feats.data() + static_cast<size_t>(rows[r]) * base_dim;
        double* u = fw.u.data() + r * kGlobalDim;
        for (size_t i = 0; i < base_dim; ++i) {
            double fi = f[i];
            if (fi == 0.0) continue;
            const float* prow = p.m.data() + i * kGlobalDim;
            for (size_t j = 0; j < kGlobalDim; ++j) u[j] += fi * prow[j];
        }
        double s = 0.0;
        for (size_t j = 0; j < kGlobalDim; ++j) s += u[j] * u[j];
        if (s <= 0.0) throw ZeroVector("projection collapsed a training row to zero");
        double nrm = std::sqrt(s);
        fw.norm[r] = nrm;
        double* z = fw.z.data() + r * kGlobalDim;
        for (size_t j = 0; j < kGlobalDim; ++j) z[j] = u[j] / nrm;
    }
    return fw;
}

double dist_rows(const double* a, const double* b) {
    double s = 0.0;
    for (size_t j = 0; j < kGlobalDim; ++j) {
        double d = a[j] - b[j];
        s += d * d;
    }
    return std::sqrt(s);
}

// accumulate d(dist)/d(za) * w into ga (and the mirror into gb when given)
void add_dist_grad(const double* za, const double* zb, double dist, double w,
                   double* ga, double* gb) {
    if (dist <= 0.0) return;
    for (size_t j = 0; j < kGlobalDim; ++j) {
        double g = (za[j] - zb[j]) / dist * w;
        ga[j] += g;
        if (gb) gb[j] -= g;
    }
}

} // namespace

double triplet_forward_backward(const std::vector<float>& feats, size_t base_dim,
                                const std::vector<std::array<uint32_t, 3>>& triples,
                                const Projection& p, float margin,
                                std::vector<float>* grad) {
    size_t n = feats.size() / base_dim;
    if (feats.size() != n * base_dim) throw DimensionMismatch("feature matrix shape");
    if (triples.empty()) return 0.0;
    std::vector<uint32_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0u);
    Forward fw = forward_rows(feats, base_dim, rows, p);

    double inv_m = 1.0 / static_cast<double>(triples.size());
    std::vector<double> dz(n * kGlobalDim, 0.0);
    double loss_sum = 0.0;
    for (const auto& t : triples) {
        const double* za = fw.z.data() + t[0] * kGlobalDim;
        const double* zp = fw.z.data() + t[1] * kGlobalDim;
        const double* zn = fw.z.data() + t[2] * kGlobalDim;
        double ap = dist_rows(za, zp);
        double an = dist_rows(za, zn);
        double v = ap - an + static_cast<double>(margin);
        if (v < 0.0) continue;
        loss_sum += v;
        if (grad) {
            add_dist_grad(za, zp, ap, inv_m, dz.data() + t[0] * kGlobalDim,
                          dz.data() + t[1] * kGlobalDim);
            add_dist_grad(za, zn, an, -inv_m, dz.data() + t[0] * kGlobalDim,
                          dz.data() + t[2] * kGlobalDim);
        }
    }
    if (grad) {
        grad->assign(base_dim * kGlobalDim, 0.0f);
        for (size_t r = 0; r < n; ++r) {
            const double* z = fw.z.data() + r * kGlobalDim;
            const double* dzr = dz.data() + r * kGlobalDim;
            double zdot = 0.0;
            for (size_t j = 0; j < kGlobalDim; ++j) zdot += z[j] * dzr[j];
            double du[kGlobalDim];
            bool any = false;
            for (size_t j = 0; j < kGlobalDim; ++j) {
                du[j] = (dzr[j] - z[j] * zdot) / fw.norm[r];
                any = any || du[j] != 0.0;
            }
            if (!any) continue;
            const float* f = feats.data() + r * base_dim;
            for (size_t i = 0; i < base_dim; ++i) {
                double fi = f[i];
                if (fi == 0.0) continue;
                float* gr = grad->data() + i * kGlobalDim;
                for (size_t j = 0; j < kGlobalDim; ++j)
                    gr[j] += static_cast<float>(fi * du[j]);
            }
        }
    }
    return loss_sum * inv_m;
}

namespace {

// training-set mean mined-triplet loss at the current projection: fixed
// identity-order batching, no memory bank, so the measure is a pure function
// of (features, ids, projection)
double eval_mean_loss(const std::vector<float>& feats, size_t base_dim,
                      const std::vector<std::string>& ids, const Projection& p,
                      const TrainConfig& cfg) {
    size_t n = ids.size();
    double loss_sum = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < n; start += cfg.batch_size) {
        size_t b = std::min(cfg.batch_size, n - start);
        std::vector<uint32_t> rows(b);
        std::iota(rows.begin(), rows.end(), static_cast<uint32_t>(start));
        Forward fw = forward_rows(feats, base_dim, rows, p);
        std::vector<float> zf(fw.z.begin(), fw.z.end());
        std::vector<std::string> bids(ids.begin() + static_cast<long>(start),
                                      ids.begin() + static_cast<long>(start + b));
        try {
            TripletBatch tb = mine_triplets(zf, kGlobalDim, bids, cfg.margin);
            for (size_t t = 0; t < tb.size(); ++t)
                loss_sum += triplet_loss(tb.ap[t], tb.an[t], cfg.margin).loss;
            count += tb.size();
        } catch (const NoValidTriplets&) {
        }
    }
    if (count == 0) throw NoValidTriplets("no batch yields a triplet");
    return loss_sum / static_cast<double>(count);
}

} // namespace

TrainResult train_projection(const std::vector<float>& feats, size_t base_dim,
                             const std::vector<std::string>& ids, const TrainConfig& cfg) {
    size_t n = ids.size();
    if (feats.size() != n * base_dim) throw DimensionMismatch("feature matrix shape");
    if (cfg.epochs < 0 || cfg.lr < 0.0f || cfg.batch_size == 0)
        throw ParamOutOfRange("bad training config");
    if (cfg.xbm_capacity < cfg.batch_size)
        throw CapacityTooSmall("xbm capacity below batch size");

    TrainResult res;
    res.projection = identity_projection(base_dim);
    Projection& p = res.projection;
    res.epoch_loss.push_back(eval_mean_loss(feats, base_dim, ids, p, cfg));

    XbmQueue bank = make_xbm(cfg.xbm_capacity, kGlobalDim);
    std::vector<uint32_t> perm(n);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // same seed every epoch: identical batch composition keeps the loss
        // trace a pure function of the projection
        Rng rng{cfg.seed};
        std::iota(perm.begin(), perm.end(), 0u);
        rng.shuffle(perm);

        for (size_t start = 0; start < n; start += cfg.batch_size) {
            size_t b = std::min(cfg.batch_size, n - start);
            std::vector<uint32_t> rows(perm.begin() + static_cast<long>(start),
                                       perm.begin() + static_cast<long>(start + b));
            std::vector<std::string> bids(b);
            for (size_t i = 0; i < b; ++i) bids[i] = ids[rows[i]];
            Forward fw = forward_rows(feats, base_dim, rows, p);
            std::vector<float> zf(fw.z.begin(), fw.z.end());

            // in-batch triples
            std::vector<std::array<uint32_t, 3>> triples;
            try {
                TripletBatch tb = mine_triplets(zf, kGlobalDim, bids, cfg.margin);
                triples.reserve(tb.size());
                for (size_t t = 0; t < tb.size(); ++t)
                    triples.push_back({tb.anchors[t], tb.positives[t], tb.negatives[t]});
            } catch (const NoValidTriplets&) {
            }

            // memory-bank triples: negatives come from past batches, detached
            struct BankTriple {
                uint32_t a, p;
                size_t mem;
                double an;
            };
            std::vector<BankTriple> bank_triples;
            if (bank.size() > 0) {
                for (uint32_t a = 0; a < b; ++a) {
                    std::vector<size_t> negs = xbm_negatives(bank, bids[a]);
                    if (negs.empty()) continue;
                    const double* za = fw.z.data() + a * kGlobalDim;
                    for (uint32_t pp = 0; pp < b; ++pp) {
                        if (pp == a || bids[pp] != bids[a]) continue;
                        double ap = dist_rows(za, fw.z.data() + pp * kGlobalDim);
                        size_t hardest = negs[0];
                        double hardest_d = -1.0;
                        std::vector<BankTriple> semi;
                        for (size_t m : negs) {
                            const std::vector<float>& mv = bank.feats[m];
                            double s = 0.0;
                            for (size_t j = 0; j < kGlobalDim; ++j) {
                                double d = za[j] - mv[j];
                                s += d * d;
                            }
                            double an = std::sqrt(s);
                            if (hardest_d < 0.0 || an < hardest_d) {
                                hardest_d = an;
                                hardest = m;
                            }
                            if (ap < an && an < ap + cfg.margin)
                                semi.push_back({a, pp, m, an});
                        }
                        bank_triples.push_back({a, pp, hardest, hardest_d});
                        for (const BankTriple& s : semi)
                            if (s.mem != hardest) bank_triples.push_back(s);
                    }
                }
            }

            size_t m_total = triples.size() + bank_triples.size();
            if (m_total > 0 && cfg.lr > 0.0f) {
                double inv_m = 1.0 / static_cast<double>(m_total);
                std::vector<double> dz(b * kGlobalDim, 0.0);
                double loss_sum = 0.0;
                for (const auto& t : triples) {
                    const double* za = fw.z.data() + t[0] * kGlobalDim;
                    const double* zp = fw.z.data() + t[1] * kGlobalDim;
                    const double* zn = fw.z.data() + t[2] * kGlobalDim;
                    double ap = dist_rows(za, zp);
                    double an = dist_rows(za, zn);
                    double v = ap - an + cfg.margin;
                    if (v < 0.0) continue;
                    loss_sum += v;
                    add_dist_grad(za, zp, ap, inv_m, dz.data() + t[0] * kGlobalDim,
                                  dz.data() + t[1] * kGlobalDim);
                    add_dist_grad(za, zn, an, -inv_m, dz.data() + t[0] * kGlobalDim,
                                  dz.data() + t[2] * kGlobalDim);
                }
                for (const BankTriple& t : bank_triples) {
                    const double* za = fw.z.data() + t.a * kGlobalDim;
                    const double* zp = fw.z.data() + t.p * kGlobalDim;
                    double ap = dist_rows(za, zp);
                    double v = ap - t.an + cfg.margin;
                    if (v < 0.0) continue;
                    loss_sum += v;
                    add_dist_grad(za, zp, ap, inv_m, dz.data() + t.a * kGlobalDim,
                                  dz.data() + t.p * kGlobalDim);
                    // d(an)/d(za) with the memory vector constant
                    const std::vector<float>& mv = bank.feats[t.mem];
                    if (t.an > 0.0) {
                        double* ga = dz.data() + t.a * kGlobalDim;
                        for (size_t j = 0; j < kGlobalDim; ++j)
                            ga[j] -= (za[j] - mv[j]) / t.an * inv_m;
                    }
                }
                if (!std::isfinite(loss_sum)) throw DivergedLoss("batch loss is not finite");

                // backprop through normalization, then into the projection
                for (size_t r = 0; r < b; ++r) {
                    const double* z = fw.z.data() + r * kGlobalDim;
                    const double* dzr = dz.data() + r * kGlobalDim;
                    double zdot = 0.0;
                    for (size_t j = 0; j < kGlobalDim; ++j) zdot += z[j] * dzr[j];
                    double du[kGlobalDim];
                    bool any = false;
                    for (size_t j = 0; j < kGlobalDim; ++j) {
                        du[j] = (dzr[j] - z[j] * zdot) / fw.norm[r];
                        any = any || du[j] != 0.0;
                    }
                    if (!any) continue;
                    const float* f = feats.data() + static_cast<size_t>(rows[r]) * base_dim;
                    for (size_t i = 0; i < base_dim; ++i) {
                        double fi = f[i];
                        if (fi == 0.0) continue;
                        float* prow = p.m.data() + i * kGlobalDim;
                        for (size_t j = 0; j < kGlobalDim; ++j)
                            prow[j] -= static_cast<float>(cfg.lr * fi * du[j]);
                    }
                }
            }

            xbm_push(bank, zf, bids);
        }

        double ep = eval_mean_loss(feats, base_dim, ids, p, cfg);
        if (!std::isfinite(ep)) throw DivergedLoss("epoch loss is not finite");
        res.epoch_loss.push_back(ep);
    }
    p.trained = cfg.epochs > 0;
    return res;
}

// --- persistence ----------------------------------------------------------------

void save_embeddings(const EmbeddingStore& store, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open for write: " + path);
    f.write(kEmbMagic, 4);
    write_pod(f, kEmbVersion);
    write_pod(f, static_cast<uint64_t>(store.size()));
    write_pod(f, static_cast<uint16_t>(kGlobalDim));
    for (const std::string& id : store.ids) write_string(f, id);
    f.write(reinterpret_cast<const char*>(store.rows.data()),
            static_cast<std::streamsize>(store.rows.size() * 4));
    if (!f) throw IoFailure("write failed: " + path);
}

EmbeddingStore load_embeddings(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open: " + path);
    expect_magic(f, kEmbMagic, "embedding store");
    uint32_t version = read_pod<uint32_t>(f);
    if (version != kEmbVersion) throw VersionMismatch("embedding version " + std::to_string(version));
    uint64_t count = read_pod<uint64_t>(f);
    uint16_t dim = read_pod<uint16_t>(f);
    if (dim != kGlobalDim) throw DimensionMismatch("embedding dim " + std::to_string(dim));
    EmbeddingStore store;
    store.ids.reserve(count);
    for (uint64_t i = 0; i < count; ++i) store.ids.push_back(read_string(f));
    store.rows.resize(count * kGlobalDim);
    f.read(reinterpret_cast<char*>(store.rows.data()),
           static_cast<std::streamsize>(store.rows.size() * 4));
    if (!f) throw IoFailure("truncated embedding rows: " + path);
    // healthy rows pass through untouched so the format round-trips bit-exactly;
    // only rows that drifted off unit norm get repaired (and flagged)
    size_t off_rows = 0;
    for (uint64_t i = 0; i < count; ++i) {
        float* r = store.rows.data() + i * kGlobalDim;
        double s = 0.0;
        for (size_t j = 0; j < kGlobalDim; ++j) s += static_cast<double>(r[j]) * r[j];
        if (s <= 0.0) throw ZeroVector("zero embedding row for id " + store.ids[i]);
        double nrm = std::sqrt(s);
        if (std::abs(nrm - 1.0) <= 1e-3) continue;
        ++off_rows;
        float inv = static_cast<float>(1.0 / nrm);
        for (size_t j = 0; j < kGlobalDim; ++j) r[j] *= inv;
    }
    if (off_rows > 0)
        std::cerr << "warning: re-normalized " << off_rows << " embedding rows deviating > 1e-3\n";
    return store;
}

void save_projection(const Projection& p, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open for write: " + path);
    f.write(kProjMagic, 4);
    write_pod(f, kProjVersion);
    write_pod(f, static_cast<uint32_t>(p.base_dim));
    write_pod(f, static_cast<uint32_t>(kGlobalDim));
    write_pod(f, static_cast<uint8_t>(p.trained ? 1 : 0));
    f.write(reinterpret_cast<const char*>(p.m.data()),
            static_cast<std::streamsize>(p.m.size() * 4));
    if (!f) throw IoFailure("write failed: " + path);
}

Projection load_projection(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open: " + path);
    expect_magic(f, kProjMagic, "projection");
    uint32_t version = read_pod<uint32_t>(f);
    if (version != kProjVersion) throw VersionMismatch("projection version " + std::to_string(version));
    Projection p;
    p.base_dim = read_pod<uint32_t>(f);
    uint32_t out_dim = read_pod<uint32_t>(f);
    if (out_dim != kGlobalDim) throw DimensionMismatch("projection out dim " + std::to_string(out_dim));
    p.trained = read_pod<uint8_t>(f) != 0;
    p.m.resize(p.base_dim * kGlobalDim);
    f.read(reinterpret_cast<char*>(p.m.data()), static_cast<std::streamsize>(p.m.size() * 4));
    if (!f) throw IoFailure("truncated projection matrix: " + path);
    return p;
}

} // namespace copydet
