#include "copydet/vecindex.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "copydet/binio.hpp"
#include "copydet/errors.hpp"
#include "copydet/f16.hpp"
#include "copydet/parallel.hpp"
#include "copydet/rng.hpp"

namespace copydet {

static constexpr char kIndexMagic[4] = {'L', 'D', 'X', '1'};
static constexpr uint32_t kIndexVersion = 1;
static constexpr int kDim = 128;
static constexpr int kKmeansIters = 25;

size_t dtype_size(Dtype dt) {
    switch (dt) {
    case Dtype::u8: return 1;
    case Dtype::f16: return 2;
    case Dtype::f32: return 4;
    }
    throw ParamOutOfRange("bad dtype");
}

const char* dtype_name(Dtype dt) {
    switch (dt) {
    case Dtype::u8: return "u8";
    case Dtype::f16: return "f16";
    case Dtype::f32: return "f32";
    }
    throw ParamOutOfRange("bad dtype");
}

Dtype dtype_from_name(const std::string& name) {
    if (name == "u8") return Dtype::u8;
    if (name == "f16") return Dtype::f16;
    if (name == "f32") return Dtype::f32;
    throw ParamOutOfRange("unknown dtype: " + name);
}

void DescriptorIndex::rebuild_derived() {
    // id_rank: rank of each image id in lexicographic order
    std::vector<uint32_t> order(image_ids.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(),
              [&](uint32_t a, uint32_t b) { return image_ids[a] < image_ids[b]; });
    id_rank.assign(image_ids.size(), 0);
    for (uint32_t r = 0; r < order.size(); ++r) id_rank[order[r]] = r;

    // per-image contiguous ranges in the blob
    image_offsets.assign(image_ids.size() + 1, 0);
    for (const Owner& o : owners) image_offsets[o.image_ord + 1]++;
    for (size_t i = 1; i < image_offsets.size(); ++i) image_offsets[i] += image_offsets[i - 1];

    f32_view.clear();
    if (dtype == Dtype::f16) {
        f32_view.resize(count() * kDim);
        for (size_t i = 0; i < count() * kDim; ++i) {
            uint16_t h;
            std::memcpy(&h, blob.data() + i * 2, 2);
            f32_view[i] = f16_to_f32(h);
        }
    } else if (dtype == Dtype::f32) {
        f32_view.resize(count() * kDim);
        std::memcpy(f32_view.data(), blob.data(), blob.size());
    }
}

static void append_descriptor(std::vector<uint8_t>& blob, Dtype dt, const SiftDescriptor& d) {
    switch (dt) {
    case Dtype::u8:
        blob.insert(blob.end(), d.begin(), d.end());
        break;
    case Dtype::f16:
        for (uint8_t v : d) {
            uint16_t h = f32_to_f16(static_cast<float>(v));
            const uint8_t* p = reinterpret_cast<const uint8_t*>(&h);
            blob.insert(blob.end(), p, p + 2);
        }
        break;
    case Dtype::f32:
        for (uint8_t v : d) {
            float f = static_cast<float>(v);
            const uint8_t* p = reinterpret_cast<const uint8_t*>(&f);
            blob.insert(blob.end(), p, p + 4);
        }
        break;
    }
}

DescriptorIndex build_flat(const std::vector<FeatureSet>& sets, Dtype dtype) {
    size_t total = 0;
    for (const FeatureSet& fs : sets) total += fs.descriptors.size();
    if (sets.empty() || total == 0) throw EmptyCorpus("no descriptors to index");

    DescriptorIndex idx;
    idx.dtype = dtype;
    idx.blob.reserve(total * kDim * dtype_size(dtype));
    idx.owners.reserve(total);
    for (const FeatureSet& fs : sets) {
        if (fs.keypoints.size() != fs.descriptors.size())
            throw DimensionMismatch("feature set keypoint/descriptor count mismatch: " + fs.image_id);
        uint32_t img = static_cast<uint32_t>(idx.image_ids.size());
        idx.image_ids.push_back(fs.image_id);
        for (uint32_t k = 0; k < fs.descriptors.size(); ++k) {
            idx.owners.push_back({img, k});
            append_descriptor(idx.blob, dtype, fs.descriptors[k]);
        }
    }
    idx.rebuild_derived();
    return idx;
}

static inline int32_t ssd_u8(const uint8_t* a, const uint8_t* b) {
    int32_t acc = 0;
    for (int i = 0; i < kDim; ++i) {
        int d = static_cast<int>(a[i]) - static_cast<int>(b[i]);
        acc += d * d;
    }
    return acc;
}

static inline float ssd_f32(const float* a, const float* b) {
    float acc = 0.0f;
    for (int i = 0; i < kDim; ++i) {
        float d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

// --- k-means coarse quantizer -------------------------------------------------

static std::vector<float> decode_all_f32(const DescriptorIndex& idx) {
    std::vector<float> out(idx.count() * kDim);
    if (idx.dtype == Dtype::u8) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(idx.blob[i]);
    } else {
        out = idx.f32_view;
    }
    return out;
}

static std::vector<uint32_t> assign_to_centroids(const std::vector<float>& pts, size_t n,
                                                 const std::vector<float>& cents, uint32_t nlist) {
    std::vector<uint32_t> assign(n, 0);
    parallel_for(n, 0, [&](size_t i) {
        const float* p = pts.data() + i * kDim;
        float best = ssd_f32(p, cents.data());
        uint32_t best_c = 0;
        for (uint32_t c = 1; c < nlist; ++c) {
            float d = ssd_f32(p, cents.data() + static_cast<size_t>(c) * kDim);
            if (d < best) {
                best = d;
                best_c = c;
            }
        }
        assign[i] = best_c;
    });
    return assign;
}

DescriptorIndex build_partitioned(const std::vector<FeatureSet>& sets, Dtype dtype,
                                  uint32_t nlist, size_t train_sample, uint64_t seed) {
    if (nlist == 0) throw ParamOutOfRange("nlist must be >= 1");
    DescriptorIndex idx = build_flat(sets, dtype);
    size_t n = idx.count();
    if (n < nlist) throw TooFewVectors("count " + std::to_string(n) + " < nlist " + std::to_string(nlist));

    std::vector<float> all = decode_all_f32(idx);

    // seeded sample of training points (all of them when the corpus is small)
    size_t sample_n = std::min(std::max<size_t>(train_sample, nlist), n);
    std::vector<uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    Rng rng{seed};
    rng.shuffle(perm);
    perm.resize(sample_n);
    std::sort(perm.begin(), perm.end());
    std::vector<float> pts(sample_n * kDim);
    for (size_t i = 0; i < sample_n; ++i)
        std::memcpy(pts.data() + i * kDim, all.data() + static_cast<size_t>(perm[i]) * kDim, kDim * 4);

    // init: first nlist points of a fresh shuffle of the sample
    std::vector<uint32_t> pick(sample_n);
    std::iota(pick.begin(), pick.end(), 0u);
    rng.shuffle(pick);
    std::vector<float> cents(static_cast<size_t>(nlist) * kDim);
    for (uint32_t c = 0; c < nlist; ++c)
        std::memcpy(cents.data() + static_cast<size_t>(c) * kDim,
                    pts.data() + static_cast<size_t>(pick[c]) * kDim, kDim * 4);

    std::vector<uint32_t> assign;
    for (int iter = 0; iter < kKmeansIters; ++iter) {
        std::vector<uint32_t> next = assign_to_centroids(pts, sample_n, cents, nlist);

        // revive empty clusters by stealing the worst-fit point
        std::vector<size_t> sizes(nlist, 0);
        for (uint32_t a : next) sizes[a]++;
        for (uint32_t c = 0; c < nlist; ++c) {
            if (sizes[c] > 0) continue;
            size_t worst = SIZE_MAX;
            float worst_d = 0.0f;
            for (size_t i = 0; i < sample_n; ++i) {
                if (sizes[next[i]] <= 1) continue;
                float d = ssd_f32(pts.data() + i * kDim,
                                  cents.data() + static_cast<size_t>(next[i]) * kDim);
                if (d > worst_d) {
                    worst_d = d;
                    worst = i;
                }
            }
            if (worst == SIZE_MAX || worst_d == 0.0f) continue;
            sizes[next[worst]]--;
            next[worst] = c;
            sizes[c] = 1;
            std::memcpy(cents.data() + static_cast<size_t>(c) * kDim,
                        pts.data() + worst * kDim, kDim * 4);
        }

        bool changed = (next != assign);
        assign = std::move(next);
        if (!changed && iter > 0) break;

        // recompute centroids; fixed per-cluster summation order keeps this
        // deterministic under any thread count
        std::vector<std::vector<uint32_t>> members(nlist);
        for (uint32_t i = 0; i < sample_n; ++i) members[assign[i]].push_back(i);
        parallel_for(nlist, 0, [&](size_t c) {
            if (members[c].empty()) return;
            double sum[kDim] = {0};
            for (uint32_t i : members[c]) {
                const float* p = pts.data() + static_cast<size_t>(i) * kDim;
                for (int d = 0; d < kDim; ++d) sum[d] += p[d];
            }
            float* ctr = cents.data() + c * kDim;
            for (int d = 0; d < kDim; ++d)
                ctr[d] = static_cast<float>(sum[d] / static_cast<double>(members[c].size()));
        });
    }

    // final assignment of the full corpus -> inverted lists (ordinals ascending)
    std::vector<uint32_t> full = assign_to_centroids(all, n, cents, nlist);
    idx.nlist = nlist;
    idx.centroids = std::move(cents);
    idx.list_offsets.assign(nlist + 1, 0);
    for (uint32_t a : full) idx.list_offsets[a + 1]++;
    for (size_t c = 1; c <= nlist; ++c) idx.list_offsets[c] += idx.list_offsets[c - 1];
    idx.list_entries.resize(n);
    std::vector<uint64_t> cursor(idx.list_offsets.begin(), idx.list_offsets.end() - 1);
    for (size_t i = 0; i < n; ++i)
        idx.list_entries[cursor[full[i]]++] = static_cast<uint32_t>(i);
    return idx;
}

// --- search -------------------------------------------------------------------

namespace {

struct Cand {
    float distance;
    uint32_t ordinal;
};

// strict order: distance, then (image id, keypoint ordinal) ascending
inline bool cand_less(const DescriptorIndex& idx, const Cand& a, const Cand& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    const Owner& oa = idx.owners[a.ordinal];
    const Owner& ob = idx.owners[b.ordinal];
    uint32_t ra = idx.id_rank[oa.image_ord];
    uint32_t rb = idx.id_rank[ob.image_ord];
    if (ra != rb) return ra < rb;
    return oa.keypoint_ord < ob.keypoint_ord;
}

// bounded top-k kept sorted; k is small (typically 1 or 2)
struct TopK {
    std::vector<Cand> best;
    size_t k;

    explicit TopK(size_t k_) : k(k_) { best.reserve(k_); }

    void offer(const DescriptorIndex& idx, Cand c) {
        if (best.size() == k && !cand_less(idx, c, best.back())) return;
        auto pos = best.begin();
        while (pos != best.end() && cand_less(idx, *pos, c)) ++pos;
        best.insert(pos, c);
        if (best.size() > k) best.pop_back();
    }
};

} // namespace

std::vector<std::vector<Hit>> search(const DescriptorIndex& idx,
                                     const std::vector<SiftDescriptor>& queries,
                                     size_t k, size_t nprobe, int threads) {
    if (k < 1) throw ParamOutOfRange("k must be >= 1");
    if (nprobe < 1) throw ParamOutOfRange("nprobe must be >= 1");
    if (idx.count() == 0) throw EmptyCorpus("search on empty index");

    std::vector<std::vector<Hit>> out(queries.size());
    parallel_for(queries.size(), threads, [&](size_t qi) {
        const SiftDescriptor& q = queries[qi];
        float qf[kDim];
        for (int d = 0; d < kDim; ++d) qf[d] = static_cast<float>(q[d]);

        TopK top(k);
        auto scan_one = [&](uint32_t ord) {
            float dist;
            if (idx.dtype == Dtype::u8) {
                dist = static_cast<float>(
                    ssd_u8(q.data(), idx.blob.data() + static_cast<size_t>(ord) * kDim));
            } else {
                dist = ssd_f32(qf, idx.f32_view.data() + static_cast<size_t>(ord) * kDim);
            }
            top.offer(idx, {dist, ord});
        };

        if (!idx.partitioned()) {
            for (uint32_t ord = 0; ord < idx.count(); ++ord) scan_one(ord);
        } else {
            size_t probes = std::min<size_t>(nprobe, idx.nlist);
            std::vector<Cand> lists(idx.nlist);
            for (uint32_t c = 0; c < idx.nlist; ++c)
                lists[c] = {ssd_f32(qf, idx.centroids.data() + static_cast<size_t>(c) * kDim), c};
            std::partial_sort(lists.begin(), lists.begin() + probes, lists.end(),
                              [](const Cand& a, const Cand& b) {
                                  if (a.distance != b.distance) return a.distance < b.distance;
                                  return a.ordinal < b.ordinal;
                              });
            for (size_t p = 0; p < probes; ++p) {
                uint32_t c = lists[p].ordinal;
                for (uint64_t e = idx.list_offsets[c]; e < idx.list_offsets[c + 1]; ++e)
                    scan_one(idx.list_entries[e]);
            }
        }

        std::vector<Hit>& hits = out[qi];
        hits.reserve(top.best.size());
        for (const Cand& c : top.best) {
            const Owner& o = idx.owners[c.ordinal];
            hits.push_back({qi, o.image_ord, o.keypoint_ord, c.distance});
        }
    });
    return out;
}

// --- persistence ----------------------------------------------------------------

void save_index(const DescriptorIndex& idx, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open for write: " + path);
    f.write(kIndexMagic, 4);
    write_pod(f, kIndexVersion);
    write_pod(f, static_cast<uint8_t>(idx.dtype));
    write_pod(f, idx.dim);
    write_pod(f, static_cast<uint64_t>(idx.count()));
    write_pod(f, static_cast<uint32_t>(idx.image_ids.size()));
    for (const std::string& id : idx.image_ids) write_string(f, id);
    for (const Owner& o : idx.owners) {
        write_pod(f, o.image_ord);
        write_pod(f, o.keypoint_ord);
    }
    f.write(reinterpret_cast<const char*>(idx.blob.data()),
            static_cast<std::streamsize>(idx.blob.size()));
    uint8_t has_part = idx.partitioned() ? 1 : 0;
    write_pod(f, has_part);
    if (has_part) {
        write_pod(f, idx.nlist);
        f.write(reinterpret_cast<const char*>(idx.centroids.data()),
                static_cast<std::streamsize>(idx.centroids.size() * 4));
        for (uint64_t off : idx.list_offsets) write_pod(f, off);
        f.write(reinterpret_cast<const char*>(idx.list_entries.data()),
                static_cast<std::streamsize>(idx.list_entries.size() * 4));
    }
    if (!f) throw IoFailure("write failed: " + path);
}

DescriptorIndex load_index(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open: " + path);
    expect_magic(f, kIndexMagic, "descriptor index");
    uint32_t version = read_pod<uint32_t>(f);
    if (version != kIndexVersion)
        throw VersionMismatch("index version " + std::to_string(version));
    DescriptorIndex idx;
    uint8_t dt = read_pod<uint8_t>(f);
    if (dt > 2) throw CorruptStream("bad dtype byte");
    idx.dtype = static_cast<Dtype>(dt);
    idx.dim = read_pod<uint16_t>(f);
    if (idx.dim != kDim) throw DimensionMismatch("index dim " + std::to_string(idx.dim));
    uint64_t count = read_pod<uint64_t>(f);
    uint32_t nids = read_pod<uint32_t>(f);
    idx.image_ids.reserve(nids);
    for (uint32_t i = 0; i < nids; ++i) idx.image_ids.push_back(read_string(f));
    idx.owners.resize(count);
    for (uint64_t i = 0; i < count; ++i) {
        idx.owners[i].image_ord = read_pod<uint32_t>(f);
        idx.owners[i].keypoint_ord = read_pod<uint32_t>(f);
        if (idx.owners[i].image_ord >= nids) throw CorruptStream("owner image ordinal out of range");
    }
    idx.blob.resize(count * kDim * dtype_size(idx.dtype));
    f.read(reinterpret_cast<char*>(idx.blob.data()),
           static_cast<std::streamsize>(idx.blob.size()));
    if (!f) throw IoFailure("truncated index blob: " + path);
    uint8_t has_part = read_pod<uint8_t>(f);
    if (has_part) {
        idx.nlist = read_pod<uint32_t>(f);
        idx.centroids.resize(static_cast<size_t>(idx.nlist) * kDim);
        f.read(reinterpret_cast<char*>(idx.centroids.data()),
               static_cast<std::streamsize>(idx.centroids.size() * 4));
        idx.list_offsets.resize(idx.nlist + 1);
        for (auto& off : idx.list_offsets) off = read_pod<uint64_t>(f);
        idx.list_entries.resize(count);
        f.read(reinterpret_cast<char*>(idx.list_entries.data()),
               static_cast<std::streamsize>(idx.list_entries.size() * 4));
        if (!f) throw IoFailure("truncated partition section: " + path);
        if (idx.list_offsets.front() != 0 || idx.list_offsets.back() != count)
            throw CorruptStream("partition offsets do not cover the corpus");
    }
    idx.rebuild_derived();
    return idx;
}

std::vector<SiftDescriptor> image_descriptors(const DescriptorIndex& idx, uint32_t image_ord) {
    if (image_ord >= idx.image_ids.size()) throw ParamOutOfRange("image ordinal out of range");
    size_t lo = idx.image_offsets[image_ord];
    size_t hi = idx.image_offsets[image_ord + 1];
    std::vector<SiftDescriptor> out(hi - lo);
    for (size_t i = lo; i < hi; ++i) {
        SiftDescriptor& d = out[i - lo];
        if (idx.dtype == Dtype::u8) {
            std::memcpy(d.data(), idx.blob.data() + i * kDim, kDim);
        } else {
            const float* row = idx.f32_view.data() + i * kDim;
            for (int j = 0; j < kDim; ++j) {
                long v = std::lround(row[j]);
                d[j] = static_cast<uint8_t>(std::clamp<long>(v, 0, 255));
            }
        }
    }
    return out;
}

} // namespace copydet
