#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "copydet/sift.hpp"

namespace copydet {

enum class Dtype : uint8_t { u8 = 0, f16 = 1, f32 = 2 };

size_t dtype_size(Dtype dt);
const char* dtype_name(Dtype dt);
Dtype dtype_from_name(const std::string& name);

struct Owner {
    uint32_t image_ord = 0;
    uint32_t keypoint_ord = 0;
};

struct Hit {
    size_t query_ordinal = 0;
    uint32_t image_ord = 0;
    uint32_t keypoint_ord = 0;
    float distance = 0.0f; // squared L2
};

// Immutable after build. Descriptors stored in input order; owner table maps
// each descriptor ordinal back to (reference image, keypoint). Optional IVF
// partition data accelerates search at the cost of exactness (unless
// nprobe == nlist, which scans everything).
struct DescriptorIndex {
    Dtype dtype = Dtype::u8;
    uint16_t dim = 128;
    std::vector<std::string> image_ids;
    std::vector<Owner> owners;
    std::vector<uint8_t> blob; // count * dim * dtype_size(dtype) bytes

    uint32_t nlist = 0; // 0 = flat
    std::vector<float> centroids;       // nlist * dim
    std::vector<uint64_t> list_offsets; // nlist + 1
    std::vector<uint32_t> list_entries; // descriptor ordinals, grouped by list

    // derived on build/load, not serialized
    std::vector<uint32_t> id_rank;       // image_ord -> rank of id in sorted order
    std::vector<size_t> image_offsets;   // image_ord -> first descriptor ordinal (size ids+1)
    std::vector<float> f32_view;         // decoded blob when dtype != u8

    size_t count() const { return owners.size(); }
    bool partitioned() const { return nlist > 0; }
    const std::string& owner_id(size_t ordinal) const { return image_ids[owners[ordinal].image_ord]; }
    void rebuild_derived();
};

DescriptorIndex build_flat(const std::vector<FeatureSet>& sets, Dtype dtype);

DescriptorIndex build_partitioned(const std::vector<FeatureSet>& sets, Dtype dtype,
                                  uint32_t nlist, size_t train_sample,
                                  uint64_t seed = 0x4c445831ull);

std::vector<std::vector<Hit>> search(const DescriptorIndex& idx,
                                     const std::vector<SiftDescriptor>& queries,
                                     size_t k, size_t nprobe, int threads = 1);

void save_index(const DescriptorIndex& idx, const std::string& path);
DescriptorIndex load_index(const std::string& path);

// Reconstruct one image's descriptors from the stored blob (exact for u8 and
// for u8-derived f16/f32 values).
std::vector<SiftDescriptor> image_descriptors(const DescriptorIndex& idx, uint32_t image_ord);

} // namespace copydet
