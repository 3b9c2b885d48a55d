#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chimera/stage.hpp"
#include "chimera/tensor.hpp"

namespace chimera {

struct CacheKey {
    std::string image_id;
    StageId stage;
    int t = 0;

    // File order: (stage, block, t, image).
    auto operator<=>(const CacheKey& o) const {
        if (auto c = stage <=> o.stage; c != 0) return c;
        if (auto c = t <=> o.t; c != 0) return c;
        return image_id <=> o.image_id;
    }
    bool operator==(const CacheKey&) const = default;
};

// Features recorded during inversion, keyed by (image, stage block, timestep).
// One writer per image during inversion; safe to share read-only afterwards.
class FeatureCache {
public:
    FeatureCache() = default;
    // Restrict accepted timesteps (normally the schedule's T_inv).
    explicit FeatureCache(std::vector<int> allowed_timesteps);

    // Fixes the expected shape for a stage block. put() also fixes it on first insert.
    void declare_shape(StageId id, Shape shape);

    // Throws shape-error on a shape mismatch and conflict-error on a duplicate key.
    void put(const std::string& image_id, StageId id, int t, Tensor feature);

    const Tensor& get(std::string_view image_id, StageId id, int t) const;
    bool contains(std::string_view image_id, StageId id, int t) const;

    const std::map<StageId, Shape>& shape_table() const { return shapes_; }
    const std::map<CacheKey, Tensor>& entries() const { return entries_; }
    std::vector<std::string> image_ids() const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    // Every declared stage block present at every timestep for image_id;
    // throws not-found naming the first missing key.
    void check_complete(std::string_view image_id, std::span<const int> timesteps) const;
    bool is_complete(std::string_view image_id, std::span<const int> timesteps) const;

    bool operator==(const FeatureCache& o) const;

private:
    std::map<StageId, Shape> shapes_;
    std::map<CacheKey, Tensor> entries_;
    std::optional<std::vector<int>> allowed_;
};

// A FeatureCache paired with the image whose features to read.
struct CacheSource {
    const FeatureCache& cache;
    std::string_view image_id;
};

struct BlendedSlice {
    double alpha = 0.0;
    int t = 0;
    std::map<StageId, Tensor> values;
};

// Slerp of flattened per-block features of a and b at timestep t.
BlendedSlice blend_cache(CacheSource a, CacheSource b, double alpha, int t);

// .chimcache persistence. Layout (little-endian):
//   "CHIMCACH" u32 version
//   u32 n_shapes, n_shapes x { u32 record_bytes, u8 stage, u32 block, u32 ndim, u32 dims[ndim] }
//   u32 n_images, n_images x { u32 len, bytes }
//   u32 n_entries, n_entries x { u32 image_index, u8 stage, u32 block, i32 t }
//   entry payloads in index order, each as f32 values
inline constexpr char kCacheMagic[8] = {'C', 'H', 'I', 'M', 'C', 'A', 'C', 'H'};
inline constexpr std::uint32_t kCacheVersion = 1;

std::vector<std::uint8_t> encode_cache(const FeatureCache& cache);
FeatureCache decode_cache(std::span<const std::uint8_t> bytes);

void save_cache(const FeatureCache& cache, const std::filesystem::path& path);
FeatureCache load_cache(const std::filesystem::path& path);

}  // namespace chimera
