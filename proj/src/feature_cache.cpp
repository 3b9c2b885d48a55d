#include "chimera/feature_cache.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "chimera/core_math.hpp"
#include "chimera/error.hpp"

namespace chimera {

namespace {

std::string key_string(std::string_view image_id, StageId id, int t) {
    return "(" + std::string(image_id) + ", " + to_string(id) + ", t=" + std::to_string(t) + ")";
}

}  // namespace

FeatureCache::FeatureCache(std::vector<int> allowed_timesteps) : allowed_(std::move(allowed_timesteps)) {}

void FeatureCache::declare_shape(StageId id, Shape shape) {
    auto it = shapes_.find(id);
    if (it != shapes_.end()) {
        require(it->second == shape, ErrorKind::Shape,
                "cache: conflicting shape declaration for " + to_string(id) + ": " + shape_to_string(it->second) +
                    " vs " + shape_to_string(shape));
        return;
    }
    shapes_.emplace(id, std::move(shape));
}

void FeatureCache::put(const std::string& image_id, StageId id, int t, Tensor feature) {
    if (allowed_) {
        require(std::find(allowed_->begin(), allowed_->end(), t) != allowed_->end(), ErrorKind::InvalidArgument,
                "cache: timestep " + std::to_string(t) + " is not an inversion timestep");
    }
    auto it = shapes_.find(id);
    if (it == shapes_.end()) {
        shapes_.emplace(id, feature.shape);
    } else if (it->second != feature.shape) {
        fail(ErrorKind::Shape, "cache: feature for " + key_string(image_id, id, t) + " has shape " +
                                   shape_to_string(feature.shape) + ", expected " + shape_to_string(it->second));
    }
    CacheKey key{image_id, id, t};
    require(!entries_.contains(key), ErrorKind::Conflict, "cache: duplicate key " + key_string(image_id, id, t));
    entries_.emplace(std::move(key), std::move(feature));
}

const Tensor& FeatureCache::get(std::string_view image_id, StageId id, int t) const {
    auto it = entries_.find(CacheKey{std::string(image_id), id, t});
    if (it == entries_.end()) {
        fail(ErrorKind::NotFound, "cache: missing key " + key_string(image_id, id, t));
    }
    return it->second;
}

bool FeatureCache::contains(std::string_view image_id, StageId id, int t) const {
    return entries_.contains(CacheKey{std::string(image_id), id, t});
}

std::vector<std::string> FeatureCache::image_ids() const {
    std::vector<std::string> ids;
    for (const auto& [key, _] : entries_) ids.push_back(key.image_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

void FeatureCache::check_complete(std::string_view image_id, std::span<const int> timesteps) const {
    require(!shapes_.empty(), ErrorKind::NotFound, "cache: no stage blocks declared");
    for (const auto& [id, _] : shapes_) {
        for (int t : timesteps) {
            if (!contains(image_id, id, t)) {
                fail(ErrorKind::NotFound, "cache incomplete: missing key " + key_string(image_id, id, t));
            }
        }
    }
}

bool FeatureCache::is_complete(std::string_view image_id, std::span<const int> timesteps) const {
    try {
        check_complete(image_id, timesteps);
        return true;
    } catch (const Error&) {
        return false;
    }
}

bool FeatureCache::operator==(const FeatureCache& o) const {
    if (shapes_ != o.shapes_ || entries_.size() != o.entries_.size()) return false;
    auto it = o.entries_.begin();
    for (const auto& [key, value] : entries_) {
        if (!(key == it->first) || !bit_identical(value, it->second)) return false;
        ++it;
    }
    return true;
}

BlendedSlice blend_cache(CacheSource a, CacheSource b, double alpha, int t) {
    require(a.cache.shape_table() == b.cache.shape_table(), ErrorKind::Shape,
            "blend_cache: caches have different shape tables");
    BlendedSlice slice;
    slice.alpha = alpha;
    slice.t = t;
    for (const auto& [id, shape] : a.cache.shape_table()) {
        const Tensor& fa = a.cache.get(a.image_id, id, t);
        const Tensor& fb = b.cache.get(b.image_id, id, t);
        require(fa.shape == fb.shape, ErrorKind::Shape, "blend_cache: shape mismatch at " + to_string(id));
        slice.values.emplace(id, Tensor(shape, slerp_vec<float>(fa.values(), fb.values(), alpha)));
    }
    return slice;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            fail(ErrorKind::Corruption, "chimcache: truncated at byte " + std::to_string(pos_));
        }
    }
    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

Stage stage_from_byte(std::uint8_t b) {
    require(b <= 2, ErrorKind::Format, "chimcache: invalid stage byte " + std::to_string(b));
    return static_cast<Stage>(b);
}

}  // namespace

std::vector<std::uint8_t> encode_cache(const FeatureCache& cache) {
    Writer w;
    w.bytes(std::string_view(kCacheMagic, sizeof(kCacheMagic)));
    w.u32(kCacheVersion);

    w.u32(static_cast<std::uint32_t>(cache.shape_table().size()));
    for (const auto& [id, shape] : cache.shape_table()) {
        w.u32(static_cast<std::uint32_t>(1 + 4 + 4 + 4 * shape.size()));
        w.u8(static_cast<std::uint8_t>(id.stage));
        w.u32(static_cast<std::uint32_t>(id.block));
        w.u32(static_cast<std::uint32_t>(shape.size()));
        for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
    }

    const auto ids = cache.image_ids();
    w.u32(static_cast<std::uint32_t>(ids.size()));
    for (const auto& id : ids) {
        w.u32(static_cast<std::uint32_t>(id.size()));
        w.bytes(id);
    }

    w.u32(static_cast<std::uint32_t>(cache.size()));
    for (const auto& [key, _] : cache.entries()) {
        const auto idx = std::lower_bound(ids.begin(), ids.end(), key.image_id) - ids.begin();
        w.u32(static_cast<std::uint32_t>(idx));
        w.u8(static_cast<std::uint8_t>(key.stage.stage));
        w.u32(static_cast<std::uint32_t>(key.stage.block));
        w.i32(key.t);
    }
    for (const auto& [_, value] : cache.entries()) {
        for (float f : value.data) w.f32(f);
    }
    return w.take();
}

FeatureCache decode_cache(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (bytes.size() < sizeof(kCacheMagic) ||
        std::memcmp(bytes.data(), kCacheMagic, sizeof(kCacheMagic)) != 0) {
        fail(ErrorKind::Format, "chimcache: bad magic");
    }
    r.str(sizeof(kCacheMagic));
    const std::uint32_t version = r.u32();
    require(version == kCacheVersion, ErrorKind::Format, "chimcache: unsupported version " + std::to_string(version));

    FeatureCache cache;
    const std::uint32_t n_shapes = r.u32();
    for (std::uint32_t i = 0; i < n_shapes; ++i) {
        const std::uint32_t record_bytes = r.u32();
        const std::size_t start = r.pos();
        StageId id{stage_from_byte(r.u8()), static_cast<int>(r.u32())};
        const std::uint32_t ndim = r.u32();
        require(record_bytes == 9 + 4ull * ndim, ErrorKind::Format, "chimcache: inconsistent shape record length");
        Shape shape(ndim);
        for (auto& d : shape) d = r.u32();
        require(r.pos() - start == record_bytes, ErrorKind::Format, "chimcache: shape record overrun");
        cache.declare_shape(id, std::move(shape));
    }

    const std::uint32_t n_images = r.u32();
    std::vector<std::string> ids(n_images);
    for (auto& id : ids) id = r.str(r.u32());

    struct IndexEntry {
        std::uint32_t image;
        StageId id;
        int t;
    };
    const std::uint32_t n_entries = r.u32();
    // Each index record is 13 bytes; reject counts the buffer cannot hold before allocating.
    r.need(13ull * n_entries);
    std::vector<IndexEntry> index(n_entries);
    for (auto& e : index) {
        e.image = r.u32();
        e.id.stage = stage_from_byte(r.u8());
        e.id.block = static_cast<int>(r.u32());
        e.t = r.i32();
        require(e.image < n_images, ErrorKind::Format, "chimcache: image index out of range");
        require(cache.shape_table().contains(e.id), ErrorKind::Format,
                "chimcache: entry for undeclared stage block " + to_string(e.id));
    }

    for (const auto& e : index) {
        const Shape& shape = cache.shape_table().at(e.id);
        const std::size_t n = element_count(shape);
        r.need(4 * n);
        std::vector<float> values(n);
        for (auto& v : values) v = r.f32();
        cache.put(ids[e.image], e.id, e.t, Tensor(shape, std::move(values)));
    }
    require(r.remaining() == 0, ErrorKind::Corruption,
            "chimcache: " + std::to_string(r.remaining()) + " trailing bytes");
    return cache;
}

void save_cache(const FeatureCache& cache, const std::filesystem::path& path) {
    const auto bytes = encode_cache(cache);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

FeatureCache load_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_cache(bytes);
}

}  // namespace chimera
