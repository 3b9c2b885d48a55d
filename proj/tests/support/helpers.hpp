#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"

#include "chimera/error.hpp"
#include "chimera/image.hpp"
#include "chimera/tensor.hpp"

namespace testing_support {

inline std::mt19937_64& rng_for(std::uint64_t seed) {
    thread_local std::mt19937_64 rng;
    rng.seed(seed);
    return rng;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline chimera::Image random_image(std::mt19937_64& rng, int c = 1, int h = 16, int w = 16) {
    chimera::Image img(c, h, w);
    for (auto& p : img.pixels) p = static_cast<float>(uniform(rng, 0.0, 1.0));
    return img;
}

inline chimera::Tensor random_tensor(std::mt19937_64& rng, chimera::Shape shape, double scale = 1.0) {
    chimera::Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(uniform(rng, -scale, scale));
    return t;
}

inline chimera::Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    chimera::Matrix m(rows, cols);
    for (auto& v : m.data) v = static_cast<float>(uniform(rng, -scale, scale));
    return m;
}

// Kind of the chimera::Error thrown by f; fails the test if nothing is thrown.
inline chimera::ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const chimera::Error& e) {
        return e.kind();
    }
    FAIL("expected a chimera::Error");
    return chimera::ErrorKind::InvalidArgument;
}

// Fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("chimera-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing_support
