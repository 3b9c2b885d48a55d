#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace chimera {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_to_string(const Shape& shape);

// Dense row-major float array. Used for latents, features and noise.
struct Tensor {
    Shape shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(Shape s, float fill = 0.0f) : shape(std::move(s)), data(element_count(shape), fill) {}
    Tensor(Shape s, std::vector<float> values);

    std::size_t size() const { return data.size(); }
    std::span<float> values() { return data; }
    std::span<const float> values() const { return data; }

    // (c, y, x) access for rank-3 tensors.
    float& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[(c * shape[1] + y) * shape[2] + x];
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * shape[1] + y) * shape[2] + x];
    }

    bool operator==(const Tensor&) const = default;
};

// Row-major 2-D float matrix (tokens x width for embeddings and attention).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

    float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const float> row(std::size_t r) const { return std::span<const float>(data).subspan(r * cols, cols); }
    bool empty() const { return rows == 0; }

    bool operator==(const Matrix&) const = default;
};

// Bitwise comparison; distinguishes -0.0f from 0.0f and NaN payloads.
bool bit_identical(const Tensor& a, const Tensor& b);

double l2_norm(std::span<const float> v);
double max_abs_diff(std::span<const float> a, std::span<const float> b);

}  // namespace chimera
