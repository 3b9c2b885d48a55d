#include "chimera/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "chimera/error.hpp"

namespace chimera {

std::string shape_to_string(const Shape& shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

Tensor::Tensor(Shape s, std::vector<float> values) : shape(std::move(s)), data(std::move(values)) {
    require(data.size() == element_count(shape), ErrorKind::Shape,
            "tensor data size " + std::to_string(data.size()) + " does not match shape " +
                shape_to_string(shape));
}

bool bit_identical(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data.size() == b.data.size() &&
           (a.data.empty() || std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
}

double l2_norm(std::span<const float> v) {
    double acc = 0.0;
    for (float x : v) acc += static_cast<double>(x) * x;
    return std::sqrt(acc);
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
    require(a.size() == b.size(), ErrorKind::Shape, "max_abs_diff: length mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    }
    return m;
}

}  // namespace chimera
