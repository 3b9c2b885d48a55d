#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "chimera/error.hpp"

namespace chimera {

// alphas[k] = (k+1)/(K+1), k = 0..K-1. Endpoints (0 and 1) are never frames.
struct InterpWeights {
    int K = 0;
    std::vector<double> alphas;
};

InterpWeights interp_weights(int K);

class UnitInterval {
public:
    UnitInterval() = default;
    // Throws invalid-argument outside [0,1]; use clamp01 to saturate instead.
    explicit UnitInterval(double v);
    double value() const { return value_; }
    operator double() const { return value_; }

private:
    double value_ = 0.0;
};

UnitInterval clamp01(double x);

// Below this sin(theta) slerp degrades to linear interpolation.
inline constexpr double kSlerpParallelEps = 1e-7;

namespace detail {
void check_slerp_inputs(std::size_t na, std::size_t nb, double norm_a, double norm_b, double alpha);
}

// Great-circle interpolation between a and b. Angles come from the normalized
// vectors; the weights are applied to the raw inputs. Accumulates in double.
template <std::floating_point T>
std::vector<T> slerp_vec(std::span<const T> a, std::span<const T> b, double alpha) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    detail::check_slerp_inputs(a.size(), b.size(), na, nb, alpha);

    double cos_theta = dot / (na * nb);
    cos_theta = std::clamp(cos_theta, -1.0, 1.0);
    const double theta = std::acos(cos_theta);
    const double sin_theta = std::sin(theta);

    double wa = 1.0 - alpha;
    double wb = alpha;
    if (sin_theta >= kSlerpParallelEps) {
        wa = std::sin((1.0 - alpha) * theta) / sin_theta;
        wb = std::sin(alpha * theta) / sin_theta;
    }
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = static_cast<T>(wa * a[i] + wb * b[i]);
    }
    return out;
}

template <std::floating_point T>
std::vector<T> slerp_vec(const std::vector<T>& a, const std::vector<T>& b, double alpha) {
    return slerp_vec<T>(std::span<const T>(a), std::span<const T>(b), alpha);
}

enum class SimInterp { Angle, Linear };

SimInterp parse_sim_interp(const std::string& name);
const char* to_string(SimInterp mode);

// Expected similarity between two cosine similarities. Angle mode treats each
// value as cos(angle) and interpolates the angle; Linear mode lerps the values.
double slerp_scalar_sim(double sa, double sb, double alpha, SimInterp mode = SimInterp::Angle);

}  // namespace chimera
