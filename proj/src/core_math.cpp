#include "chimera/core_math.hpp"

#include <algorithm>
#include <cmath>

namespace chimera {

InterpWeights interp_weights(int K) {
    require(K >= 1, ErrorKind::InvalidArgument, "interp_weights: K must be >= 1, got " + std::to_string(K));
    InterpWeights w;
    w.K = K;
    w.alphas.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        w.alphas[static_cast<std::size_t>(k)] = static_cast<double>(k + 1) / static_cast<double>(K + 1);
    }
    return w;
}

UnitInterval::UnitInterval(double v) : value_(v) {
    require(v >= 0.0 && v <= 1.0, ErrorKind::InvalidArgument, "value outside [0,1]: " + std::to_string(v));
}

UnitInterval clamp01(double x) {
    require(!std::isnan(x), ErrorKind::InvalidArgument, "clamp01: NaN input");
    return UnitInterval(std::min(1.0, std::max(0.0, x)));
}

namespace detail {

void check_slerp_inputs(std::size_t na, std::size_t nb, double norm_a, double norm_b, double alpha) {
    require(na == nb, ErrorKind::InvalidArgument,
            "slerp: length mismatch " + std::to_string(na) + " vs " + std::to_string(nb));
    require(norm_a > 0.0 && norm_b > 0.0, ErrorKind::InvalidArgument, "slerp: zero vector input");
    require(std::isfinite(norm_a) && std::isfinite(norm_b), ErrorKind::InvalidArgument, "slerp: non-finite input");
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::InvalidArgument,
            "slerp: alpha outside [0,1]: " + std::to_string(alpha));
}

}  // namespace detail

SimInterp parse_sim_interp(const std::string& name) {
    if (name == "angle") return SimInterp::Angle;
    if (name == "linear") return SimInterp::Linear;
    fail(ErrorKind::InvalidArgument, "unknown similarity interpolation mode '" + name + "'");
}

const char* to_string(SimInterp mode) {
    return mode == SimInterp::Angle ? "angle" : "linear";
}

namespace {

double clip_similarity(double s) {
    constexpr double tol = 1e-9;
    require(!std::isnan(s) && s >= -1.0 - tol && s <= 1.0 + tol, ErrorKind::InvalidArgument,
            "similarity outside [-1,1]: " + std::to_string(s));
    return std::clamp(s, -1.0, 1.0);
}

}  // namespace

double slerp_scalar_sim(double sa, double sb, double alpha, SimInterp mode) {
    sa = clip_similarity(sa);
    sb = clip_similarity(sb);
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::InvalidArgument,
            "slerp_scalar_sim: alpha outside [0,1]: " + std::to_string(alpha));
    if (mode == SimInterp::Linear) {
        return (1.0 - alpha) * sa + alpha * sb;
    }
    // Exact endpoints; acos/cos round trips are not bit-exact.
    if (alpha == 0.0) return sa;
    if (alpha == 1.0) return sb;
    const double angle = (1.0 - alpha) * std::acos(sa) + alpha * std::acos(sb);
    return std::clamp(std::cos(angle), std::min(sa, sb), std::max(sa, sb));
}

}  // namespace chimera
