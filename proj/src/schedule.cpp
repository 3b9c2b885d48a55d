#include "chimera/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chimera/error.hpp"

namespace chimera {

IdmMap::IdmMap(int n_inv, int n_dng, std::vector<int> t_inv)
    : n_inv_(n_inv), n_dng_(n_dng), t_inv_(std::move(t_inv)) {
    require(n_inv >= 1 && n_dng >= 1, ErrorKind::InvalidArgument, "IdmMap: step counts must be positive");
    require(static_cast<int>(t_inv_.size()) == n_inv, ErrorKind::InvalidArgument,
            "IdmMap: T_inv length does not match n_inv");
}

int IdmMap::index(int tau) const {
    require(tau >= 0 && tau < n_dng_, ErrorKind::InvalidArgument,
            "idm_map: tau " + std::to_string(tau) + " outside [0, " + std::to_string(n_dng_) + ")");
    if (n_dng_ == 1) return 0;
    const long long num = static_cast<long long>(tau) * (n_inv_ - 1);
    const long long den = n_dng_ - 1;
    return static_cast<int>((2 * num + den) / (2 * den));
}

double NoiseSchedule::alpha_bar_at(int t) const {
    require(t >= 0 && t < t_max, ErrorKind::InvalidArgument,
            "timestep " + std::to_string(t) + " outside [0, " + std::to_string(t_max) + ")");
    return alpha_bar[static_cast<std::size_t>(t)];
}

std::vector<int> spaced_timesteps(int t_max, int n) {
    const int stride = t_max / n;
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i * stride;
    return out;
}

NoiseSchedule build_schedule(int t_max, double beta_start, double beta_end, int n_inv, int n_dng) {
    require(t_max >= 1, ErrorKind::InvalidArgument, "build_schedule: t_max must be >= 1");
    require(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0, ErrorKind::InvalidArgument,
            "build_schedule: need 0 < beta_start < beta_end < 1");
    require(n_inv >= 1 && n_inv <= t_max, ErrorKind::InvalidArgument, "build_schedule: n_inv must be in [1, t_max]");
    require(n_dng >= 1 && n_dng <= t_max, ErrorKind::InvalidArgument, "build_schedule: n_dng must be in [1, t_max]");

    NoiseSchedule s;
    s.t_max = t_max;
    s.alpha_bar.resize(static_cast<std::size_t>(t_max));

    // scaled-linear: betas linear in sqrt space
    const double lo = std::sqrt(beta_start);
    const double hi = std::sqrt(beta_end);
    double prod = 1.0;
    for (int i = 0; i < t_max; ++i) {
        const double frac = t_max == 1 ? 0.0 : static_cast<double>(i) / (t_max - 1);
        const double root = lo + (hi - lo) * frac;
        prod *= 1.0 - root * root;
        s.alpha_bar[static_cast<std::size_t>(i)] = prod;
    }

    s.t_inv = spaced_timesteps(t_max, n_inv);
    s.t_dng = spaced_timesteps(t_max, n_dng);
    std::reverse(s.t_dng.begin(), s.t_dng.end());
    return s;
}

}  // namespace chimera
