#pragma once

#include <vector>

namespace chimera {

struct ScheduleParams {
    int t_max = 1000;
    double beta_start = 0.00085;
    double beta_end = 0.012;
    int n_inv = 50;
    int n_dng = 50;
};

// Maps a denoising step index to a cached inversion timestep.
class IdmMap {
public:
    IdmMap(int n_inv, int n_dng, std::vector<int> t_inv);

    int n_inv() const { return n_inv_; }
    int n_dng() const { return n_dng_; }

    // round(tau * (n_inv-1) / (n_dng-1)), half away from zero, in exact
    // integer arithmetic. n_dng == 1 maps to index 0.
    int index(int tau) const;
    int operator()(int tau) const { return t_inv_[static_cast<std::size_t>(index(tau))]; }

private:
    int n_inv_;
    int n_dng_;
    std::vector<int> t_inv_;
};

struct NoiseSchedule {
    int t_max = 0;
    std::vector<double> alpha_bar;  // cumulative product of (1 - beta), length t_max
    std::vector<int> t_inv;         // ascending
    std::vector<int> t_dng;         // descending

    int n_inv() const { return static_cast<int>(t_inv.size()); }
    int n_dng() const { return static_cast<int>(t_dng.size()); }
    double alpha_bar_at(int t) const;
    IdmMap idm() const { return IdmMap(n_inv(), n_dng(), t_inv); }
};

NoiseSchedule build_schedule(int t_max, double beta_start, double beta_end, int n_inv, int n_dng);

inline NoiseSchedule build_schedule(const ScheduleParams& p) {
    return build_schedule(p.t_max, p.beta_start, p.beta_end, p.n_inv, p.n_dng);
}

// Evenly spaced ascending subset of [0, t_max): i * (t_max / n).
std::vector<int> spaced_timesteps(int t_max, int n);

}  // namespace chimera
