#pragma once

#include <string>
#include <vector>

#include "chimera/feature_cache.hpp"
#include "chimera/tensor.hpp"

namespace chimera {

enum class Band { Low, High };

inline constexpr double kDefaultCutoffFraction = 0.25;

// Radial frequency of DFT bin (u, v) on an h x w grid, in cycles per sample
// (Nyquist = 0.5). Low band: r < cutoff_fraction * 0.5.
double radial_frequency(std::size_t u, std::size_t v, std::size_t h, std::size_t w);
bool in_low_band(std::size_t u, std::size_t v, std::size_t h, std::size_t w, double cutoff_fraction);

struct BandMagnitudes {
    double low = 0.0;
    double high = 0.0;
    std::size_t low_bins = 0;   // per channel
    std::size_t high_bins = 0;  // per channel
};

// Per-channel 2-D DFT magnitudes of a (C,H,W) map, averaged over the bins of
// each band and over channels. A band with no bins reports 0.
BandMagnitudes band_magnitudes(const Tensor& feature_map, double cutoff_fraction = kDefaultCutoffFraction);
double band_energy(const Tensor& feature_map, Band band, double cutoff_fraction = kDefaultCutoffFraction);

enum class ProfileAxis { Layer, Timestep };

ProfileAxis parse_profile_axis(const std::string& name);
const char* to_string(ProfileAxis axis);

struct BandPoint {
    int position = 0;  // layer index or timestep
    std::string label;  // "D0", ... or the timestep
    double low = 0.0;
    double high = 0.0;
};

struct BandProfile {
    ProfileAxis axis = ProfileAxis::Layer;
    std::vector<BandPoint> points;
};

// Averages band magnitudes over all entries sharing a position. Layer positions
// follow forward order (D blocks, M, U blocks) over the blocks present.
BandProfile profile(const FeatureCache& cache, ProfileAxis axis, double cutoff_fraction = kDefaultCutoffFraction);

// "position,low,high" header plus one row per point.
std::string profile_csv(const BandProfile& profile);

}  // namespace chimera
