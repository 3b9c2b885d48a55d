#include "chimera/analysis.hpp"

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <fftw3.h>

#include "chimera/error.hpp"

namespace chimera {

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

double signed_freq(std::size_t k, std::size_t n) {
    const auto ki = static_cast<double>(k);
    const auto ni = static_cast<double>(n);
    return k <= n / 2 ? ki / ni : (ki - ni) / ni;
}

}  // namespace

double radial_frequency(std::size_t u, std::size_t v, std::size_t h, std::size_t w) {
    const double fy = signed_freq(u, h), fx = signed_freq(v, w);
    return std::sqrt(fy * fy + fx * fx);
}

bool in_low_band(std::size_t u, std::size_t v, std::size_t h, std::size_t w, double cutoff_fraction) {
    return radial_frequency(u, v, h, w) < cutoff_fraction * 0.5;
}

BandMagnitudes band_magnitudes(const Tensor& feature_map, double cutoff_fraction) {
    require(feature_map.shape.size() == 3, ErrorKind::InvalidArgument, "band analysis needs a (C,H,W) map");
    const std::size_t c = feature_map.shape[0], h = feature_map.shape[1], w = feature_map.shape[2];
    require(c >= 1 && h >= 2 && w >= 2, ErrorKind::InvalidArgument,
            "band analysis needs spatial dims >= 2, got " + shape_to_string(feature_map.shape));
    require(cutoff_fraction > 0.0 && cutoff_fraction < 1.0, ErrorKind::InvalidArgument,
            "cutoff_fraction must lie in (0,1)");

    const std::size_t n = h * w;
    fftw_complex* in = fftw_alloc_complex(n);
    fftw_complex* out = fftw_alloc_complex(n);
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), in, out, FFTW_FORWARD, FFTW_ESTIMATE);
    }

    // Bin masks are index-based on the unshifted spectrum; centering only
    // relabels bins and does not change membership.
    std::vector<char> low(n);
    BandMagnitudes r;
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < w; ++v) {
            low[u * w + v] = in_low_band(u, v, h, w, cutoff_fraction) ? 1 : 0;
            (low[u * w + v] ? r.low_bins : r.high_bins) += 1;
        }
    }

    double low_sum = 0.0, high_sum = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < n; ++i) {
            in[i][0] = feature_map.data[ch * n + i];
            in[i][1] = 0.0;
        }
        fftw_execute(plan);
        for (std::size_t i = 0; i < n; ++i) {
            const double mag = std::hypot(out[i][0], out[i][1]);
            (low[i] ? low_sum : high_sum) += mag;
        }
    }
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);

    if (r.low_bins > 0) r.low = low_sum / static_cast<double>(r.low_bins * c);
    if (r.high_bins > 0) r.high = high_sum / static_cast<double>(r.high_bins * c);
    return r;
}

double band_energy(const Tensor& feature_map, Band band, double cutoff_fraction) {
    const BandMagnitudes m = band_magnitudes(feature_map, cutoff_fraction);
    return band == Band::Low ? m.low : m.high;
}

ProfileAxis parse_profile_axis(const std::string& name) {
    if (name == "layer") return ProfileAxis::Layer;
    if (name == "timestep") return ProfileAxis::Timestep;
    fail(ErrorKind::InvalidArgument, "unknown profile axis '" + name + "'");
}

const char* to_string(ProfileAxis axis) {
    return axis == ProfileAxis::Layer ? "layer" : "timestep";
}

BandProfile profile(const FeatureCache& cache, ProfileAxis axis, double cutoff_fraction) {
    require(!cache.empty(), ErrorKind::InvalidArgument, "profile: cache is empty");

    std::map<StageId, int> layer_index;
    if (axis == ProfileAxis::Layer) {
        std::set<StageId> present;
        for (const auto& [key, value] : cache.entries()) present.insert(key.stage);
        int i = 0;
        for (const auto& id : present) layer_index[id] = i++;  // StageId order is D.., M.., U..
    }

    struct Acc {
        std::string label;
        double low = 0.0, high = 0.0;
        int n = 0;
    };
    std::map<int, Acc> acc;
    for (const auto& [key, value] : cache.entries()) {
        const BandMagnitudes m = band_magnitudes(value, cutoff_fraction);
        const int pos = axis == ProfileAxis::Layer ? layer_index.at(key.stage) : key.t;
        Acc& a = acc[pos];
        a.label = axis == ProfileAxis::Layer ? to_string(key.stage) : std::to_string(key.t);
        a.low += m.low;
        a.high += m.high;
        a.n += 1;
    }

    BandProfile p;
    p.axis = axis;
    for (const auto& [pos, a] : acc) {
        p.points.push_back(BandPoint{pos, a.label, a.low / a.n, a.high / a.n});
    }
    return p;
}

std::string profile_csv(const BandProfile& profile) {
    std::ostringstream os;
    os.precision(17);
    os << "position,low,high\n";
    for (const auto& pt : profile.points) os << pt.label << ',' << pt.low << ',' << pt.high << '\n';
    return os.str();
}

}  // namespace chimera
