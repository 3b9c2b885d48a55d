#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "chimera/core_math.hpp"
#include "chimera/image.hpp"
#include "chimera/tensor.hpp"

namespace chimera {

// Similarities of every frame to both endpoints, plus the endpoint cross terms.
struct SimilarityMatrix {
    std::vector<double> s_a;  // s(A, I_k)
    std::vector<double> s_b;  // s(B, I_k)
    double s_aa = 1.0;
    double s_ab = 0.0;
    double s_ba = 0.0;
    double s_bb = 1.0;

    int K() const { return static_cast<int>(s_a.size()); }
    // Throws invalid-argument for length mismatch, K == 0 or values outside [-1,1].
    void validate() const;
    // Frames reversed and the endpoints swapped.
    SimilarityMatrix reversed() const;
};

struct GcsResult {
    double gcs = 0.0;
    std::vector<double> g;        // per-frame product of both sides
    std::vector<double> g_tilde;  // g^gamma
};

GcsResult gcs(const SimilarityMatrix& sim, const InterpWeights& alphas, double gamma,
              SimInterp mode = SimInterp::Angle);

struct LcsResult {
    double lcs = 0.0;
    std::vector<double> l;
};

// K == 1 gives LCS 1 with l = {1}.
LcsResult lcs(const SimilarityMatrix& sim);

double glcs(double gcs_value, double lcs_value);

// ---------------------------------------------------------------------------
// Feature statistics

struct FeatureSet {
    std::vector<std::vector<double>> vectors;
    std::vector<double> mean;
    std::vector<double> cov;  // dim x dim, row-major, unbiased; zero for one vector

    std::size_t dim() const { return mean.size(); }
    static FeatureSet from(std::vector<std::vector<double>> vectors);
};

// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
double frechet_distance(const FeatureSet& real, const FeatureSet& gen);

// ---------------------------------------------------------------------------
// Providers

class FeatureProvider {
public:
    virtual ~FeatureProvider() = default;
    virtual std::vector<double> features(const Image& img) const = 0;
    virtual std::string id() const = 0;
};

class SimilarityProvider {
public:
    virtual ~SimilarityProvider() = default;
    // In [-1, 1].
    virtual double similarity(const Image& x, const Image& y) const = 0;
    virtual std::string id() const = 0;
};

class DistanceProvider {
public:
    virtual ~DistanceProvider() = default;
    virtual double distance(const Image& x, const Image& y) const = 0;
    virtual std::string id() const = 0;
};

// Luma downsampled to grid x grid by area averaging, centered at 0.5, with a
// constant 0.5 component appended so no embedding is the zero vector.
class ImageEmbedder final : public FeatureProvider {
public:
    explicit ImageEmbedder(int grid = 8) : grid_(grid) {}
    std::vector<double> features(const Image& img) const override;
    std::string id() const override;

private:
    int grid_;
};

class EmbeddingCosine final : public SimilarityProvider {
public:
    explicit EmbeddingCosine(std::shared_ptr<const FeatureProvider> features) : features_(std::move(features)) {}
    double similarity(const Image& x, const Image& y) const override;
    std::string id() const override;

private:
    std::shared_ptr<const FeatureProvider> features_;
};

// Root mean square pixel difference; images must share geometry.
class PixelRms final : public DistanceProvider {
public:
    double distance(const Image& x, const Image& y) const override;
    std::string id() const override { return "pixel-rms"; }
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Named similarity provider; "embed-cosine" is the only desk-scale one.
std::unique_ptr<SimilarityProvider> make_similarity_provider(const std::string& name);

SimilarityMatrix similarity_matrix(const Image& a, const Image& b, const std::vector<Image>& frames,
                                   const SimilarityProvider& provider);

struct MorphPair {
    Image a;
    Image b;
    std::vector<Image> frames;
};

double fid_local(const std::vector<MorphPair>& pairs, const FeatureProvider& features);
double fid_global(const std::vector<MorphPair>& pairs, const FeatureProvider& features);

// Sum of distances between consecutive path points.
double lpips_path(const std::vector<Image>& path, const DistanceProvider& distance);

// Mean of L(J_{n-1}, J_n) / ||w_{n-1} - w_n||^2 along the path. A zero latent
// step contributes 0 when the images match too, otherwise numerical-error.
double ppl(const std::vector<Image>& path, const std::vector<Tensor>& latents, const DistanceProvider& distance);

// ---------------------------------------------------------------------------
// Report

struct MetricReport {
    int K = 0;
    double gamma = 1.0;
    double gcs = 0.0;
    double lcs = 0.0;
    double glcs = 0.0;
    std::vector<double> g;
    std::vector<double> g_tilde;
    std::vector<double> l;
    std::optional<double> fid_local;
    std::optional<double> fid_global;
    std::optional<double> lpips_path;
    std::optional<double> ppl;
    std::vector<std::string> provider_ids;

    double glcs_display() const { return 100.0 * glcs; }
    double gcs_display() const { return 100.0 * gcs; }
    double lcs_display() const { return 100.0 * lcs; }
};

struct EvalOptions {
    double gamma = 1.0;
    SimInterp sim_interp = SimInterp::Angle;
};

struct EvalProviders {
    const SimilarityProvider* similarity = nullptr;
    const FeatureProvider* features = nullptr;  // optional, enables FID
    const DistanceProvider* distance = nullptr;  // optional, enables LPIPS path and PPL
};

// latents, if non-empty, hold K+2 entries along [A, frames, B] and enable PPL.
MetricReport evaluate_sequence(const Image& a, const Image& b, const std::vector<Image>& frames,
                               const std::vector<Tensor>& latents, const EvalProviders& providers,
                               const EvalOptions& options);

nlohmann::json to_json(const MetricReport& report);
// Header plus one row per sequence.
std::string metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace chimera
