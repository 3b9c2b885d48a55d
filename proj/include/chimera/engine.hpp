#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "chimera/core_math.hpp"
#include "chimera/denoiser.hpp"
#include "chimera/feature_cache.hpp"
#include "chimera/image.hpp"
#include "chimera/prompting.hpp"
#include "chimera/schedule.hpp"

namespace chimera {

struct MorphConfig {
    int frames = 5;  // K
    std::map<Stage, double> lambda{{Stage::D, 0.4}, {Stage::M, 0.4}, {Stage::U, 0.4}};
    bool aci = true;
    double aci_mid_until = 0.5;  // M residuals while tau < aci_mid_until * N_dng
    double aci_up_from = 0.5;    // U residuals while tau >= aci_up_from * N_dng
    bool sap = true;
    double sap_stage_fraction = 0.5;  // SAP while tau < sap_stage_fraction * N_dng
    SapLayers sap_layers = SapLayers::All;
    BranchBlend branch_blend = BranchBlend::Linear;
    double guidance = 0.75;
    int resolution = 768;
    ScheduleParams schedule;
    std::uint64_t toy_seed = 42;
    int workers = 0;  // 0: hardware concurrency

    // Throws invalid-argument naming the offending field.
    void validate() const;
};

struct LatentTrajectory {
    std::vector<Tensor> latents;  // one per step, in step order
    std::vector<int> timesteps;

    std::size_t size() const { return latents.size(); }
    const Tensor& terminal() const { return latents.back(); }
};

// Deterministic DDIM update between two noise levels:
// x' = sqrt(ab_to) * (x - sqrt(1-ab_from) eps) / sqrt(ab_from) + sqrt(1-ab_to) eps.
Tensor ddim_step(const Tensor& x, const Tensor& eps, double ab_from, double ab_to);

// Inverts a clean latent along T_inv. Step i starts at the previous state
// (alpha_bar = 1 for the clean latent) and lands on T_inv[i], predicting noise
// at T_inv[i]. When cache is given every block output is stored under
// (image_id, block, T_inv[i]).
LatentTrajectory invert_latent(const Tensor& z0, const Backend& backend, const NoiseSchedule& schedule,
                               FeatureCache* cache, const std::string& image_id, const TextConditioning& text);

LatentTrajectory invert(const Image& image, const Backend& backend, const NoiseSchedule& schedule,
                        FeatureCache* cache, const std::string& image_id, const TextConditioning& text);

// One denoising step at T_dng[tau], landing on T_dng[tau+1] or on the clean
// latent after the last step.
Tensor denoise_step(const Backend& backend, const NoiseSchedule& schedule, const Tensor& latent, int tau,
                    const TextConditioning& text, const DenoiseHooks& hooks);

// Full denoising loop; hooks_for(tau) supplies per-step hooks (may be empty).
LatentTrajectory denoise(const Backend& backend, const NoiseSchedule& schedule, const Tensor& latent,
                         const TextConditioning& text, const std::function<DenoiseHooks(int)>& hooks_for = {});

struct AciParams {
    std::map<Stage, double> lambda;
    double mid_until = 0.5;
    double up_from = 0.5;
};

// Whether stage residuals are injected at step tau. D is always on.
bool aci_stage_active(Stage stage, int tau, int n_dng, const AciParams& params);

// lambda_S * slerp(H_A, H_B; alpha) at cache timestep idm(tau), for every block
// whose stage is active. Stages with lambda 0 are omitted.
std::map<StageId, Tensor> aci_residuals(CacheSource a, CacheSource b, double alpha, int tau,
                                        const AciParams& params, const IdmMap& idm);

bool sap_active(int tau, int n_dng, const MorphConfig& config);

struct PhaseTimings {
    double inversion_ms = 0.0;
    double denoise_ms = 0.0;
    double total_ms = 0.0;
};

struct MorphSequence {
    std::vector<Image> frames;
    InterpWeights alphas;
    MorphConfig config;
    PromptTexts prompts;
};

struct MorphResult {
    MorphSequence sequence;
    Tensor z_a;
    Tensor z_b;
    std::vector<Tensor> z_k;  // interpolated noise latents, one per frame
    FeatureCache cache_a;     // image id "A"
    FeatureCache cache_b;     // image id "B"
    PhaseTimings timings;
};

// Inverts A and B (A with caption A, B with caption B), then denoises
// z_k = slerp(z_A, z_B, alpha_k) for every frame with ACI residuals and SAP.
// Frames run on up to config.workers threads; a serial backend runs on one.
MorphResult generate_sequence(const Image& image_a, const Image& image_b, const PromptTriplet& prompts,
                              const MorphConfig& config, const Backend& backend);

// Both inversion caches in one, for persistence.
FeatureCache merge_caches(const FeatureCache& a, const FeatureCache& b);

}  // namespace chimera
