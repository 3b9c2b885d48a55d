#include "chimera/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <exception>
#include <future>
#include <thread>

#include "chimera/error.hpp"

namespace chimera {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_fraction(double v, const char* name) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorKind::InvalidArgument,
            std::string(name) + " must lie in [0,1]");
}

}  // namespace

void MorphConfig::validate() const {
    require(frames >= 1, ErrorKind::InvalidArgument, "frames must be >= 1");
    for (Stage s : kStages) {
        auto it = lambda.find(s);
        require(it != lambda.end(), ErrorKind::InvalidArgument,
                std::string("lambda_") + static_cast<char>(std::tolower(stage_letter(s))) + " missing");
        require(std::isfinite(it->second) && it->second >= 0.0, ErrorKind::InvalidArgument,
                std::string("lambda_") + static_cast<char>(std::tolower(stage_letter(s))) +
                    " must be finite and >= 0");
    }
    check_fraction(aci_mid_until, "aci_mid_until");
    check_fraction(aci_up_from, "aci_up_from");
    check_fraction(sap_stage_fraction, "sap_stage_fraction");
    require(std::isfinite(guidance), ErrorKind::InvalidArgument, "guidance must be finite");
    require(resolution > 0, ErrorKind::InvalidArgument, "resolution must be positive");
    require(workers >= 0, ErrorKind::InvalidArgument, "workers must be >= 0");
    (void)build_schedule(schedule);
}

Tensor ddim_step(const Tensor& x, const Tensor& eps, double ab_from, double ab_to) {
    require(x.shape == eps.shape, ErrorKind::Shape, "ddim_step: latent and noise shapes differ");
    require(ab_from > 0.0 && ab_from <= 1.0 && ab_to > 0.0 && ab_to <= 1.0, ErrorKind::InvalidArgument,
            "ddim_step: alpha_bar must lie in (0,1]");
    const double sf = std::sqrt(ab_from), nf = std::sqrt(1.0 - ab_from);
    const double st = std::sqrt(ab_to), nt = std::sqrt(1.0 - ab_to);
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double e = eps.data[i];
        const double x0 = (x.data[i] - nf * e) / sf;
        out.data[i] = static_cast<float>(st * x0 + nt * e);
    }
    return out;
}

LatentTrajectory invert_latent(const Tensor& z0, const Backend& backend, const NoiseSchedule& schedule,
                               FeatureCache* cache, const std::string& image_id, const TextConditioning& text) {
    require(z0.shape == backend.descriptor().latent_shape, ErrorKind::Shape,
            "invert: latent shape " + shape_to_string(z0.shape) + " does not match backend " +
                shape_to_string(backend.descriptor().latent_shape));
    LatentTrajectory traj;
    Tensor x = z0;
    double ab_prev = 1.0;
    for (int t : schedule.t_inv) {
        DenoiseHooks hooks;
        if (cache) {
            hooks.feature_tap = [&](StageId id, const Tensor& f) { cache->put(image_id, id, t, f); };
        }
        const Tensor eps = backend.predict_noise(x, t, text, hooks);
        const double ab = schedule.alpha_bar_at(t);
        x = ddim_step(x, eps, ab_prev, ab);
        ab_prev = ab;
        traj.latents.push_back(x);
        traj.timesteps.push_back(t);
    }
    return traj;
}

LatentTrajectory invert(const Image& image, const Backend& backend, const NoiseSchedule& schedule,
                        FeatureCache* cache, const std::string& image_id, const TextConditioning& text) {
    return invert_latent(backend.encode(image), backend, schedule, cache, image_id, text);
}

Tensor denoise_step(const Backend& backend, const NoiseSchedule& schedule, const Tensor& latent, int tau,
                    const TextConditioning& text, const DenoiseHooks& hooks) {
    require(tau >= 0 && tau < schedule.n_dng(), ErrorKind::InvalidArgument,
            "denoise_step: tau " + std::to_string(tau) + " outside [0, " + std::to_string(schedule.n_dng()) + ")");
    const int t = schedule.t_dng[static_cast<std::size_t>(tau)];
    const double ab = schedule.alpha_bar_at(t);
    const double ab_next = tau + 1 < schedule.n_dng()
                               ? schedule.alpha_bar_at(schedule.t_dng[static_cast<std::size_t>(tau + 1)])
                               : 1.0;
    const Tensor eps = backend.predict_noise(latent, t, text, hooks);
    return ddim_step(latent, eps, ab, ab_next);
}

LatentTrajectory denoise(const Backend& backend, const NoiseSchedule& schedule, const Tensor& latent,
                         const TextConditioning& text, const std::function<DenoiseHooks(int)>& hooks_for) {
    LatentTrajectory traj;
    Tensor x = latent;
    for (int tau = 0; tau < schedule.n_dng(); ++tau) {
        const DenoiseHooks hooks = hooks_for ? hooks_for(tau) : DenoiseHooks{};
        x = denoise_step(backend, schedule, x, tau, text, hooks);
        traj.latents.push_back(x);
        traj.timesteps.push_back(schedule.t_dng[static_cast<std::size_t>(tau)]);
    }
    return traj;
}

bool aci_stage_active(Stage stage, int tau, int n_dng, const AciParams& params) {
    switch (stage) {
        case Stage::D:
            return true;
        case Stage::M:
            return tau < params.mid_until * n_dng;
        case Stage::U:
            return tau >= params.up_from * n_dng;
    }
    return false;
}

std::map<StageId, Tensor> aci_residuals(CacheSource a, CacheSource b, double alpha, int tau,
                                        const AciParams& params, const IdmMap& idm) {
    require(tau >= 0 && tau < idm.n_dng(), ErrorKind::InvalidArgument, "aci_residuals: tau out of range");
    const int t = idm(tau);
    std::map<StageId, Tensor> out;
    for (const auto& [id, shape] : a.cache.shape_table()) {
        auto it = params.lambda.find(id.stage);
        const double lambda = it == params.lambda.end() ? 0.0 : it->second;
        if (lambda == 0.0 || !aci_stage_active(id.stage, tau, idm.n_dng(), params)) continue;
        const Tensor& ha = a.cache.get(a.image_id, id, t);
        const Tensor& hb = b.cache.get(b.image_id, id, t);
        require(ha.shape == hb.shape, ErrorKind::Shape, "aci_residuals: cache shapes differ for " + to_string(id));
        std::vector<float> blended = slerp_vec<float>(ha.values(), hb.values(), alpha);
        Tensor r(ha.shape, std::move(blended));
        for (auto& v : r.data) v = static_cast<float>(lambda * v);
        out.emplace(id, std::move(r));
    }
    return out;
}

bool sap_active(int tau, int n_dng, const MorphConfig& config) {
    return config.sap && tau < config.sap_stage_fraction * n_dng;
}

FeatureCache merge_caches(const FeatureCache& a, const FeatureCache& b) {
    FeatureCache out;
    for (const FeatureCache* c : {&a, &b}) {
        for (const auto& [id, shape] : c->shape_table()) out.declare_shape(id, shape);
        for (const auto& [key, value] : c->entries()) out.put(key.image_id, key.stage, key.t, value);
    }
    return out;
}

MorphResult generate_sequence(const Image& image_a, const Image& image_b, const PromptTriplet& prompts,
                              const MorphConfig& config, const Backend& backend) {
    config.validate();
    const auto total_start = Clock::now();
    const BackendDescriptor& desc = backend.descriptor();
    const NoiseSchedule schedule = build_schedule(config.schedule);
    require(schedule.t_max == desc.t_max, ErrorKind::InvalidArgument,
            "t_max " + std::to_string(schedule.t_max) + " does not match backend t_max " +
                std::to_string(desc.t_max));
    const IdmMap idm = schedule.idm();

    MorphResult result;
    result.sequence.config = config;
    result.sequence.prompts = prompts.text;
    result.sequence.alphas = interp_weights(config.frames);
    result.cache_a = FeatureCache(schedule.t_inv);
    result.cache_b = FeatureCache(schedule.t_inv);
    for (const auto& [id, shape] : desc.feature_shapes) {
        result.cache_a.declare_shape(id, shape);
        result.cache_b.declare_shape(id, shape);
    }

    const auto inv_start = Clock::now();
    const auto text_a = TextConditioning::single(prompts.e_a);
    const auto text_b = TextConditioning::single(prompts.e_b);
    auto run_a = [&] { return invert(image_a, backend, schedule, &result.cache_a, "A", text_a); };
    auto run_b = [&] { return invert(image_b, backend, schedule, &result.cache_b, "B", text_b); };
    if (desc.serial || config.workers == 1) {
        result.z_a = run_a().terminal();
        result.z_b = run_b().terminal();
    } else {
        auto fut_b = std::async(std::launch::async, run_b);
        result.z_a = run_a().terminal();
        result.z_b = fut_b.get().terminal();
    }
    result.cache_a.check_complete("A", schedule.t_inv);
    result.cache_b.check_complete("B", schedule.t_inv);
    result.timings.inversion_ms = ms_since(inv_start);

    const auto dng_start = Clock::now();
    const int K = config.frames;
    const AciParams aci{config.lambda, config.aci_mid_until, config.aci_up_from};
    const CacheSource src_a{result.cache_a, "A"};
    const CacheSource src_b{result.cache_b, "B"};
    result.z_k.resize(static_cast<std::size_t>(K));
    result.sequence.frames.resize(static_cast<std::size_t>(K));

    auto run_frame = [&](int k) {
        const double alpha = result.sequence.alphas.alphas[static_cast<std::size_t>(k)];
        Tensor zk(result.z_a.shape, slerp_vec<float>(result.z_a.values(), result.z_b.values(), alpha));
        TextConditioning text{prompts.e_a, prompts.e_b, alpha, config.branch_blend};
        auto hooks_for = [&](int tau) {
            DenoiseHooks hooks;
            if (config.aci) hooks.feature_residuals = aci_residuals(src_a, src_b, alpha, tau, aci, idm);
            if (sap_active(tau, schedule.n_dng(), config)) {
                hooks.attn_override = SapOverride{prompts.e_anchor, config.sap_layers};
            }
            return hooks;
        };
        const LatentTrajectory traj = denoise(backend, schedule, zk, text, hooks_for);
        result.sequence.frames[static_cast<std::size_t>(k)] = backend.decode(traj.terminal());
        result.z_k[static_cast<std::size_t>(k)] = std::move(zk);
    };

    int workers = config.workers > 0 ? config.workers : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, K);
    if (desc.serial) workers = 1;

    if (workers == 1) {
        for (int k = 0; k < K; ++k) run_frame(k);
    } else {
        std::atomic<int> next{0};
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (int k = next++; k < K; k = next++) run_frame(k);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                    next = K;
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    result.timings.denoise_ms = ms_since(dng_start);
    result.timings.total_ms = ms_since(total_start);
    return result;
}

}  // namespace chimera
