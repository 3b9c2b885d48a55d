#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chimera/image.hpp"
#include "chimera/prompting.hpp"
#include "chimera/stage.hpp"
#include "chimera/tensor.hpp"

namespace chimera {

struct BackendDescriptor {
    std::string name;
    Shape latent_shape;  // (channels, height, width)
    int image_channels = 0;
    int image_height = 0;
    int image_width = 0;
    std::map<Stage, int> stage_blocks;
    std::map<StageId, Shape> feature_shapes;
    std::vector<StageId> cross_attention_sites;
    std::size_t attn_dim = 0;  // d in softmax(QK^T/sqrt(d))
    std::size_t text_dim = 0;  // width of text-embedding rows
    int t_max = 1000;
    bool serial = false;  // predict_noise must not be called concurrently

    // All stage blocks in forward order: D ascending, M, U ascending.
    std::vector<StageId> stage_ids() const;
    void validate() const;
};

enum class SapLayers { All, Early };

SapLayers parse_sap_layers(const std::string& name);
const char* to_string(SapLayers layers);

// Text conditioning for one denoising pass. With branch_b present, every
// cross-attention site evaluates both endpoint branches and mixes them by alpha.
struct TextConditioning {
    Matrix branch_a;
    std::optional<Matrix> branch_b;
    double alpha = 0.0;
    BranchBlend blend = BranchBlend::Linear;

    static TextConditioning single(Matrix e) { return TextConditioning{std::move(e), std::nullopt, 0.0}; }
};

// Anchor rows appended to the key/value set of each endpoint branch.
struct SapOverride {
    Matrix anchor;  // text rows, may be empty
    SapLayers layers = SapLayers::All;

    // Early mode covers down and mid sites only.
    bool applies_to(StageId site) const { return layers == SapLayers::All || site.stage != Stage::U; }
};

struct DenoiseHooks {
    // Called once per block, forward order, with the block output before any residual.
    std::function<void(StageId, const Tensor&)> feature_tap;
    // Added to the block output; the sum feeds every consumer of that block.
    std::map<StageId, Tensor> feature_residuals;
    std::optional<SapOverride> attn_override;
};

class Backend {
public:
    virtual ~Backend() = default;

    virtual const BackendDescriptor& descriptor() const = 0;

    // Predicted noise with the latent's shape. Throws shape-error for a wrong
    // latent or residual shape, invalid-argument for t outside [0, t_max).
    virtual Tensor predict_noise(const Tensor& latent, int t, const TextConditioning& text,
                                 const DenoiseHooks& hooks) const = 0;

    virtual Tensor encode(const Image& image) const = 0;
    virtual Image decode(const Tensor& latent) const = 0;
};

// ---------------------------------------------------------------------------
// Toy backend
//
// Latent 4x8x8, hidden width 8. Blocks and output resolutions:
//   stem  mix 4->8 of input_gain*latent, plus a timestep bias  8x8
//   D0    mix + tanh                                           8x8
//   D1    2x2 average pool, mix + tanh                         4x4
//   D2    2x2 average pool, mix + tanh                         2x2
//   M0    mix + tanh, then cross-attention over the 4 tokens   2x2
//   U0    mix + tanh of (M0 + D2)                              2x2
//   U1    nearest 2x upsample, mix + tanh of (up(U0) + D1)     4x4
//   U2    nearest 2x upsample, mix + tanh of (up(U1) + D0)     8x8
//   head  mix 8->4, scaled by output_gain
// Images are 1x16x16. encode() patchifies 2x2 -> 4 channels, maps [0,1] to
// [-1,1] and applies a fixed orthogonal 4x4 mix; decode() inverts and clips.
//
// Weights are drawn from SplitMix64(seed) in this order: stem, time projection,
// D0..D2, M0, attention (Wq, Wk, Wv, Wo), U0..U2, head, then the encoder mix
// (Gram-Schmidt of a uniform 4x4). Each mix matrix is drawn row-major
// (out x in) followed by its bias; the time projection, attention and head
// have no bias. Every value is uniform in [-1,1) scaled by 1/sqrt(fan_in).
struct ToyOptions {
    std::uint64_t seed = 42;
    std::size_t text_dim = 16;
    int t_max = 1000;
    float input_gain = 0.05f;  // latent scale entering the stem
    float output_gain = 0.2f;
    float attn_scale = 1.0f;  // scalar blend of the attention output into M0
};

class ToyBackend final : public Backend {
public:
    explicit ToyBackend(ToyOptions options = {});
    ~ToyBackend() override;

    const BackendDescriptor& descriptor() const override { return desc_; }
    Tensor predict_noise(const Tensor& latent, int t, const TextConditioning& text,
                         const DenoiseHooks& hooks) const override;
    Tensor encode(const Image& image) const override;
    Image decode(const Tensor& latent) const override;

    const ToyOptions& options() const { return options_; }

private:
    struct Weights;

    ToyOptions options_;
    BackendDescriptor desc_;
    std::unique_ptr<Weights> w_;
};

// ---------------------------------------------------------------------------
// Real-backbone adapter contract
//
// A latent-diffusion U-Net (768x768, SD-2.x layout) plugs in by providing the
// three callbacks. The descriptor below declares where hooks attach: one tap
// per down/up block output and the mid block, cross-attention in every block
// that has it. Residual shapes follow feature_shapes.
struct AdapterCallbacks {
    std::function<Tensor(const Tensor&, int, const TextConditioning&, const DenoiseHooks&)> predict_noise;
    std::function<Tensor(const Image&)> encode;
    std::function<Image(const Tensor&)> decode;
};

BackendDescriptor latent_diffusion_descriptor(int resolution = 768);

class AdapterBackend final : public Backend {
public:
    AdapterBackend(BackendDescriptor desc, AdapterCallbacks callbacks, double guidance = 0.75);

    const BackendDescriptor& descriptor() const override { return desc_; }
    double guidance() const { return guidance_; }
    Tensor predict_noise(const Tensor& latent, int t, const TextConditioning& text,
                         const DenoiseHooks& hooks) const override;
    Tensor encode(const Image& image) const override;
    Image decode(const Tensor& latent) const override;

private:
    BackendDescriptor desc_;
    AdapterCallbacks callbacks_;
    double guidance_;
};

// Empirical Lipschitz ratio ||eps(x)-eps(y)|| / ||x-y|| at one timestep.
double lipschitz_ratio(const Backend& backend, const Tensor& x, const Tensor& y, int t, const TextConditioning& text);

}  // namespace chimera
