#include "chimera/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "chimera/error.hpp"
#include "chimera/rng.hpp"

namespace chimera {

std::vector<StageId> BackendDescriptor::stage_ids() const {
    std::vector<StageId> ids;
    for (Stage s : kStages) {
        auto it = stage_blocks.find(s);
        const int n = it == stage_blocks.end() ? 0 : it->second;
        for (int b = 0; b < n; ++b) ids.push_back(StageId{s, b});
    }
    return ids;
}

void BackendDescriptor::validate() const {
    require(latent_shape.size() == 3 && element_count(latent_shape) > 0, ErrorKind::InvalidArgument,
            "backend '" + name + "': latent shape must be (C,H,W) with positive dims");
    require(image_channels > 0 && image_height > 0 && image_width > 0, ErrorKind::InvalidArgument,
            "backend '" + name + "': image geometry must be positive");
    for (Stage s : kStages) {
        auto it = stage_blocks.find(s);
        require(it != stage_blocks.end() && it->second > 0, ErrorKind::InvalidArgument,
                "backend '" + name + "': stage " + stage_letter(s) + " needs at least one block");
    }
    for (const auto& id : stage_ids()) {
        require(feature_shapes.contains(id), ErrorKind::InvalidArgument,
                "backend '" + name + "': no feature shape for " + to_string(id));
    }
    require(feature_shapes.size() == stage_ids().size(), ErrorKind::InvalidArgument,
            "backend '" + name + "': feature shapes declared for undeclared blocks");
    require(attn_dim > 0 && text_dim > 0, ErrorKind::InvalidArgument,
            "backend '" + name + "': attention and text widths must be positive");
    require(t_max > 0, ErrorKind::InvalidArgument, "backend '" + name + "': t_max must be positive");
}

SapLayers parse_sap_layers(const std::string& name) {
    if (name == "all") return SapLayers::All;
    if (name == "early") return SapLayers::Early;
    fail(ErrorKind::InvalidArgument, "unknown sap_layers mode '" + name + "'");
}

const char* to_string(SapLayers layers) {
    return layers == SapLayers::All ? "all" : "early";
}

// ---------------------------------------------------------------------------
// Toy backend

namespace {

constexpr std::size_t kLatentC = 4;
constexpr std::size_t kLatentHW = 8;
constexpr std::size_t kHidden = 8;
constexpr std::size_t kAttnDim = 8;
constexpr std::size_t kTimeDim = 8;
constexpr int kImageHW = 16;

// out_dim x in_dim weights with a bias.
struct Dense {
    std::size_t in = 0, out = 0;
    std::vector<double> w;
    std::vector<double> b;

    static Dense draw(SplitMix64& rng, std::size_t in, std::size_t out, bool bias) {
        Dense d;
        d.in = in;
        d.out = out;
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        d.w.resize(in * out);
        for (auto& v : d.w) v = rng.symmetric() * scale;
        d.b.assign(out, 0.0);
        if (bias) {
            for (auto& v : d.b) v = rng.symmetric() * scale;
        }
        return d;
    }

    double apply_row(std::size_t o, const double* x) const {
        double acc = b[o];
        for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[i];
        return acc;
    }
};

// Per-pixel channel mix over a (C,H,W) tensor.
Tensor mix_pixels(const Dense& d, const Tensor& x, bool activate) {
    const std::size_t h = x.shape[1], w = x.shape[2];
    Tensor out(Shape{d.out, h, w});
    std::vector<double> px(d.in);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
            for (std::size_t c = 0; c < d.in; ++c) px[c] = x.at(c, y, xx);
            for (std::size_t o = 0; o < d.out; ++o) {
                const double v = d.apply_row(o, px.data());
                out.at(o, y, xx) = static_cast<float>(activate ? std::tanh(v) : v);
            }
        }
    }
    return out;
}

Tensor avg_pool2(const Tensor& x) {
    const std::size_t c = x.shape[0], h = x.shape[1] / 2, w = x.shape[2] / 2;
    Tensor out(Shape{c, h, w});
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                const double s = static_cast<double>(x.at(k, 2 * y, 2 * xx)) + x.at(k, 2 * y, 2 * xx + 1) +
                                 x.at(k, 2 * y + 1, 2 * xx) + x.at(k, 2 * y + 1, 2 * xx + 1);
                out.at(k, y, xx) = static_cast<float>(0.25 * s);
            }
        }
    }
    return out;
}

Tensor upsample2(const Tensor& x) {
    const std::size_t c = x.shape[0], h = x.shape[1] * 2, w = x.shape[2] * 2;
    Tensor out(Shape{c, h, w});
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) out.at(k, y, xx) = x.at(k, y / 2, xx / 2);
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

// rows x in -> rows x out
Matrix project_rows(const Matrix& x, const Dense& d) {
    Matrix out(x.rows, d.out);
    std::vector<double> row(d.in);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t i = 0; i < d.in; ++i) row[i] = x(r, i);
        for (std::size_t o = 0; o < d.out; ++o) out(r, o) = static_cast<float>(d.apply_row(o, row.data()));
    }
    return out;
}

std::vector<double> time_embedding(int t) {
    std::vector<double> e(kTimeDim);
    for (std::size_t j = 0; j < kTimeDim / 2; ++j) {
        const double freq = std::pow(10000.0, -static_cast<double>(j) / (kTimeDim / 2));
        e[2 * j] = std::sin(t * freq);
        e[2 * j + 1] = std::cos(t * freq);
    }
    return e;
}

}  // namespace

struct ToyBackend::Weights {
    Dense stem, time, d0, d1, d2, m0, wq, wk, wv, wo, u0, u1, u2, head;
    double enc_mix[4][4] = {};  // orthogonal; decode uses the transpose
};

ToyBackend::ToyBackend(ToyOptions options) : options_(options), w_(std::make_unique<Weights>()) {
    require(options_.text_dim > 0, ErrorKind::InvalidArgument, "toy backend: text_dim must be positive");
    require(options_.t_max > 0, ErrorKind::InvalidArgument, "toy backend: t_max must be positive");

    desc_.name = "toy";
    desc_.latent_shape = {kLatentC, kLatentHW, kLatentHW};
    desc_.image_channels = 1;
    desc_.image_height = kImageHW;
    desc_.image_width = kImageHW;
    desc_.stage_blocks = {{Stage::D, 3}, {Stage::M, 1}, {Stage::U, 3}};
    desc_.feature_shapes = {
        {{Stage::D, 0}, {kHidden, 8, 8}}, {{Stage::D, 1}, {kHidden, 4, 4}}, {{Stage::D, 2}, {kHidden, 2, 2}},
        {{Stage::M, 0}, {kHidden, 2, 2}}, {{Stage::U, 0}, {kHidden, 2, 2}}, {{Stage::U, 1}, {kHidden, 4, 4}},
        {{Stage::U, 2}, {kHidden, 8, 8}},
    };
    desc_.cross_attention_sites = {{Stage::M, 0}};
    desc_.attn_dim = kAttnDim;
    desc_.text_dim = options_.text_dim;
    desc_.t_max = options_.t_max;
    desc_.validate();

    SplitMix64 rng(options_.seed);
    auto& w = *w_;
    w.stem = Dense::draw(rng, kLatentC, kHidden, true);
    w.time = Dense::draw(rng, kTimeDim, kHidden, false);
    w.d0 = Dense::draw(rng, kHidden, kHidden, true);
    w.d1 = Dense::draw(rng, kHidden, kHidden, true);
    w.d2 = Dense::draw(rng, kHidden, kHidden, true);
    w.m0 = Dense::draw(rng, kHidden, kHidden, true);
    w.wq = Dense::draw(rng, kHidden, kAttnDim, false);
    w.wk = Dense::draw(rng, options_.text_dim, kAttnDim, false);
    w.wv = Dense::draw(rng, options_.text_dim, kAttnDim, false);
    w.wo = Dense::draw(rng, kAttnDim, kHidden, false);
    w.u0 = Dense::draw(rng, kHidden, kHidden, true);
    w.u1 = Dense::draw(rng, kHidden, kHidden, true);
    w.u2 = Dense::draw(rng, kHidden, kHidden, true);
    w.head = Dense::draw(rng, kHidden, kLatentC, false);

    // Gram-Schmidt on a random 4x4 gives the orthogonal encoder mix.
    for (auto& row : w.enc_mix) {
        for (auto& v : row) v = rng.symmetric();
    }
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < i; ++j) {
            double dot = 0.0;
            for (int c = 0; c < 4; ++c) dot += w.enc_mix[i][c] * w.enc_mix[j][c];
            for (int c = 0; c < 4; ++c) w.enc_mix[i][c] -= dot * w.enc_mix[j][c];
        }
        double norm = 0.0;
        for (int c = 0; c < 4; ++c) norm += w.enc_mix[i][c] * w.enc_mix[i][c];
        norm = std::sqrt(norm);
        for (int c = 0; c < 4; ++c) w.enc_mix[i][c] /= norm;
    }
}

ToyBackend::~ToyBackend() = default;

Tensor ToyBackend::predict_noise(const Tensor& latent, int t, const TextConditioning& text,
                                 const DenoiseHooks& hooks) const {
    require(latent.shape == desc_.latent_shape, ErrorKind::Shape,
            "toy backend: latent shape " + shape_to_string(latent.shape) + ", expected " +
                shape_to_string(desc_.latent_shape));
    require(t >= 0 && t < desc_.t_max, ErrorKind::InvalidArgument,
            "toy backend: timestep " + std::to_string(t) + " outside [0, " + std::to_string(desc_.t_max) + ")");
    for (const auto& [id, residual] : hooks.feature_residuals) {
        auto it = desc_.feature_shapes.find(id);
        require(it != desc_.feature_shapes.end(), ErrorKind::InvalidArgument,
                "toy backend: residual for unknown block " + to_string(id));
        require(residual.shape == it->second, ErrorKind::Shape,
                "toy backend: residual for " + to_string(id) + " has shape " + shape_to_string(residual.shape) +
                    ", expected " + shape_to_string(it->second));
    }
    auto check_text = [&](const Matrix& m) {
        require(m.cols == desc_.text_dim || (m.rows == 0 && m.cols == 0), ErrorKind::Shape,
                "toy backend: text embedding width " + std::to_string(m.cols) + ", expected " +
                    std::to_string(desc_.text_dim));
    };
    check_text(text.branch_a);
    if (text.branch_b) check_text(*text.branch_b);
    if (hooks.attn_override) check_text(hooks.attn_override->anchor);

    const auto& w = *w_;
    auto finish_block = [&](StageId id, Tensor f) {
        if (hooks.feature_tap) hooks.feature_tap(id, f);
        if (auto it = hooks.feature_residuals.find(id); it != hooks.feature_residuals.end()) {
            for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] += it->second.data[i];
        }
        return f;
    };

    Tensor scaled = latent;
    for (auto& v : scaled.data) v *= options_.input_gain;
    Tensor h = mix_pixels(w.stem, scaled, false);
    {
        const auto temb = time_embedding(t);
        for (std::size_t c = 0; c < kHidden; ++c) {
            const auto bias = static_cast<float>(w.time.apply_row(c, temb.data()));
            for (std::size_t i = 0; i < kLatentHW * kLatentHW; ++i) h.data[c * kLatentHW * kLatentHW + i] += bias;
        }
    }

    const Tensor d0 = finish_block({Stage::D, 0}, mix_pixels(w.d0, h, true));
    const Tensor d1 = finish_block({Stage::D, 1}, mix_pixels(w.d1, avg_pool2(d0), true));
    const Tensor d2 = finish_block({Stage::D, 2}, mix_pixels(w.d2, avg_pool2(d1), true));

    Tensor m = mix_pixels(w.m0, d2, true);
    {
        // Cross-attention: one query token per spatial position.
        const std::size_t n_tok = m.shape[1] * m.shape[2];
        Matrix tokens(n_tok, kHidden);
        for (std::size_t c = 0; c < kHidden; ++c) {
            for (std::size_t i = 0; i < n_tok; ++i) tokens(i, c) = m.data[c * n_tok + i];
        }
        AttentionInputs in;
        in.q = project_rows(tokens, w.wq);
        const bool with_anchor = hooks.attn_override && hooks.attn_override->applies_to({Stage::M, 0});
        if (with_anchor) {
            in.k_anchor = project_rows(hooks.attn_override->anchor, w.wk);
            in.v_anchor = project_rows(hooks.attn_override->anchor, w.wv);
        }
        in.k_x = project_rows(text.branch_a, w.wk);
        in.v_x = project_rows(text.branch_a, w.wv);
        Matrix out = sap_attention(in);
        if (text.branch_b) {
            in.k_x = project_rows(*text.branch_b, w.wk);
            in.v_x = project_rows(*text.branch_b, w.wv);
            out = combine_branches(out, sap_attention(in), text.alpha, text.blend);
        }
        const Matrix delta = project_rows(out, w.wo);
        for (std::size_t c = 0; c < kHidden; ++c) {
            for (std::size_t i = 0; i < n_tok; ++i) m.data[c * n_tok + i] += options_.attn_scale * delta(i, c);
        }
    }
    m = finish_block({Stage::M, 0}, std::move(m));

    const Tensor u0 = finish_block({Stage::U, 0}, mix_pixels(w.u0, add(m, d2), true));
    const Tensor u1 = finish_block({Stage::U, 1}, mix_pixels(w.u1, add(upsample2(u0), d1), true));
    const Tensor u2 = finish_block({Stage::U, 2}, mix_pixels(w.u2, add(upsample2(u1), d0), true));

    Tensor eps = mix_pixels(w.head, u2, false);
    for (auto& v : eps.data) v *= options_.output_gain;
    return eps;
}

Tensor ToyBackend::encode(const Image& image) const {
    require(image.channels == desc_.image_channels && image.height == desc_.image_height &&
                image.width == desc_.image_width,
            ErrorKind::InvalidArgument,
            "toy backend: image must be " + std::to_string(desc_.image_channels) + "x" +
                std::to_string(desc_.image_height) + "x" + std::to_string(desc_.image_width));
    const auto& mix = w_->enc_mix;
    Tensor z(desc_.latent_shape);
    for (std::size_t y = 0; y < kLatentHW; ++y) {
        for (std::size_t x = 0; x < kLatentHW; ++x) {
            const int iy = static_cast<int>(2 * y), ix = static_cast<int>(2 * x);
            const double patch[4] = {2.0 * image.at(0, iy, ix) - 1.0, 2.0 * image.at(0, iy, ix + 1) - 1.0,
                                     2.0 * image.at(0, iy + 1, ix) - 1.0, 2.0 * image.at(0, iy + 1, ix + 1) - 1.0};
            for (std::size_t c = 0; c < kLatentC; ++c) {
                double acc = 0.0;
                for (int i = 0; i < 4; ++i) acc += mix[c][i] * patch[i];
                z.at(c, y, x) = static_cast<float>(acc);
            }
        }
    }
    return z;
}

Image ToyBackend::decode(const Tensor& latent) const {
    require(latent.shape == desc_.latent_shape, ErrorKind::Shape,
            "toy backend: latent shape " + shape_to_string(latent.shape) + ", expected " +
                shape_to_string(desc_.latent_shape));
    const auto& mix = w_->enc_mix;
    Image img(1, kImageHW, kImageHW);
    for (std::size_t y = 0; y < kLatentHW; ++y) {
        for (std::size_t x = 0; x < kLatentHW; ++x) {
            double patch[4] = {};
            for (int i = 0; i < 4; ++i) {
                for (std::size_t c = 0; c < kLatentC; ++c) patch[i] += mix[c][i] * latent.at(c, y, x);
            }
            const int iy = static_cast<int>(2 * y), ix = static_cast<int>(2 * x);
            const int offsets[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
            for (int i = 0; i < 4; ++i) {
                const double v = std::clamp(0.5 * (patch[i] + 1.0), 0.0, 1.0);
                img.at(0, iy + offsets[i][0], ix + offsets[i][1]) = static_cast<float>(v);
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Adapter

BackendDescriptor latent_diffusion_descriptor(int resolution) {
    require(resolution > 0 && resolution % 64 == 0, ErrorKind::InvalidArgument,
            "adapter: resolution must be a positive multiple of 64");
    const std::size_t s = static_cast<std::size_t>(resolution) / 8;
    BackendDescriptor d;
    d.name = "latent-diffusion-adapter";
    d.latent_shape = {4, s, s};
    d.image_channels = 3;
    d.image_height = resolution;
    d.image_width = resolution;
    d.stage_blocks = {{Stage::D, 4}, {Stage::M, 1}, {Stage::U, 4}};
    // Down-block outputs after their downsamplers; up-block outputs after their upsamplers.
    d.feature_shapes = {
        {{Stage::D, 0}, {320, s / 2, s / 2}},  {{Stage::D, 1}, {640, s / 4, s / 4}},
        {{Stage::D, 2}, {1280, s / 8, s / 8}}, {{Stage::D, 3}, {1280, s / 8, s / 8}},
        {{Stage::M, 0}, {1280, s / 8, s / 8}}, {{Stage::U, 0}, {1280, s / 4, s / 4}},
        {{Stage::U, 1}, {1280, s / 2, s / 2}}, {{Stage::U, 2}, {640, s, s}},
        {{Stage::U, 3}, {320, s, s}},
    };
    d.cross_attention_sites = {{Stage::D, 0}, {Stage::D, 1}, {Stage::D, 2}, {Stage::M, 0},
                               {Stage::U, 1}, {Stage::U, 2}, {Stage::U, 3}};
    d.attn_dim = 64;
    d.text_dim = 1024;
    d.t_max = 1000;
    d.serial = true;
    d.validate();
    return d;
}

AdapterBackend::AdapterBackend(BackendDescriptor desc, AdapterCallbacks callbacks, double guidance)
    : desc_(std::move(desc)), callbacks_(std::move(callbacks)), guidance_(guidance) {
    desc_.validate();
}

Tensor AdapterBackend::predict_noise(const Tensor& latent, int t, const TextConditioning& text,
                                     const DenoiseHooks& hooks) const {
    require(static_cast<bool>(callbacks_.predict_noise), ErrorKind::Backend,
            "adapter backend '" + desc_.name + "' has no model bound (predict_noise callback missing)");
    require(latent.shape == desc_.latent_shape, ErrorKind::Shape, "adapter: latent shape mismatch");
    require(t >= 0 && t < desc_.t_max, ErrorKind::InvalidArgument, "adapter: timestep out of range");
    return callbacks_.predict_noise(latent, t, text, hooks);
}

Tensor AdapterBackend::encode(const Image& image) const {
    require(static_cast<bool>(callbacks_.encode), ErrorKind::Backend,
            "adapter backend '" + desc_.name + "' has no model bound (encode callback missing)");
    require(image.height == desc_.image_height && image.width == desc_.image_width, ErrorKind::InvalidArgument,
            "adapter: image resolution mismatch");
    return callbacks_.encode(image);
}

Image AdapterBackend::decode(const Tensor& latent) const {
    require(static_cast<bool>(callbacks_.decode), ErrorKind::Backend,
            "adapter backend '" + desc_.name + "' has no model bound (decode callback missing)");
    return callbacks_.decode(latent);
}

double lipschitz_ratio(const Backend& backend, const Tensor& x, const Tensor& y, int t,
                       const TextConditioning& text) {
    const Tensor ex = backend.predict_noise(x, t, text, {});
    const Tensor ey = backend.predict_noise(y, t, text, {});
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double de = static_cast<double>(ex.data[i]) - ey.data[i];
        const double dx = static_cast<double>(x.data[i]) - y.data[i];
        num += de * de;
        den += dx * dx;
    }
    require(den > 0.0, ErrorKind::InvalidArgument, "lipschitz_ratio: x and y coincide");
    return std::sqrt(num / den);
}

}  // namespace chimera
