#include "chimera/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "chimera/error.hpp"

namespace chimera {

namespace {

constexpr double kEigenTolerance = 1e-6;

void check_sim(double v, const char* what) {
    require(std::isfinite(v) && v >= -1.0 && v <= 1.0, ErrorKind::InvalidArgument,
            std::string("similarity ") + what + " = " + std::to_string(v) + " outside [-1,1]");
}

double deviation_term(double measured, double expected) {
    return clamp01(1.0 - std::abs(measured - expected)).value();
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Symmetric PSD square root; eigenvalues in [-tol, 0) are clipped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    require(es.info() == Eigen::Success, ErrorKind::Numerical, std::string(what) + ": eigensolver failed");
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        require(ev(i) >= -kEigenTolerance, ErrorKind::Numerical,
                std::string(what) + ": eigenvalue " + std::to_string(ev(i)) + " is below -1e-6");
        ev(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

void SimilarityMatrix::validate() const {
    require(!s_a.empty(), ErrorKind::InvalidArgument, "similarity matrix has no frames");
    require(s_a.size() == s_b.size(), ErrorKind::InvalidArgument, "s_a and s_b differ in length");
    for (double v : s_a) check_sim(v, "s(A,I_k)");
    for (double v : s_b) check_sim(v, "s(B,I_k)");
    check_sim(s_aa, "s(A,A)");
    check_sim(s_ab, "s(A,B)");
    check_sim(s_ba, "s(B,A)");
    check_sim(s_bb, "s(B,B)");
}

SimilarityMatrix SimilarityMatrix::reversed() const {
    SimilarityMatrix r;
    r.s_a.assign(s_b.rbegin(), s_b.rend());
    r.s_b.assign(s_a.rbegin(), s_a.rend());
    r.s_aa = s_bb;
    r.s_ab = s_ba;
    r.s_ba = s_ab;
    r.s_bb = s_aa;
    return r;
}

GcsResult gcs(const SimilarityMatrix& sim, const InterpWeights& alphas, double gamma, SimInterp mode) {
    sim.validate();
    require(alphas.K == sim.K() && alphas.alphas.size() == sim.s_a.size(), ErrorKind::InvalidArgument,
            "gcs: interpolation weights do not match frame count");
    require(std::isfinite(gamma) && gamma >= 1.0, ErrorKind::InvalidArgument, "gcs: gamma must be >= 1");
    GcsResult r;
    for (std::size_t k = 0; k < sim.s_a.size(); ++k) {
        const double alpha = alphas.alphas[k];
        const double exp_a = slerp_scalar_sim(sim.s_aa, sim.s_ab, alpha, mode);
        const double exp_b = slerp_scalar_sim(sim.s_ba, sim.s_bb, alpha, mode);
        const double g = deviation_term(sim.s_a[k], exp_a) * deviation_term(sim.s_b[k], exp_b);
        r.g.push_back(g);
        r.g_tilde.push_back(std::pow(g, gamma));
    }
    r.gcs = mean(r.g_tilde);
    return r;
}

LcsResult lcs(const SimilarityMatrix& sim) {
    sim.validate();
    const std::size_t K = sim.s_a.size();
    LcsResult r;
    if (K == 1) {
        r.l = {1.0};
        r.lcs = 1.0;
        return r;
    }
    auto local = [&](const std::vector<double>& s, std::size_t k) {
        if (k == 0) return s[1];
        if (k == K - 1) return s[K - 2];
        return 0.5 * (s[k - 1] + s[k + 1]);
    };
    for (std::size_t k = 0; k < K; ++k) {
        r.l.push_back(deviation_term(sim.s_a[k], local(sim.s_a, k)) *
                      deviation_term(sim.s_b[k], local(sim.s_b, k)));
    }
    r.lcs = mean(r.l);
    return r;
}

double glcs(double gcs_value, double lcs_value) {
    require(gcs_value >= 0.0 && gcs_value <= 1.0 && lcs_value >= 0.0 && lcs_value <= 1.0,
            ErrorKind::InvalidArgument, "glcs: GCS and LCS must lie in [0,1]");
    return std::sqrt(gcs_value * lcs_value);
}

// ---------------------------------------------------------------------------

FeatureSet FeatureSet::from(std::vector<std::vector<double>> vectors) {
    require(!vectors.empty(), ErrorKind::InvalidArgument, "feature set is empty");
    const std::size_t d = vectors.front().size();
    require(d > 0, ErrorKind::InvalidArgument, "feature vectors have zero length");
    for (const auto& v : vectors) {
        require(v.size() == d, ErrorKind::InvalidArgument, "feature vectors differ in length");
    }
    FeatureSet fs;
    const std::size_t n = vectors.size();
    fs.mean.assign(d, 0.0);
    for (const auto& v : vectors) {
        for (std::size_t i = 0; i < d; ++i) fs.mean[i] += v[i];
    }
    for (auto& m : fs.mean) m /= static_cast<double>(n);
    fs.cov.assign(d * d, 0.0);
    if (n > 1) {
        for (const auto& v : vectors) {
            for (std::size_t i = 0; i < d; ++i) {
                const double di = v[i] - fs.mean[i];
                for (std::size_t j = 0; j < d; ++j) fs.cov[i * d + j] += di * (v[j] - fs.mean[j]);
            }
        }
        for (auto& c : fs.cov) c /= static_cast<double>(n - 1);
    }
    fs.vectors = std::move(vectors);
    return fs;
}

double frechet_distance(const FeatureSet& real, const FeatureSet& gen) {
    require(real.dim() > 0 && gen.dim() > 0, ErrorKind::InvalidArgument, "frechet_distance: empty feature set");
    require(real.dim() == gen.dim(), ErrorKind::InvalidArgument,
            "frechet_distance: dimensions differ (" + std::to_string(real.dim()) + " vs " +
                std::to_string(gen.dim()) + ")");
    const auto d = static_cast<Eigen::Index>(real.dim());
    const Eigen::Map<const Eigen::VectorXd> mu1(real.mean.data(), d), mu2(gen.mean.data(), d);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> s1(
        real.cov.data(), d, d),
        s2(gen.cov.data(), d, d);

    const Eigen::MatrixXd root1 = psd_sqrt(0.5 * (s1 + s1.transpose()), "frechet_distance (first covariance)");
    Eigen::MatrixXd inner = root1 * s2 * root1;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
    require(es.info() == Eigen::Success, ErrorKind::Numerical, "frechet_distance: eigensolver failed");
    double tr_sqrt = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double ev = es.eigenvalues()(i);
        require(ev >= -kEigenTolerance, ErrorKind::Numerical,
                "frechet_distance: covariance product has eigenvalue " + std::to_string(ev) + " below -1e-6");
        tr_sqrt += std::sqrt(std::max(ev, 0.0));
    }
    const double dist = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    return std::max(dist, 0.0);
}

// ---------------------------------------------------------------------------

std::vector<double> ImageEmbedder::features(const Image& img) const {
    const Image small = resize(to_luma(img), grid_, grid_);
    std::vector<double> f;
    f.reserve(small.pixels.size() + 1);
    for (float p : small.pixels) f.push_back(static_cast<double>(p) - 0.5);
    f.push_back(0.5);
    return f;
}

std::string ImageEmbedder::id() const {
    return "luma-grid" + std::to_string(grid_);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), ErrorKind::InvalidArgument, "cosine_similarity: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    require(na > 0.0 && nb > 0.0, ErrorKind::InvalidArgument, "cosine_similarity: zero vector");
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double EmbeddingCosine::similarity(const Image& x, const Image& y) const {
    return cosine_similarity(features_->features(x), features_->features(y));
}

std::string EmbeddingCosine::id() const {
    return "embed-cosine(" + features_->id() + ")";
}

double PixelRms::distance(const Image& x, const Image& y) const {
    require(x.same_geometry(y), ErrorKind::Shape, "pixel-rms: images differ in geometry");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.pixels.size(); ++i) {
        const double d = static_cast<double>(x.pixels[i]) - y.pixels[i];
        acc += d * d;
    }
    return x.pixels.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.pixels.size()));
}

std::unique_ptr<SimilarityProvider> make_similarity_provider(const std::string& name) {
    if (name == "embed-cosine") return std::make_unique<EmbeddingCosine>(std::make_shared<ImageEmbedder>());
    fail(ErrorKind::InvalidArgument, "unknown similarity provider '" + name + "'");
}

SimilarityMatrix similarity_matrix(const Image& a, const Image& b, const std::vector<Image>& frames,
                                   const SimilarityProvider& provider) {
    SimilarityMatrix sim;
    for (const auto& f : frames) {
        sim.s_a.push_back(provider.similarity(a, f));
        sim.s_b.push_back(provider.similarity(b, f));
    }
    sim.s_aa = provider.similarity(a, a);
    sim.s_ab = provider.similarity(a, b);
    sim.s_ba = provider.similarity(b, a);
    sim.s_bb = provider.similarity(b, b);
    return sim;
}

double fid_local(const std::vector<MorphPair>& pairs, const FeatureProvider& features) {
    require(!pairs.empty(), ErrorKind::InvalidArgument, "fid_local: no pairs");
    double total = 0.0;
    for (const auto& p : pairs) {
        require(!p.frames.empty(), ErrorKind::InvalidArgument, "fid_local: pair without frames");
        std::vector<std::vector<double>> gen;
        for (const auto& f : p.frames) gen.push_back(features.features(f));
        const auto real = FeatureSet::from({features.features(p.a), features.features(p.b)});
        total += frechet_distance(real, FeatureSet::from(std::move(gen)));
    }
    return total / static_cast<double>(pairs.size());
}

double fid_global(const std::vector<MorphPair>& pairs, const FeatureProvider& features) {
    require(!pairs.empty(), ErrorKind::InvalidArgument, "fid_global: no pairs");
    std::vector<std::vector<double>> real, gen;
    for (const auto& p : pairs) {
        require(!p.frames.empty(), ErrorKind::InvalidArgument, "fid_global: pair without frames");
        real.push_back(features.features(p.a));
        real.push_back(features.features(p.b));
        for (const auto& f : p.frames) gen.push_back(features.features(f));
    }
    return frechet_distance(FeatureSet::from(std::move(real)), FeatureSet::from(std::move(gen)));
}

double lpips_path(const std::vector<Image>& path, const DistanceProvider& distance) {
    require(path.size() >= 2, ErrorKind::InvalidArgument, "lpips_path: need at least two path points");
    double total = 0.0;
    for (std::size_t n = 1; n < path.size(); ++n) total += distance.distance(path[n - 1], path[n]);
    return total;
}

double ppl(const std::vector<Image>& path, const std::vector<Tensor>& latents, const DistanceProvider& distance) {
    require(path.size() >= 2, ErrorKind::InvalidArgument, "ppl: need at least two path points");
    require(latents.size() == path.size(), ErrorKind::InvalidArgument,
            "ppl: " + std::to_string(latents.size()) + " latents for " + std::to_string(path.size()) +
                " path points");
    double total = 0.0;
    for (std::size_t n = 1; n < path.size(); ++n) {
        require(latents[n].shape == latents[n - 1].shape, ErrorKind::Shape, "ppl: latent shapes differ");
        double step = 0.0;
        for (std::size_t i = 0; i < latents[n].data.size(); ++i) {
            const double d = static_cast<double>(latents[n].data[i]) - latents[n - 1].data[i];
            step += d * d;
        }
        const double l = distance.distance(path[n - 1], path[n]);
        if (step == 0.0) {
            require(l == 0.0, ErrorKind::Numerical,
                    "ppl: zero latent step with nonzero distance at path index " + std::to_string(n));
            continue;
        }
        total += l / step;
    }
    return total / static_cast<double>(path.size() - 1);
}

// ---------------------------------------------------------------------------

MetricReport evaluate_sequence(const Image& a, const Image& b, const std::vector<Image>& frames,
                               const std::vector<Tensor>& latents, const EvalProviders& providers,
                               const EvalOptions& options) {
    require(providers.similarity != nullptr, ErrorKind::InvalidArgument, "evaluate: similarity provider missing");
    require(!frames.empty(), ErrorKind::InvalidArgument, "evaluate: sequence has no frames");
    MetricReport r;
    r.K = static_cast<int>(frames.size());
    r.gamma = options.gamma;
    const SimilarityMatrix sim = similarity_matrix(a, b, frames, *providers.similarity);
    const GcsResult g = gcs(sim, interp_weights(r.K), options.gamma, options.sim_interp);
    const LcsResult l = lcs(sim);
    r.gcs = g.gcs;
    r.lcs = l.lcs;
    r.glcs = glcs(g.gcs, l.lcs);
    r.g = g.g;
    r.g_tilde = g.g_tilde;
    r.l = l.l;
    r.provider_ids.push_back(providers.similarity->id());

    if (providers.features) {
        const std::vector<MorphPair> pairs{{a, b, frames}};
        r.fid_local = fid_local(pairs, *providers.features);
        r.fid_global = fid_global(pairs, *providers.features);
        r.provider_ids.push_back(providers.features->id());
    }
    if (providers.distance) {
        std::vector<Image> path;
        path.push_back(a);
        path.insert(path.end(), frames.begin(), frames.end());
        path.push_back(b);
        r.lpips_path = lpips_path(path, *providers.distance);
        if (!latents.empty()) r.ppl = ppl(path, latents, *providers.distance);
        r.provider_ids.push_back(providers.distance->id());
    }
    return r;
}

nlohmann::json to_json(const MetricReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return nlohmann::json{
        {"k", r.K},
        {"gamma", r.gamma},
        {"gcs", r.gcs},
        {"lcs", r.lcs},
        {"glcs", r.glcs},
        {"gcs_display", r.gcs_display()},
        {"lcs_display", r.lcs_display()},
        {"glcs_display", r.glcs_display()},
        {"per_frame", {{"g", r.g}, {"g_tilde", r.g_tilde}, {"l", r.l}}},
        {"fid_local", opt(r.fid_local)},
        {"fid_global", opt(r.fid_global)},
        {"lpips_path", opt(r.lpips_path)},
        {"ppl", opt(r.ppl)},
        {"provider_ids", r.provider_ids},
    };
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::ostringstream os;
    os.precision(17);
    auto opt = [&](const std::optional<double>& v) {
        if (v) os << *v;
    };
    os << "sequence,k,gamma,gcs,lcs,glcs,glcs_display,fid_local,fid_global,lpips_path,ppl\n";
    for (const auto& [name, r] : rows) {
        os << name << ',' << r.K << ',' << r.gamma << ',' << r.gcs << ',' << r.lcs << ',' << r.glcs << ','
           << r.glcs_display() << ',';
        opt(r.fid_local);
        os << ',';
        opt(r.fid_global);
        os << ',';
        opt(r.lpips_path);
        os << ',';
        opt(r.ppl);
        os << '\n';
    }
    return os.str();
}

}  // namespace chimera
