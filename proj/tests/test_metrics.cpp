#include "doctest.h"

#include <cmath>
#include <numbers>

#include "chimera/error.hpp"
#include "chimera/metrics.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace chimera;
using testing_support::kind_of;
using testing_support::random_image;
using testing_support::rng_for;
using testing_support::uniform;

namespace {

SimilarityMatrix random_sim(std::mt19937_64& rng, int K) {
    SimilarityMatrix s;
    for (int k = 0; k < K; ++k) {
        s.s_a.push_back(uniform(rng, -1, 1));
        s.s_b.push_back(uniform(rng, -1, 1));
    }
    s.s_ab = uniform(rng, -1, 1);
    s.s_ba = uniform(rng, -1, 1);
    s.s_aa = uniform(rng, 0.5, 1);
    s.s_bb = uniform(rng, 0.5, 1);
    return s;
}

// On-trend similarities for s_aa = s_bb = 1, s_ab = s_ba = 0.
SimilarityMatrix on_trend(int K) {
    SimilarityMatrix s;
    const auto w = interp_weights(K);
    for (double a : w.alphas) {
        s.s_a.push_back(std::cos(a * std::numbers::pi / 2));
        s.s_b.push_back(std::cos((1.0 - a) * std::numbers::pi / 2));
    }
    return s;
}

std::vector<std::vector<double>> gaussian_set(std::mt19937_64& rng, std::size_t n, std::size_t d, double shift = 0.0) {
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> m(d, std::vector<double>(d));
    for (auto& row : m)
        for (auto& v : row) v = uniform(rng, -1, 1);
    std::vector<std::vector<double>> xs;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> z(d), x(d, shift);
        for (auto& v : z) v = nd(rng);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) x[r] += m[r][c] * z[c];
        xs.push_back(x);
    }
    return xs;
}

class ConstantDistance final : public DistanceProvider {
public:
    explicit ConstantDistance(double d) : d_(d) {}
    double distance(const Image&, const Image&) const override { return d_; }
    std::string id() const override { return "constant"; }

private:
    double d_;
};

class RawPixels final : public FeatureProvider {
public:
    std::vector<double> features(const Image& img) const override {
        return {img.pixels.begin(), img.pixels.end()};
    }
    std::string id() const override { return "raw"; }
};

Image flat(float v) {
    Image img(1, 2, 2);
    std::fill(img.pixels.begin(), img.pixels.end(), v);
    return img;
}

}  // namespace

TEST_CASE("gcs: on-trend sequence scores 1; one 0.5 deviation on side A gives 0.9") {
    const auto s = on_trend(5);
    const auto w = interp_weights(5);
    CHECK(gcs(s, w, 1.0).gcs == doctest::Approx(1.0).epsilon(1e-12));
    auto dev = s;
    dev.s_a[2] -= 0.5;
    const auto r = gcs(dev, w, 1.0);
    CHECK(r.gcs == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(r.g[2] == doctest::Approx(0.5));
}

TEST_CASE("lcs worked example, K=3") {
    SimilarityMatrix s;
    s.s_a = {0.9, 0.5, 0.1};
    s.s_b = {0.1, 0.5, 0.9};
    const auto r = lcs(s);
    CHECK(r.l[0] == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(r.l[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.l[2] == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(std::fabs(r.lcs - 1.72 / 3.0) < 1e-15);
    SimilarityMatrix one;
    one.s_a = {0.3};
    one.s_b = {0.2};
    CHECK(lcs(one).lcs == 1.0);
}

TEST_CASE("glcs combination") {
    CHECK(glcs(1.0, 1.0) == 1.0);
    CHECK(glcs(0.0, 0.7) == 0.0);
    CHECK(glcs(0.81, 0.49) == doctest::Approx(0.63).epsilon(1e-14));
    CHECK(kind_of([] { (void)glcs(1.2, 0.5); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("property: scores match the straight-line oracle") {
    auto& rng = rng_for(101);
    for (int trial = 0; trial < 200; ++trial) {
        const int K = std::vector<int>{1, 2, 3, 5, 14}[trial % 5];
        const auto s = random_sim(rng, K);
        const double gamma = 1.0 + trial % 3;
        const bool angle = trial % 2 == 0;
        const auto o = oracle::glcs(s.s_a, s.s_b, s.s_aa, s.s_ab, s.s_ba, s.s_bb, gamma, angle);
        const auto g = gcs(s, interp_weights(K), gamma, angle ? SimInterp::Angle : SimInterp::Linear);
        const auto l = lcs(s);
        CHECK(std::fabs(g.gcs - o.gcs) < 1e-9);
        CHECK(std::fabs(l.lcs - o.lcs) < 1e-9);
        CHECK(std::fabs(glcs(g.gcs, l.lcs) - o.glcs) < 1e-9);
        for (int k = 0; k < K; ++k) {
            CHECK(std::fabs(g.g[k] - o.g[k]) < 1e-9);
            CHECK(std::fabs(g.g_tilde[k] - std::pow(o.g[k], gamma)) < 1e-9);
        }
    }
}

TEST_CASE("property: bounds, reversal invariance and gamma monotonicity") {
    auto& rng = rng_for(103);
    for (int trial = 0; trial < 100; ++trial) {
        const int K = 1 + trial % 14;
        const auto s = random_sim(rng, K);
        const auto w = interp_weights(K);
        const auto g1 = gcs(s, w, 1.0), g3 = gcs(s, w, 3.0);
        const auto l = lcs(s);
        for (double v : {g1.gcs, l.lcs, glcs(g1.gcs, l.lcs)}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        const auto r = s.reversed();
        CHECK(std::fabs(gcs(r, w, 1.0).gcs - g1.gcs) < 1e-9);
        CHECK(std::fabs(lcs(r).lcs - l.lcs) < 1e-9);
        CHECK(g3.gcs <= g1.gcs + 1e-15);
        if (std::any_of(g1.g.begin(), g1.g.end(), [](double x) { return x > 0.0 && x < 1.0; })) CHECK(g3.gcs < g1.gcs);
    }
}

TEST_CASE("one abrupt jump lowers only the neighbourhood terms; larger jumps never raise LCS") {
    const int K = 9;
    double prev = 1.0 + 1e-12;
    for (double jump : {0.0, 0.05, 0.1, 0.2, 0.4, 0.8}) {
        SimilarityMatrix s;
        for (int k = 0; k < K; ++k) {
            s.s_a.push_back(k < 4 ? 0.8 : 0.8 - jump);
            s.s_b.push_back(k < 4 ? 0.2 : 0.2 + jump);
        }
        const auto r = lcs(s);
        const auto o = oracle::glcs(s.s_a, s.s_b, 1, 0, 0, 1, 1.0);
        for (int k = 0; k < K; ++k) {
            CHECK(r.l[k] == doctest::Approx(o.l[k]).epsilon(1e-12));
            if (k != 3 && k != 4) CHECK(r.l[k] == 1.0);
        }
        CHECK(r.lcs <= prev);
        prev = r.lcs;
    }
}

TEST_CASE("similarity matrix validation") {
    SimilarityMatrix s;
    CHECK(kind_of([&] { s.validate(); }) == ErrorKind::InvalidArgument);
    s.s_a = {0.1, 0.2};
    s.s_b = {0.1};
    CHECK(kind_of([&] { s.validate(); }) == ErrorKind::InvalidArgument);
    s.s_b = {0.1, 1.5};
    CHECK(kind_of([&] { (void)lcs(s); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("frechet distance agrees with both dense oracles") {
    auto& rng = rng_for(107);
    for (std::size_t d : {3u, 8u}) {
        for (int trial = 0; trial < 5; ++trial) {
            const auto x = gaussian_set(rng, 40, d), y = gaussian_set(rng, 40, d, 0.3);
            const double got = frechet_distance(FeatureSet::from(x), FeatureSet::from(y));
            CHECK(std::fabs(got - oracle::frechet_db(x, y)) < 1e-6);
            CHECK(std::fabs(got - oracle::frechet_jacobi(x, y)) < 1e-6);
            CHECK(std::fabs(got - frechet_distance(FeatureSet::from(y), FeatureSet::from(x))) < 1e-8);
            CHECK(got >= 0.0);
        }
    }
}

TEST_CASE("frechet distance: identical sets and pure mean shift") {
    auto& rng = rng_for(109);
    const auto x = gaussian_set(rng, 30, 4);
    CHECK(std::fabs(frechet_distance(FeatureSet::from(x), FeatureSet::from(x))) < 1e-8);
    auto shifted = x;
    const std::vector<double> delta{0.5, -1.0, 0.25, 2.0};
    for (auto& v : shifted)
        for (std::size_t i = 0; i < 4; ++i) v[i] += delta[i];
    CHECK(std::fabs(frechet_distance(FeatureSet::from(x), FeatureSet::from(shifted)) - 5.3125) < 1e-8);
    CHECK(kind_of([&] { (void)frechet_distance(FeatureSet::from(x), FeatureSet::from({{1.0, 2.0}})); }) ==
          ErrorKind::InvalidArgument);
    const auto single = FeatureSet::from({{1.0, 2.0}});
    CHECK(single.cov == std::vector<double>(4, 0.0));
}

TEST_CASE("fid_local and fid_global") {
    const RawPixels raw;
    const MorphPair dup{flat(0.2f), flat(0.8f), {flat(0.2f), flat(0.8f)}};
    CHECK(std::fabs(fid_local({dup}, raw)) < 1e-8);
    CHECK(std::fabs(fid_global({dup}, raw)) < 1e-8);
    // flat images give rank-one covariances c * ones(4,4); the Frechet distance
    // is then 4 (sqrt(c1) - sqrt(c2))^2 plus the mean term
    const MorphPair mid{flat(0.2f), flat(0.8f), {flat(0.5f)}};
    CHECK(fid_local({mid}, raw) == doctest::Approx(4 * 0.18).epsilon(1e-6));
    CHECK(fid_local({mid, dup}, raw) == doctest::Approx(0.5 * fid_local({mid}, raw)).epsilon(1e-9));
    // pooled: endpoints {.2,.8,.2,.8} var 0.12, frames {.5,.2,.8} var 0.09, equal means
    CHECK(fid_global({mid, dup}, raw) == doctest::Approx(4 * std::pow(std::sqrt(0.12) - std::sqrt(0.09), 2)).epsilon(1e-5));
}

TEST_CASE("lpips_path and ppl") {
    const PixelRms rms;
    const std::vector<Image> same{flat(0.3f), flat(0.3f), flat(0.3f)};
    const std::vector<Tensor> lat_same(3, Tensor(Shape{2}, 1.0f));
    CHECK(lpips_path(same, rms) == 0.0);
    CHECK(ppl(same, lat_same, rms) == 0.0);

    const ConstantDistance half(0.5);
    const std::vector<Image> two{flat(0.0f), flat(1.0f)};
    const std::vector<Tensor> lat{Tensor(Shape{2}, std::vector<float>{0.0f, 0.0f}),
                                  Tensor(Shape{2}, std::vector<float>{2.0f, 0.0f})};
    CHECK(ppl(two, lat, half) == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(lpips_path(two, half) == 0.5);
    CHECK(kind_of([&] { (void)ppl(two, lat_same, half); }) != ErrorKind::Numerical);
    const std::vector<Tensor> stuck(2, Tensor(Shape{2}, 1.0f));
    CHECK(kind_of([&] { (void)ppl(two, stuck, half); }) == ErrorKind::Numerical);
    CHECK(kind_of([&] { (void)lpips_path({flat(0.1f)}, rms); }) == ErrorKind::InvalidArgument);

    auto& rng = rng_for(113);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Image> path;
        for (int i = 0; i < 5; ++i) path.push_back(random_image(rng, 1, 4, 4));
        auto shorter = path;
        shorter.erase(shorter.begin() + 1 + trial % 3);
        CHECK(lpips_path(shorter, rms) <= lpips_path(path, rms) + 1e-12);
    }
}

TEST_CASE("embedding cosine provider") {
    const auto p = make_similarity_provider("embed-cosine");
    auto& rng = rng_for(127);
    const Image a = random_image(rng), b = random_image(rng);
    CHECK(p->similarity(a, a) == doctest::Approx(1.0));
    const double s = p->similarity(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(s == doctest::Approx(p->similarity(b, a)));
    CHECK(p->similarity(flat(0.0f), flat(0.0f)) == doctest::Approx(1.0));
    CHECK(p->id() == "embed-cosine(luma-grid8)");
    CHECK(kind_of([] { (void)make_similarity_provider("diffsim"); }) == ErrorKind::InvalidArgument);
    CHECK(ImageEmbedder(8).features(a).size() == 65);
}

TEST_CASE("evaluate_sequence on identical images scores 100") {
    auto& rng = rng_for(131);
    const Image a = random_image(rng);
    const EmbeddingCosine sim(std::make_shared<ImageEmbedder>());
    const ImageEmbedder feats;
    const PixelRms dist;
    const std::vector<Image> frames(5, a);
    const auto r = evaluate_sequence(a, a, frames, {}, {&sim, &feats, &dist}, {});
    CHECK(r.glcs_display() == doctest::Approx(100.0));
    CHECK(*r.lpips_path == 0.0);
    CHECK_FALSE(r.ppl.has_value());
    CHECK(std::fabs(r.glcs * r.glcs - r.gcs * r.lcs) < 1e-9);
    const auto j = to_json(r);
    CHECK(j["k"] == 5);
    CHECK(j["ppl"].is_null());
    CHECK(j["per_frame"]["g"].size() == 5);
    const auto csv = metrics_csv({{"seq", r}});
    CHECK(csv.substr(0, csv.find('\n')).find("glcs") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}
