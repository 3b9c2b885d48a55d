#include "doctest.h"

#include <cmath>
#include <vector>

#include "chimera/denoiser.hpp"
#include "chimera/error.hpp"
#include "support/helpers.hpp"

using namespace chimera;
using testing_support::kind_of;
using testing_support::random_image;
using testing_support::random_tensor;
using testing_support::rng_for;

namespace {

TextConditioning cat_text() {
    return TextConditioning::single(ToyTextEncoder().encode("a cat"));
}

}  // namespace

TEST_CASE("toy descriptor layout") {
    const ToyBackend b;
    const auto& d = b.descriptor();
    CHECK(d.latent_shape == Shape{4, 8, 8});
    CHECK(d.stage_blocks.at(Stage::D) == 3);
    CHECK(d.stage_blocks.at(Stage::M) == 1);
    CHECK(d.stage_blocks.at(Stage::U) == 3);
    const auto ids = d.stage_ids();
    REQUIRE(ids.size() == 7);
    CHECK(ids.front() == StageId{Stage::D, 0});
    CHECK(ids[3] == StageId{Stage::M, 0});
    CHECK(ids.back() == StageId{Stage::U, 2});
    CHECK(d.feature_shapes.at({Stage::D, 1}) == Shape{8, 4, 4});
    CHECK(d.feature_shapes.at({Stage::U, 2}) == Shape{8, 8, 8});
    CHECK_FALSE(d.serial);
}

TEST_CASE("toy golden values, seed 42, zero latent, t=0") {
    const ToyBackend b;
    const Tensor eps = b.predict_noise(Tensor(Shape{4, 8, 8}), 0, cat_text(), {});
    CHECK(eps.data[0] == doctest::Approx(-0.0638109818).epsilon(1e-6));
    CHECK(eps.data[63] == doctest::Approx(-0.0638109818).epsilon(1e-6));
    CHECK(eps.data[64] == doctest::Approx(-0.0389470756).epsilon(1e-6));
    CHECK(eps.data[255] == doctest::Approx(0.0366970152).epsilon(1e-6));
}

TEST_CASE("toy encode of a black image is a frozen latent") {
    const ToyBackend b;
    const Tensor z = b.encode(Image(1, 16, 16));
    CHECK(z.data[0] == doctest::Approx(-0.173650503).epsilon(1e-6));
    CHECK(z.data[64] == doctest::Approx(-1.47065866).epsilon(1e-6));
    CHECK(z.data[128] == doctest::Approx(1.01718986).epsilon(1e-6));
    CHECK(z.data[192] == doctest::Approx(-0.878825009).epsilon(1e-6));
    // every 2x2 patch of a constant image maps to the same latent pixel
    for (std::size_t c = 0; c < 4; ++c) CHECK(z.at(c, 5, 3) == z.at(c, 0, 0));
}

TEST_CASE("toy predict_noise is deterministic and seed-dependent") {
    auto& rng = rng_for(21);
    const Tensor x = random_tensor(rng, {4, 8, 8});
    const ToyBackend a, b;
    CHECK(bit_identical(a.predict_noise(x, 500, cat_text(), {}), b.predict_noise(x, 500, cat_text(), {})));
    const ToyBackend other(ToyOptions{.seed = 7});
    CHECK_FALSE(bit_identical(a.predict_noise(x, 500, cat_text(), {}), other.predict_noise(x, 500, cat_text(), {})));
    CHECK_FALSE(bit_identical(a.predict_noise(x, 500, cat_text(), {}), a.predict_noise(x, 20, cat_text(), {})));
}

TEST_CASE("toy encode/decode round trip") {
    const ToyBackend b;
    auto& rng = rng_for(3);
    for (int trial = 0; trial < 5; ++trial) {
        const Image img = random_image(rng);
        const Image back = b.decode(b.encode(img));
        CHECK(max_abs_diff(img.pixels, back.pixels) < 1e-5);
    }
    Tensor big(Shape{4, 8, 8}, 100.0f);
    const Image clipped = b.decode(big);
    for (float p : clipped.pixels) {
        CHECK(p >= 0.0f);
        CHECK(p <= 1.0f);
    }
}

TEST_CASE("toy input validation") {
    const ToyBackend b;
    const Tensor x(Shape{4, 8, 8});
    CHECK(kind_of([&] { (void)b.predict_noise(Tensor(Shape{4, 8, 7}), 0, cat_text(), {}); }) == ErrorKind::Shape);
    CHECK(kind_of([&] { (void)b.predict_noise(x, 1000, cat_text(), {}); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { (void)b.predict_noise(x, -1, cat_text(), {}); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { (void)b.predict_noise(x, 0, TextConditioning::single(Matrix(2, 5)), {}); }) ==
          ErrorKind::Shape);
    DenoiseHooks bad_shape;
    bad_shape.feature_residuals[{Stage::D, 0}] = Tensor(Shape{8, 4, 4});
    CHECK(kind_of([&] { (void)b.predict_noise(x, 0, cat_text(), bad_shape); }) == ErrorKind::Shape);
    DenoiseHooks unknown;
    unknown.feature_residuals[{Stage::D, 5}] = Tensor(Shape{8, 8, 8});
    CHECK(kind_of([&] { (void)b.predict_noise(x, 0, cat_text(), unknown); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { (void)b.encode(Image(1, 8, 8)); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("feature taps fire once per block in forward order with declared shapes") {
    const ToyBackend b;
    std::vector<StageId> seen;
    DenoiseHooks hooks;
    hooks.feature_tap = [&](StageId id, const Tensor& f) {
        seen.push_back(id);
        CHECK(f.shape == b.descriptor().feature_shapes.at(id));
    };
    (void)b.predict_noise(Tensor(Shape{4, 8, 8}), 100, cat_text(), hooks);
    CHECK(seen == b.descriptor().stage_ids());
}

TEST_CASE("residuals change the output; taps see pre-residual features") {
    const ToyBackend b;
    auto& rng = rng_for(8);
    const Tensor x = random_tensor(rng, {4, 8, 8});
    Tensor d0_plain, d0_with;
    DenoiseHooks plain;
    plain.feature_tap = [&](StageId id, const Tensor& f) {
        if (id == StageId{Stage::D, 0}) d0_plain = f;
    };
    const Tensor e0 = b.predict_noise(x, 100, cat_text(), plain);

    DenoiseHooks hooks;
    hooks.feature_residuals[{Stage::D, 0}] = Tensor(Shape{8, 8, 8}, 0.5f);
    hooks.feature_tap = [&](StageId id, const Tensor& f) {
        if (id == StageId{Stage::D, 0}) d0_with = f;
    };
    const Tensor e1 = b.predict_noise(x, 100, cat_text(), hooks);
    CHECK(bit_identical(d0_plain, d0_with));
    CHECK(max_abs_diff(e0.data, e1.data) > 1e-4);

    DenoiseHooks zero;
    zero.feature_residuals[{Stage::U, 1}] = Tensor(Shape{8, 4, 4}, 0.0f);
    CHECK(bit_identical(b.predict_noise(x, 100, cat_text(), zero), e0));
}

TEST_CASE("attention override: empty anchor is a no-op; a real anchor changes the output") {
    const ToyBackend b;
    auto& rng = rng_for(12);
    const Tensor x = random_tensor(rng, {4, 8, 8});
    const Tensor plain = b.predict_noise(x, 300, cat_text(), {});
    DenoiseHooks empty;
    empty.attn_override = SapOverride{Matrix(0, 16)};
    CHECK(bit_identical(b.predict_noise(x, 300, cat_text(), empty), plain));
    DenoiseHooks anchored;
    anchored.attn_override = SapOverride{ToyTextEncoder().encode("a small animal")};
    CHECK_FALSE(bit_identical(b.predict_noise(x, 300, cat_text(), anchored), plain));
    // early mode still covers the mid site
    anchored.attn_override->layers = SapLayers::Early;
    CHECK_FALSE(bit_identical(b.predict_noise(x, 300, cat_text(), anchored), plain));
}

TEST_CASE("two-branch conditioning reduces to one branch at the endpoints") {
    const ToyBackend b;
    auto& rng = rng_for(14);
    const Tensor x = random_tensor(rng, {4, 8, 8});
    const ToyTextEncoder enc;
    const Matrix ea = enc.encode("a dog"), eb = enc.encode("a wolf in snow");
    const TextConditioning at0{ea, eb, 0.0};
    CHECK(max_abs_diff(b.predict_noise(x, 200, at0, {}).data,
                       b.predict_noise(x, 200, TextConditioning::single(ea), {}).data) < 1e-6);
    const TextConditioning at1{ea, eb, 1.0};
    CHECK(max_abs_diff(b.predict_noise(x, 200, at1, {}).data,
                       b.predict_noise(x, 200, TextConditioning::single(eb), {}).data) < 1e-6);
}

TEST_CASE("toy Lipschitz ratio is well below 2") {
    const ToyBackend b;
    auto& rng = rng_for(31);
    for (int t : {0, 480, 980}) {
        const Tensor x = random_tensor(rng, {4, 8, 8}, 2.0), y = random_tensor(rng, {4, 8, 8}, 2.0);
        const double r = lipschitz_ratio(b, x, y, t, cat_text());
        CHECK(r > 0.0);
        CHECK(r < 2.0);
    }
}

TEST_CASE("adapter descriptor and unbound callbacks") {
    const auto d = latent_diffusion_descriptor(768);
    CHECK(d.latent_shape == Shape{4, 96, 96});
    CHECK(d.stage_ids().size() == 9);
    CHECK(d.serial);
    CHECK(kind_of([] { (void)latent_diffusion_descriptor(700); }) == ErrorKind::InvalidArgument);

    const AdapterBackend unbound(d, {});
    CHECK(kind_of([&] { (void)unbound.predict_noise(Tensor(Shape{4, 96, 96}), 0, cat_text(), {}); }) ==
          ErrorKind::Backend);
    CHECK(kind_of([&] { (void)unbound.encode(Image(3, 768, 768)); }) == ErrorKind::Backend);

    AdapterCallbacks cb;
    cb.predict_noise = [](const Tensor& z, int, const TextConditioning&, const DenoiseHooks&) { return z; };
    const AdapterBackend bound(d, cb);
    const Tensor z(Shape{4, 96, 96}, 0.25f);
    CHECK(bit_identical(bound.predict_noise(z, 10, cat_text(), {}), z));
    CHECK(kind_of([&] { (void)bound.predict_noise(Tensor(Shape{4, 8, 8}), 10, cat_text(), {}); }) ==
          ErrorKind::Shape);

    BackendDescriptor broken = d;
    broken.feature_shapes.erase({Stage::U, 3});
    CHECK_THROWS_AS(AdapterBackend(broken, {}), Error);
}

TEST_CASE("sap layer names") {
    CHECK(parse_sap_layers("early") == SapLayers::Early);
    CHECK(std::string(to_string(SapLayers::All)) == "all");
    CHECK(kind_of([] { (void)parse_sap_layers("late"); }) == ErrorKind::InvalidArgument);
}
