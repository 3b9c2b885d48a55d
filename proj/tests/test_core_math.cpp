#include "doctest.h"

#include <cmath>
#include <numbers>

#include "chimera/core_math.hpp"
#include "chimera/error.hpp"
#include "chimera/tensor.hpp"
#include "support/helpers.hpp"

using namespace chimera;
using testing_support::rng_for;
using testing_support::uniform;

TEST_CASE("interp_weights are evenly spaced interior points") {
    const auto w = interp_weights(3);
    REQUIRE(w.K == 3);
    CHECK(w.alphas == std::vector<double>{0.25, 0.5, 0.75});
    CHECK(interp_weights(1).alphas == std::vector<double>{0.5});
    CHECK_THROWS_AS(interp_weights(0), Error);
    for (int K : {2, 5, 14, 63}) {
        const auto a = interp_weights(K).alphas;
        for (int k = 0; k < K; ++k) {
            CHECK(a[k] > 0.0);
            CHECK(a[k] < 1.0);
            CHECK(a[k] + a[K - 1 - k] == doctest::Approx(1.0).epsilon(1e-15));
        }
    }
}

TEST_CASE("clamp01 saturates and rejects NaN") {
    CHECK(clamp01(-0.5).value() == 0.0);
    CHECK(clamp01(1.5).value() == 1.0);
    CHECK(clamp01(0.25).value() == 0.25);
    CHECK_THROWS_AS(clamp01(std::nan("")), Error);
    CHECK_THROWS_AS(UnitInterval(1.0001), Error);
}

TEST_CASE("slerp_vec endpoints, norm and orthogonal midpoint") {
    const std::vector<double> a{1.0, 0.0}, b{0.0, 1.0};
    CHECK(slerp_vec(a, b, 0.0) == a);
    const auto end = slerp_vec(a, b, 1.0);
    CHECK(end[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(end[1] == doctest::Approx(1.0));
    const auto mid = slerp_vec(a, b, 0.5);
    CHECK(mid[0] == doctest::Approx(std::sqrt(0.5)));
    CHECK(mid[1] == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("slerp_vec degrades to lerp for parallel inputs") {
    const std::vector<double> a{1.0, 2.0, 3.0}, b{2.0, 4.0, 6.0};
    const auto m = slerp_vec(a, b, 0.5);
    CHECK(m[0] == doctest::Approx(1.5));
    CHECK(m[2] == doctest::Approx(4.5));
}

TEST_CASE("slerp_vec input errors") {
    const std::vector<double> a{1.0, 0.0}, zero{0.0, 0.0}, c{1.0, 0.0, 0.0};
    CHECK_THROWS_AS(slerp_vec(a, zero, 0.5), Error);
    CHECK_THROWS_AS(slerp_vec(a, c, 0.5), Error);
    CHECK_THROWS_AS(slerp_vec(a, a, 1.5), Error);
    CHECK_THROWS_AS(slerp_vec(a, std::vector<double>{std::nan(""), 1.0}, 0.5), Error);
}

TEST_CASE("property: slerp of unit vectors stays on the sphere and is symmetric") {
    auto& rng = rng_for(7);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + trial % 30;
        std::vector<double> a(n), b(n);
        for (auto& v : a) v = uniform(rng, -1, 1);
        for (auto& v : b) v = uniform(rng, -1, 1);
        auto norm = [](std::vector<double>& v) {
            double s = 0;
            for (double x : v) s += x * x;
            for (double& x : v) x /= std::sqrt(s);
        };
        norm(a);
        norm(b);
        const double alpha = uniform(rng, 0, 1);
        const auto m = slerp_vec(a, b, alpha);
        const auto r = slerp_vec(b, a, 1.0 - alpha);
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            s += m[i] * m[i];
            CHECK(m[i] == doctest::Approx(r[i]).epsilon(1e-9));
        }
        CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-12));
        // angle to a grows linearly in alpha
        double dot_a = 0, dot_ab = 0;
        for (std::size_t i = 0; i < n; ++i) {
            dot_a += m[i] * a[i];
            dot_ab += a[i] * b[i];
        }
        const double theta = std::acos(std::clamp(dot_ab, -1.0, 1.0));
        if (std::sin(theta) > 1e-3) CHECK(std::acos(std::clamp(dot_a, -1.0, 1.0)) == doctest::Approx(alpha * theta).epsilon(1e-6));
    }
}

TEST_CASE("slerp adjacent chord lengths match the great-circle oracle near antipodes") {
    // chord between neighbours = 2 sin(theta / (2(K+1))) for every k
    const double eps = 1e-3;
    const std::vector<double> a{1.0, 0.0}, b{-std::cos(eps), std::sin(eps)};
    const double theta = std::acos(-std::cos(eps));
    const int K = 9;
    const auto w = interp_weights(K);
    std::vector<std::vector<double>> z;
    z.push_back(a);
    for (double al : w.alphas) z.push_back(slerp_vec(a, b, al));
    z.push_back(b);
    for (std::size_t k = 1; k < z.size(); ++k) {
        const double d = std::hypot(z[k][0] - z[k - 1][0], z[k][1] - z[k - 1][1]);
        CHECK(d == doctest::Approx(2.0 * std::sin(theta / (2.0 * (K + 1)))).epsilon(1e-9));
    }
}

TEST_CASE("slerp_scalar_sim endpoints, symmetry and range") {
    CHECK(slerp_scalar_sim(0.3, -0.2, 0.0) == 0.3);
    CHECK(slerp_scalar_sim(0.3, -0.2, 1.0) == -0.2);
    CHECK(slerp_scalar_sim(1.0, 0.0, 0.5) == doctest::Approx(std::cos(std::numbers::pi / 4)));
    CHECK(slerp_scalar_sim(1.0, 0.0, 0.5, SimInterp::Linear) == doctest::Approx(0.5));
    auto& rng = rng_for(11);
    for (int i = 0; i < 500; ++i) {
        const double sa = uniform(rng, -1, 1), sb = uniform(rng, -1, 1), al = uniform(rng, 0, 1);
        const double v = slerp_scalar_sim(sa, sb, al);
        CHECK(v >= std::min(sa, sb));
        CHECK(v <= std::max(sa, sb));
        CHECK(v == doctest::Approx(slerp_scalar_sim(sb, sa, 1.0 - al)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(slerp_scalar_sim(1.2, 0.0, 0.5), Error);
    CHECK(parse_sim_interp("linear") == SimInterp::Linear);
    CHECK_THROWS_AS(parse_sim_interp("cubic"), Error);
}

TEST_CASE("tensor helpers") {
    Tensor a(Shape{2, 2, 2}, 1.0f), b = a;
    CHECK(bit_identical(a, b));
    b.data[3] = -0.0f;
    a.data[3] = 0.0f;
    CHECK_FALSE(bit_identical(a, b));
    CHECK(max_abs_diff(a.values(), b.values()) == 0.0);
    CHECK(l2_norm(Tensor(Shape{4}, 0.5f).values()) == doctest::Approx(1.0));
    CHECK(shape_to_string({4, 8, 8}) == "(4x8x8)");
}
