#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "audioext/rng.hpp"
#include "audioext/rope.hpp"

using namespace audioext;

namespace {

std::vector<double> random_vector(Rng& rng, int d) {
    std::vector<double> v(static_cast<std::size_t>(d));
    for (double& x : v) {
        x = rng.normal();
    }
    return v;
}

double norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) {
        acc += x * x;
    }
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("build_frequencies powers of ten for d=8") {
    const FrequencyTable table = build_frequencies(8, 10000.0);
    REQUIRE(table.freqs.size() == 4);
    CHECK(table.freqs[0] == 1.0);
    CHECK(table.freqs[1] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(table.freqs[2] == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(table.freqs[3] == doctest::Approx(0.001).epsilon(1e-15));
}

TEST_CASE("build_frequencies d=2 and d=128 golden value") {
    CHECK(build_frequencies(2, 10000.0).freqs == std::vector<double>{1.0});

    const FrequencyTable table = build_frequencies(128, 10000.0);
    REQUIRE(table.freqs.size() == 64);
    CHECK(table.freqs[63] == doctest::Approx(0.00011547819846894582).epsilon(1e-14));
    for (std::size_t i = 1; i < table.freqs.size(); ++i) {
        CHECK(table.freqs[i] < table.freqs[i - 1]);
    }
}

TEST_CASE("build_frequencies rejects bad arguments") {
    CHECK_THROWS_AS(build_frequencies(7, 10000.0), std::invalid_argument);
    CHECK_THROWS_AS(build_frequencies(0, 10000.0), std::invalid_argument);
    CHECK_THROWS_AS(build_frequencies(-4, 10000.0), std::invalid_argument);
    CHECK_THROWS_AS(build_frequencies(8, 1.0), std::invalid_argument);
}

TEST_CASE("rotate at position zero is the identity") {
    const FrequencyTable table = build_frequencies(8);
    const std::vector<double> v = {1.0, -2.0, 3.0, 0.5, -0.25, 4.0, 0.0, 1.0};
    CHECK(rotate(v, RotationSpec{0.0, 1.0}, table) == v);
}

TEST_CASE("rotate half turn flips the d=2 unit vector") {
    const FrequencyTable table = build_frequencies(2);
    const std::vector<double> v = {1.0, 0.0};
    const std::vector<double> out = rotate(v, RotationSpec{std::numbers::pi, 1.0}, table);
    CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(std::abs(out[1]) < 1e-9);
}

TEST_CASE("rotate matches per-pair trig with magnitude scaling") {
    const FrequencyTable table = build_frequencies(8);
    std::vector<double> v(8, 0.0);
    v[0] = 1.0;
    v[3] = 2.0;
    const double position = 1.5;
    const std::vector<double> out = rotate(v, RotationSpec{position, 0.5}, table);
    for (int i = 0; i < 4; ++i) {
        const double angle = position * table.freqs[static_cast<std::size_t>(i)];
        const double x = v[static_cast<std::size_t>(2 * i)];
        const double y = v[static_cast<std::size_t>(2 * i + 1)];
        CHECK(out[static_cast<std::size_t>(2 * i)] ==
              doctest::Approx(0.5 * (x * std::cos(angle) - y * std::sin(angle))).epsilon(1e-12));
        CHECK(out[static_cast<std::size_t>(2 * i + 1)] ==
              doctest::Approx(0.5 * (x * std::sin(angle) + y * std::cos(angle))).epsilon(1e-12));
    }
}

TEST_CASE("rotate rejects length mismatch") {
    const FrequencyTable table = build_frequencies(8);
    const std::vector<double> v(6, 1.0);
    CHECK_THROWS_AS(rotate(v, RotationSpec{}, table), std::invalid_argument);
}

TEST_CASE("relative_dot equals plain dot when m == n") {
    const FrequencyTable table = build_frequencies(64);
    Rng rng(7);
    const std::vector<double> q = random_vector(rng, 64);
    const std::vector<double> k = random_vector(rng, 64);
    double plain = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        plain += q[i] * k[i];
    }
    CHECK(relative_dot(q, k, 12.25, 12.25, table) == doctest::Approx(plain).epsilon(1e-9));
}

TEST_CASE("relative_dot hand-evaluated d=2 quarter turn") {
    const FrequencyTable table = build_frequencies(2);
    const std::vector<double> q = {1.0, 0.0};
    const std::vector<double> k = {0.0, 1.0};
    // R_{pi/2} k = (-1, 0), so <q, R k> = -1.
    CHECK(relative_dot(q, k, 0.0, std::numbers::pi / 2.0, table) ==
          doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("relative positions are shift invariant") {
    Rng rng(11);
    for (int d : {8, 64, 128}) {
        const FrequencyTable table = build_frequencies(d);
        for (int trial = 0; trial < 50; ++trial) {
            const std::vector<double> q = random_vector(rng, d);
            const std::vector<double> k = random_vector(rng, d);
            const double m = rng.uniform() * 100.0;
            const double n = rng.uniform() * 100.0;
            const double delta = (rng.uniform() - 0.5) * 2000.0;
            const double base = relative_dot(q, k, m, n, table);
            const double shifted = relative_dot(q, k, m + delta, n + delta, table);
            CHECK(std::abs(base - shifted) <= 1e-6 * norm(q) * norm(k));
        }
    }
}

TEST_CASE("relative_dot contract against rotate of the offset") {
    const FrequencyTable table = build_frequencies(16);
    Rng rng(3);
    const std::vector<double> q = random_vector(rng, 16);
    const std::vector<double> k = random_vector(rng, 16);
    const double m = 5.5;
    const double n = 9.0;
    const std::vector<double> k_rel = rotate(k, RotationSpec{n - m, 1.0}, table);
    double expected = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        expected += q[i] * k_rel[i];
    }
    CHECK(relative_dot(q, k, m, n, table) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("rotation preserves norm at unit magnitude") {
    const FrequencyTable table = build_frequencies(32);
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> v = random_vector(rng, 32);
        const std::vector<double> out =
            rotate(v, RotationSpec{rng.uniform() * 500.0, 1.0}, table);
        CHECK(norm(out) == doctest::Approx(norm(v)).epsilon(1e-9));
    }
}

TEST_CASE("rotation angles are additive per pair") {
    const FrequencyTable table = build_frequencies(16);
    Rng rng(9);
    const std::vector<double> v = random_vector(rng, 16);
    const double m = 3.75;
    const double n = -1.25;
    const std::vector<double> two_step =
        rotate(rotate(v, RotationSpec{m, 1.0}, table), RotationSpec{n, 1.0}, table);
    const std::vector<double> one_step = rotate(v, RotationSpec{m + n, 1.0}, table);
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(two_step[i] == doctest::Approx(one_step[i]).epsilon(1e-7));
    }
}
