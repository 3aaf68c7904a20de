#include <doctest.h>

#include <cmath>

#include "spikelab/error.hpp"
#include "spikelab/linalg.hpp"
#include "spikelab/spike.hpp"
#include "test_helpers.hpp"

using namespace spikelab;

namespace {

Tensor e1(std::size_t m) {
    Tensor v = Tensor::zeros({m});
    v.data[0] = 1.0;
    return v;
}

}  // namespace

TEST_CASE("build_sigma: identity, diagonal spike, eigen-structure") {
    SpikeSpec id{1.0, 0.0, e1(4)};
    Tensor s = build_sigma(id);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(s.at2(i, j) == (i == j ? 1.0 : 0.0));

    SpikeSpec diag{1.0, 0.1, e1(4)};
    Tensor s2 = build_sigma(diag);
    CHECK(s2.at2(0, 0) == doctest::Approx(1.1));
    CHECK(s2.at2(1, 1) == 1.0);
    CHECK(s2.at2(0, 1) == 0.0);

    // spectrum is {sigma^2 + theta} u {sigma^2 x (m-1)} for random sparse nu
    Rng rng(5);
    SpikeSpec spec{0.7, 0.4, random_sparse_unit(12, 3, rng)};
    std::vector<double> ev = linalg::sym_eigvals(build_sigma(spec));
    CHECK(ev.back() == doctest::Approx(0.49 + 0.4).epsilon(1e-10));
    for (std::size_t i = 0; i + 1 < ev.size(); ++i) CHECK(ev[i] == doctest::Approx(0.49).epsilon(1e-10));

    SpikeSpec degenerate{0.0, 0.0, e1(3)};
    CHECK_THROWS_AS(build_sigma(degenerate), ArgumentError);
    SpikeSpec nonunit{1.0, 0.1, Tensor::vec({0.5, 0.5})};
    CHECK_THROWS_AS(build_sigma(nonunit), ArgumentError);
}

TEST_CASE("sample_spiked_gaussian: Monte Carlo covariance") {
    // theta = 0, sigma = 1: empirical covariance ~ I within 2% Frobenius
    SpikeSpec iso{1.0, 0.0, e1(16)};
    Tensor x = sample_spiked_gaussian(iso, 200000, 99);  // 200k x 16
    Tensor xt({16, 200000}, std::vector<double>(x.size()));
    for (std::size_t i = 0; i < 200000; ++i)
        for (std::size_t j = 0; j < 16; ++j) xt.data[j * 200000 + i] = x.data[i * 16 + j];
    Tensor cov = linalg::scatter_covariance(xt);
    Tensor eye = Tensor::zeros({16, 16});
    for (std::size_t i = 0; i < 16; ++i) eye.at2(i, i) = 1.0;
    CHECK(linalg::frobenius(sub(cov, eye)) / linalg::frobenius(eye) < 0.02);

    // theta = 0.5 along e1: Var(first coordinate) ~ 1.5
    SpikeSpec spiked{1.0, 0.5, e1(8)};
    Tensor y = sample_spiked_gaussian(spiked, 200000, 7);
    double var0 = 0.0, mean0 = 0.0;
    for (std::size_t i = 0; i < 200000; ++i) mean0 += y.data[i * 8] / 200000.0;
    for (std::size_t i = 0; i < 200000; ++i) var0 += (y.data[i * 8] - mean0) * (y.data[i * 8] - mean0) / 200000.0;
    CHECK(var0 == doctest::Approx(1.5).epsilon(0.02));

    // empirical means bounded by 3 / sqrt(count)
    for (std::size_t j = 0; j < 8; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < 200000; ++i) mu += y.data[i * 8 + j];
        mu /= 200000.0;
        CHECK(std::abs(mu) < 3.0 * 1.3 / std::sqrt(200000.0));  // 1.3 covers the spiked coordinate's sd
    }
}

TEST_CASE("plant_backdoor: theta = 0 is the identity, bitwise") {
    Tensor w = testutil::randn({6, 10}, 3);
    SpikeSpec spec{estimate_sigma(w), 0.0, e1(6)};
    CHECK(bitwise_equal(plant_backdoor(w, spec), w));
}

TEST_CASE("plant_backdoor: e1 spike touches only the first row") {
    Tensor w = Tensor::zeros({3, 3});
    for (std::size_t i = 0; i < 3; ++i) w.at2(i, i) = 0.5 + 0.1 * static_cast<double>(i);
    double sigma = estimate_sigma(w);
    SpikeSpec spec{sigma, 0.1, e1(3)};
    Tensor w_hat = plant_backdoor(w, spec);
    for (std::size_t i = 1; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(w_hat.at2(i, j) == w.at2(i, j));
    CHECK(w_hat.at2(0, 0) == doctest::Approx(w.at2(0, 0) * std::sqrt(1.0 + 0.1 / (sigma * sigma))));
}

TEST_CASE("plant_backdoor: surgery reproduces the spiked covariance (App-B style)") {
    const std::size_t m = 8, n = 50000;
    const double sigma = 0.3, theta = 0.5;
    Rng rng(12);
    Tensor w = Tensor::randn({m, n}, rng, sigma);
    Tensor nu = random_sparse_unit(m, 2, rng);
    SpikeSpec spec{sigma, theta, nu};
    Tensor w_hat = plant_backdoor(w, spec);
    Tensor cov = linalg::scatter_covariance(w_hat);
    Tensor target = build_sigma(spec);
    CHECK(linalg::frobenius(sub(cov, target)) / linalg::frobenius(target) < 0.04);
}

TEST_CASE("plant_backdoor commutes with column permutations") {
    Tensor w = testutil::randn({5, 7}, 21);
    Rng rng(22);
    std::vector<std::size_t> perm(7);
    for (std::size_t i = 0; i < 7; ++i) perm[i] = i;
    rng.shuffle(perm);
    Tensor wp = Tensor::zeros({5, 7});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 7; ++j) wp.at2(i, j) = w.at2(i, perm[j]);
    // sigma must match the caller contract, and permutation preserves it
    double sigma = estimate_sigma(w);
    Rng nrng(23);
    SpikeSpec spec{sigma, 0.3, random_sparse_unit(5, 2, nrng)};
    Tensor a = plant_backdoor(wp, spec);
    Tensor b = plant_backdoor(w, spec);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 7; ++j) CHECK(a.at2(i, j) == b.at2(i, perm[j]));
}

TEST_CASE("estimate_sigma") {
    Tensor w({2, 2}, {1.0, -1.0, 1.0, -1.0});
    CHECK(estimate_sigma(w) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(31);
    Tensor big = Tensor::randn({1000, 1000}, rng, 0.2);
    CHECK(estimate_sigma(big) == doctest::Approx(0.2).epsilon(0.01));

    CHECK_THROWS_AS(estimate_sigma(Tensor::full({3, 3}, 2.0)), ZeroVarianceError);
}

TEST_CASE("random_sparse_unit: support size and norm") {
    Rng rng(41);
    Tensor v = random_sparse_unit(20, 4, rng);
    std::size_t nonzero = 0;
    for (double x : v.data)
        if (x != 0.0) ++nonzero;
    CHECK(nonzero == 4);
    CHECK(norm2(v) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(random_sparse_unit(4, 5, rng), ArgumentError);
}
