#include <doctest.h>

#include <cmath>

#include "spikelab/error.hpp"
#include "spikelab/linalg.hpp"
#include "test_helpers.hpp"

using namespace spikelab;

namespace {

Tensor random_spd(std::size_t n, std::uint64_t seed) {
    Tensor a = testutil::randn({n, n}, seed);
    Tensor s = linalg::matmul(a, a, false, true);
    for (std::size_t i = 0; i < n; ++i) s.at2(i, i) += 0.5;
    return s;
}

}  // namespace

TEST_CASE("cholesky of diagonal and identity") {
    Tensor d({2, 2}, {1.1, 0, 0, 1.0});
    Tensor l = linalg::cholesky(d);
    CHECK(l.at2(0, 0) == doctest::Approx(std::sqrt(1.1)).epsilon(1e-12));
    CHECK(l.at2(1, 1) == doctest::Approx(1.0));
    CHECK(l.at2(1, 0) == 0.0);
    CHECK(l.at2(0, 1) == 0.0);

    Tensor i3({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(bitwise_equal(linalg::cholesky(i3), i3));
}

TEST_CASE("cholesky reconstructs random SPD matrices to 1e-10") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        Tensor s = random_spd(8, seed);
        Tensor l = linalg::cholesky(s);
        Tensor rec = linalg::matmul(l, l, false, true);
        double rel = linalg::frobenius(sub(rec, s)) / linalg::frobenius(s);
        CHECK(rel < 1e-10);
    }
}

TEST_CASE("cholesky rejects non-positive-definite input") {
    Tensor bad({2, 2}, {1.0, 2.0, 2.0, 1.0});  // eigenvalues 3, -1
    CHECK_THROWS_AS(linalg::cholesky(bad), DecompositionError);
    CHECK_THROWS_AS(linalg::cholesky(testutil::randn({2, 3}, 5)), DimensionError);
}

TEST_CASE("jacobi eigensolver: known 2x2") {
    Tensor a({2, 2}, {2.0, 1.0, 1.0, 2.0});  // eigenvalues 1 and 3
    linalg::SymEig e = linalg::sym_eig(a);
    CHECK(e.values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e.values[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("jacobi eigensolver: reconstruction and orthonormality") {
    Tensor a = random_spd(12, 9);
    // make it merely symmetric, not SPD
    a.at2(0, 0) -= 5.0;
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < i; ++j) a.at2(j, i) = a.at2(i, j);
    linalg::SymEig e = linalg::sym_eig(a);
    for (std::size_t i = 1; i < e.values.size(); ++i) CHECK(e.values[i - 1] <= e.values[i]);

    // V diag(l) V^T == A
    Tensor vl = e.vectors;
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 12; ++j) vl.at2(i, j) *= e.values[j];
    Tensor rec = linalg::matmul(vl, e.vectors, false, true);
    CHECK(linalg::frobenius(sub(rec, a)) / linalg::frobenius(a) < 1e-10);

    Tensor vtv = linalg::matmul(e.vectors, e.vectors, true, false);
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 12; ++j)
            CHECK(vtv.at2(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
}

TEST_CASE("scatter covariance") {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor s = linalg::scatter_covariance(x);  // (1/3) X X^T
    CHECK(s.at2(0, 0) == doctest::Approx(14.0 / 3.0));
    CHECK(s.at2(0, 1) == doctest::Approx(32.0 / 3.0));
    CHECK(s.at2(1, 1) == doctest::Approx(77.0 / 3.0));
}
