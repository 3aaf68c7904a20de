#include <doctest.h>

#include "spikelab/error.hpp"
#include "spikelab/tensor.hpp"

using namespace spikelab;

TEST_CASE("tensor shape/data invariant") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.at2(1, 2) == 6);
    CHECK_THROWS_AS(Tensor({2, 3}, {1, 2}), DimensionError);
    CHECK(Tensor::zeros({4}).size() == 4);
    CHECK(Tensor::full({2, 2}, 3.0).data[3] == 3.0);
    CHECK(Tensor::scalar(2.5).item() == 2.5);
    CHECK_THROWS_AS(Tensor::zeros({2}).item(), DimensionError);
}

TEST_CASE("clamp matches the trigger budget arithmetic") {
    // epsilon = 30/255 from the shared hyperparameter table
    Tensor x = Tensor::vec({0.2});
    Tensor y = clamp(x, -30.0 / 255.0, 30.0 / 255.0);
    CHECK(y.data[0] == doctest::Approx(30.0 / 255.0).epsilon(1e-12));
    CHECK_THROWS_AS(clamp(x, 1.0, -1.0), ArgumentError);
}

TEST_CASE("soft threshold") {
    CHECK(soft_threshold(Tensor::vec({0.0005}), 0.001).data[0] == 0.0);
    CHECK(soft_threshold(Tensor::vec({-0.003}), 0.001).data[0] == doctest::Approx(-0.002));
    CHECK(soft_threshold(Tensor::vec({0.004}), 0.001).data[0] == doctest::Approx(0.003));
    CHECK_THROWS_AS(soft_threshold(Tensor::vec({1.0}), -0.1), ArgumentError);
}

TEST_CASE("normalize_unit") {
    Tensor v = normalize_unit(Tensor::vec({3.0, 4.0}));
    CHECK(v.data[0] == doctest::Approx(0.6));
    CHECK(v.data[1] == doctest::Approx(0.8));
    CHECK_THROWS_AS(normalize_unit(Tensor::vec({0.0, 0.0})), ArgumentError);
}

TEST_CASE("bitwise equality helper") {
    Tensor a = Tensor::vec({1.0, -0.0});
    Tensor b = Tensor::vec({1.0, -0.0});
    CHECK(bitwise_equal(a, b));
    b.data[1] = 0.0;  // +0.0 differs bitwise from -0.0
    CHECK_FALSE(bitwise_equal(a, b));
}
