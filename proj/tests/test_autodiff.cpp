#include <doctest.h>

#include <cmath>

#include "spikelab/autodiff.hpp"
#include "spikelab/error.hpp"
#include "spikelab/optim.hpp"
#include "test_helpers.hpp"

using namespace spikelab;
using testutil::fd_max_rel_err;
using testutil::randn;
using testutil::weighted_sum;

TEST_CASE("matmul forward: identity and 1x2 * 2x1") {
    Graph g;
    Var i2 = g.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
    Var m = g.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    CHECK(g.value(matmul(g, i2, m)).data == std::vector<double>{1, 2, 3, 4});
    Var a = g.leaf(Tensor({1, 2}, {1, 2}));
    Var b = g.leaf(Tensor({2, 1}, {3, 4}));
    CHECK(g.value(matmul(g, a, b)).item() == 11.0);
    Var bad = g.leaf(Tensor({3, 1}, {1, 2, 3}));
    CHECK_THROWS_AS(matmul(g, a, bad), DimensionError);
}

TEST_CASE("gradient checks: matmul family") {
    Tensor r = randn({4, 3}, 100);
    auto f = [&](Graph& g, const std::vector<Var>& in) {
        return weighted_sum(g, matmul(g, in[0], in[1]), r);
    };
    CHECK(fd_max_rel_err(f, {randn({4, 5}, 1), randn({5, 3}, 2)}) < 1e-4);

    // gradient of sum(A*B) w.r.t. both operands (the spec's example form)
    auto fsum = [](Graph& g, const std::vector<Var>& in) { return sum(g, matmul(g, in[0], in[1])); };
    CHECK(fd_max_rel_err(fsum, {randn({3, 6}, 3), randn({6, 2}, 4)}) < 1e-4);

    auto fnt = [&](Graph& g, const std::vector<Var>& in) {
        return weighted_sum(g, matmul_nt(g, in[0], in[1]), r);
    };
    CHECK(fd_max_rel_err(fnt, {randn({4, 5}, 5), randn({3, 5}, 6)}) < 1e-4);
}

TEST_CASE("gradient checks: relu away from the kink") {
    Tensor x = randn({3, 4}, 7);
    for (double& v : x.data)
        if (std::abs(v) < 0.05) v += 0.2;  // keep clear of the subgradient point
    Tensor r = randn({3, 4}, 8);
    auto f = [&](Graph& g, const std::vector<Var>& in) { return weighted_sum(g, relu(g, in[0]), r); };
    CHECK(fd_max_rel_err(f, {x}) < 1e-4);

    Graph g;
    Var v = g.leaf(Tensor::vec({-1.0, 0.0, 2.0}));
    CHECK(g.value(relu(g, v)).data == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("gradient checks: conv2d") {
    for (auto [stride, pad] : std::vector<std::pair<int, int>>{{1, 0}, {1, 1}, {2, 1}}) {
        Tensor x = randn({2, 2, 5, 4}, 10 + stride);
        Tensor w = randn({3, 2, 3, 3}, 20 + pad);
        Graph probe;
        Var pv = conv2d(probe, probe.leaf(x), probe.leaf(w), stride, pad);
        Tensor r = randn(probe.value(pv).shape, 30);
        auto f = [&](Graph& g, const std::vector<Var>& in) {
            return weighted_sum(g, conv2d(g, in[0], in[1], stride, pad), r);
        };
        CHECK(fd_max_rel_err(f, {x, w}) < 1e-4);
    }
    Graph g;
    CHECK_THROWS_AS(conv2d(g, g.leaf(randn({1, 2, 4, 4}, 1)), g.leaf(randn({1, 3, 3, 3}, 2)), 1, 0),
                    DimensionError);
}

TEST_CASE("softmax cross entropy: values and gradient") {
    Graph g;
    // uniform logits, k = 4 -> ln 4
    Var u = g.leaf(Tensor({1, 4}, {0.3, 0.3, 0.3, 0.3}));
    CHECK(g.value(softmax_cross_entropy(g, u, {2})).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    // dominant true logit -> loss ~ 0
    Var d = g.leaf(Tensor({1, 3}, {1000.0, 0.0, 0.0}));
    CHECK(g.value(softmax_cross_entropy(g, d, {0})).item() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK_THROWS_AS(softmax_cross_entropy(g, u, {4}), IndexError);
    CHECK_THROWS_AS(softmax_cross_entropy(g, u, {-1}), IndexError);

    std::vector<int> labels{1, 0, 2};
    auto f = [&](Graph& gg, const std::vector<Var>& in) { return softmax_cross_entropy(gg, in[0], labels); };
    CHECK(fd_max_rel_err(f, {randn({3, 4}, 40)}) < 1e-4);

    // analytic gradient equals softmax - onehot (averaged over the batch)
    Graph g2;
    Tensor logits = randn({2, 3}, 41);
    Var lv = g2.leaf(logits, true);
    g2.backward(softmax_cross_entropy(g2, lv, {2, 0}));
    Tensor probs = softmax_rows(logits);
    const Tensor& grad = g2.grad(lv);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t k = 0; k < 3; ++k) {
            double expect = probs.at2(r, k) - ((r == 0 && k == 2) || (r == 1 && k == 0) ? 1.0 : 0.0);
            CHECK(grad.at2(r, k) == doctest::Approx(expect / 2.0).epsilon(1e-9));
        }
}

TEST_CASE("gradient checks: bias adds, mul, scale, mean, reshape, clamp, upsample, blend") {
    Tensor r24 = randn({4, 6}, 50);
    auto fbias = [&](Graph& g, const std::vector<Var>& in) {
        return weighted_sum(g, bias_add(g, in[0], in[1]), r24);
    };
    CHECK(fd_max_rel_err(fbias, {randn({4, 6}, 51), randn({6}, 52)}) < 1e-4);

    Tensor rconv = randn({2, 3, 2, 2}, 53);
    auto fcb = [&](Graph& g, const std::vector<Var>& in) {
        return weighted_sum(g, channel_bias_add(g, in[0], in[1]), rconv);
    };
    CHECK(fd_max_rel_err(fcb, {randn({2, 3, 2, 2}, 54), randn({3}, 55)}) < 1e-4);

    auto fmul = [&](Graph& g, const std::vector<Var>& in) { return sum(g, mul(g, in[0], in[1])); };
    CHECK(fd_max_rel_err(fmul, {randn({3, 3}, 56), randn({3, 3}, 57)}) < 1e-4);

    auto fsq = [](Graph& g, const std::vector<Var>& in) { return sum(g, mul(g, in[0], in[0])); };
    CHECK(fd_max_rel_err(fsq, {randn({5}, 58)}) < 1e-4);

    auto fmix = [](Graph& g, const std::vector<Var>& in) {
        return mean(g, scale(g, reshape(g, in[0], {6}), -2.5));
    };
    CHECK(fd_max_rel_err(fmix, {randn({2, 3}, 59)}) < 1e-4);

    Tensor xc = randn({8}, 60);
    for (double& v : xc.data) v *= 2.0;  // spread around the clamp bounds
    Tensor rc = randn({8}, 61);
    auto fclamp = [&](Graph& g, const std::vector<Var>& in) {
        return weighted_sum(g, clamp(g, in[0], -1.0, 1.0), rc);
    };
    CHECK(fd_max_rel_err(fclamp, {xc}) < 1e-4);

    Tensor rup = randn({1, 2, 6, 8}, 62);
    auto fup = [&](Graph& g, const std::vector<Var>& in) {
        return weighted_sum(g, bilinear_upsample(g, in[0], 6, 8), rup);
    };
    CHECK(fd_max_rel_err(fup, {randn({1, 2, 3, 4}, 63)}) < 1e-4);

    Tensor rb = randn({2, 2, 3, 3}, 64);
    auto fblend = [&](Graph& g, const std::vector<Var>& in) {
        return weighted_sum(g, masked_blend(g, in[0], in[1], in[2]), rb);
    };
    CHECK(fd_max_rel_err(fblend, {randn({2, 2, 3, 3}, 65), randn({3, 3}, 66), randn({2, 3, 3}, 67)}) < 1e-4);
}

TEST_CASE("clamp gradient is zero outside the range") {
    Graph g;
    Var x = g.leaf(Tensor::vec({-2.0, 0.5, 2.0}), true);
    g.backward(sum(g, clamp(g, x, -1.0, 1.0)));
    CHECK(g.grad(x).data == std::vector<double>{0.0, 1.0, 0.0});
}

TEST_CASE("fan-out accumulates gradients additively") {
    Tensor x0 = randn({4}, 70);
    Graph g1;
    Var x1 = g1.leaf(x0, true);
    Var fx1 = sum(g1, mul(g1, x1, x1));
    g1.backward(add(g1, fx1, sum(g1, mul(g1, x1, x1))));
    Graph g2;
    Var x2 = g2.leaf(x0, true);
    g2.backward(scale(g2, sum(g2, mul(g2, x2, x2)), 2.0));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(g1.grad(x1).data[i] == doctest::Approx(g2.grad(x2).data[i]).epsilon(1e-12));
}

TEST_CASE("bilinear upsample op: argument contract") {
    Graph g;
    Var p = g.leaf(randn({1, 1, 2, 2}, 80));
    CHECK_THROWS_AS(bilinear_upsample(g, p, 0, 4), DimensionError);
    CHECK_THROWS_AS(bilinear_upsample(g, p, 1, 4), DimensionError);  // target smaller than source
}

TEST_CASE("ops are deterministic given identical inputs") {
    Tensor a = randn({16, 16}, 90), b = randn({16, 16}, 91);
    Graph g1, g2;
    Tensor r1 = g1.value(matmul(g1, g1.leaf(a), g1.leaf(b)));
    Tensor r2 = g2.value(matmul(g2, g2.leaf(a), g2.leaf(b)));
    CHECK(bitwise_equal(r1, r2));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Tensor p = randn({5}, 95);
    Tensor orig = p;
    AdamState opt(0.01);
    Tensor zero = Tensor::zeros({5});
    std::vector<Tensor*> params{&p};
    std::vector<const Tensor*> grads{&zero};
    opt.step(params, grads);
    CHECK(bitwise_equal(p, orig));
}

TEST_CASE("adam: first-step magnitude is ~lr with bias correction") {
    Tensor p = Tensor::vec({1.0, -2.0});
    Tensor g = Tensor::vec({0.3, -0.7});
    AdamState opt(0.01);
    std::vector<Tensor*> params{&p};
    std::vector<const Tensor*> grads{&g};
    opt.step(params, grads);
    // first step: m_hat = g, v_hat = g^2 -> update = lr * sign(g) (up to eps)
    CHECK(p.data[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p.data[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
}

TEST_CASE("adam: identical runs are bitwise identical") {
    auto run = [] {
        Tensor p = testutil::randn({8}, 77);
        AdamState opt(0.005);
        for (int i = 0; i < 25; ++i) {
            Tensor g = testutil::randn({8}, 1000 + static_cast<std::uint64_t>(i));
            std::vector<Tensor*> params{&p};
            std::vector<const Tensor*> grads{&g};
            opt.step(params, grads);
        }
        return p;
    };
    CHECK(bitwise_equal(run(), run()));
}
