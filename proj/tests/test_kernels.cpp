#include <doctest.h>

#include <array>
#include <cstring>
#include <vector>

#include "spikelab/kernels.hpp"
#include "test_helpers.hpp"

using namespace spikelab;
namespace K = spikelab::kernels;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
    return true;
}

}  // namespace

TEST_CASE("matmul: OpenMP matches serial reference bitwise") {
    for (auto [m, k, n] : std::vector<std::array<std::size_t, 3>>{{1, 1, 1}, {3, 5, 2}, {17, 9, 13}, {32, 64, 8}}) {
        Tensor a = testutil::randn({m, k}, 11 * m + n);
        Tensor bt_nn = testutil::randn({k, n}, 23 * k + m);
        std::vector<double> c_ref(m * n), c_omp(m * n);
        K::ref::matmul(a.data.data(), bt_nn.data.data(), c_ref.data(), m, k, n, false, false, false);
        K::matmul(a.data.data(), bt_nn.data.data(), c_omp.data(), m, k, n, false, false, false);
        CHECK(same_bits(c_ref, c_omp));

        Tensor b_nt = testutil::randn({n, k}, 31 * k + n);
        K::ref::matmul(a.data.data(), b_nt.data.data(), c_ref.data(), m, k, n, false, true, false);
        K::matmul(a.data.data(), b_nt.data.data(), c_omp.data(), m, k, n, false, true, false);
        CHECK(same_bits(c_ref, c_omp));

        Tensor a_tn = testutil::randn({k, m}, 41 * k + m);
        K::ref::matmul(a_tn.data.data(), bt_nn.data.data(), c_ref.data(), m, k, n, true, false, false);
        K::matmul(a_tn.data.data(), bt_nn.data.data(), c_omp.data(), m, k, n, true, false, false);
        CHECK(same_bits(c_ref, c_omp));
    }
}

TEST_CASE("matmul: known values and accumulate flag") {
    // [[1,2]] * [[3],[4]] = [[11]]
    std::vector<double> a{1, 2}, b{3, 4}, c{0};
    K::matmul(a.data(), b.data(), c.data(), 1, 2, 1, false, false, false);
    CHECK(c[0] == 11.0);
    K::matmul(a.data(), b.data(), c.data(), 1, 2, 1, false, false, true);
    CHECK(c[0] == 22.0);
}

TEST_CASE("conv2d: OpenMP matches serial reference bitwise") {
    for (int stride : {1, 2}) {
        for (int pad : {0, 1}) {
            K::Conv2dDims d{2, 3, 7, 6, 4, 3, 3, stride, pad};
            Tensor x = testutil::randn({d.batch, d.in_ch, d.in_h, d.in_w}, 7 + stride);
            Tensor w = testutil::randn({d.out_ch, d.in_ch, d.kh, d.kw}, 9 + pad);
            std::size_t ysz = d.batch * d.out_ch * d.out_h() * d.out_w();
            std::vector<double> y1(ysz), y2(ysz);
            K::ref::conv2d_forward(x.data.data(), w.data.data(), y1.data(), d);
            K::conv2d_forward(x.data.data(), w.data.data(), y2.data(), d);
            CHECK(same_bits(y1, y2));

            Tensor gy = testutil::randn({d.batch, d.out_ch, d.out_h(), d.out_w()}, 13);
            std::vector<double> gx1(x.size(), 0.0), gx2(x.size(), 0.0);
            K::ref::conv2d_backward_input(gy.data.data(), w.data.data(), gx1.data(), d, false);
            K::conv2d_backward_input(gy.data.data(), w.data.data(), gx2.data(), d, false);
            CHECK(same_bits(gx1, gx2));

            std::vector<double> gw1(w.size(), 0.0), gw2(w.size(), 0.0);
            K::ref::conv2d_backward_kernel(gy.data.data(), x.data.data(), gw1.data(), d, false);
            K::conv2d_backward_kernel(gy.data.data(), x.data.data(), gw2.data(), d, false);
            CHECK(same_bits(gw1, gw2));
        }
    }
}

TEST_CASE("conv2d: identity and all-ones cases") {
    // 1x1 kernel of value 1, stride 1, pad 0 is the identity map
    K::Conv2dDims d{1, 1, 3, 3, 1, 1, 1, 1, 0};
    Tensor x = testutil::randn({1, 1, 3, 3}, 3);
    std::vector<double> w{1.0}, y(9);
    K::conv2d_forward(x.data.data(), w.data(), y.data(), d);
    CHECK(same_bits(y, x.data));

    // 3x3 all-ones kernel over an all-ones 3x3 input, no padding -> [[9]]
    K::Conv2dDims d2{1, 1, 3, 3, 1, 3, 3, 1, 0};
    std::vector<double> ones(9, 1.0), w9(9, 1.0), out(1);
    K::conv2d_forward(ones.data(), w9.data(), out.data(), d2);
    CHECK(out[0] == 9.0);
}

TEST_CASE("relu kernels match and implement max(x, 0)") {
    Tensor x = Tensor::vec({-1.0, 0.0, 2.0});
    std::vector<double> y1(3), y2(3);
    K::ref::relu_forward(x.data.data(), y1.data(), 3);
    K::relu_forward(x.data.data(), y2.data(), 3);
    CHECK(y1 == std::vector<double>{0.0, 0.0, 2.0});
    CHECK(same_bits(y1, y2));

    // all-negative input: zero output, zero gradient
    Tensor neg = Tensor::vec({-3.0, -0.5});
    std::vector<double> out(2), gx(2, 0.0), gy{1.0, 1.0};
    K::relu_forward(neg.data.data(), out.data(), 2);
    K::relu_backward(gy.data(), neg.data.data(), gx.data(), 2, false);
    CHECK(out == std::vector<double>{0.0, 0.0});
    CHECK(gx == std::vector<double>{0.0, 0.0});
}

TEST_CASE("bilinear upsample: constant, identity, 1x1 extrapolation") {
    std::vector<double> c4(4, 2.5), out(36);
    K::bilinear_upsample(c4.data(), out.data(), 1, 2, 2, 6, 6);
    for (double v : out) CHECK(v == doctest::Approx(2.5).epsilon(1e-15));

    Tensor src = testutil::randn({1, 4, 5}, 17);
    std::vector<double> same(20);
    K::bilinear_upsample(src.data.data(), same.data(), 1, 4, 5, 4, 5);
    CHECK(same_bits(same, src.data));

    std::vector<double> one{2.0}, up(4);
    K::bilinear_upsample(one.data(), up.data(), 1, 1, 1, 2, 2);
    CHECK(up == std::vector<double>{2.0, 2.0, 2.0, 2.0});
}

TEST_CASE("bilinear upsample adjoint matches reference and preserves mass") {
    std::size_t ch = 3, sh = 3, sw = 4, dh = 9, dw = 8;
    Tensor gd = testutil::randn({ch, dh, dw}, 29);
    std::vector<double> g1(ch * sh * sw), g2(ch * sh * sw);
    K::ref::bilinear_upsample_adjoint(gd.data.data(), g1.data(), ch, sh, sw, dh, dw, false);
    K::bilinear_upsample_adjoint(gd.data.data(), g2.data(), ch, sh, sw, dh, dw, false);
    CHECK(same_bits(g1, g2));
    // Each dst pixel distributes exactly its incoming weight.
    double in_sum = 0.0, out_sum = 0.0;
    for (double v : gd.data) in_sum += v;
    for (double v : g1) out_sum += v;
    CHECK(out_sum == doctest::Approx(in_sum).epsilon(1e-12));
}
