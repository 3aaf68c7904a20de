#pragma once

// Data-parallel compute kernels. Every kernel exists twice: a serial
// reference under kernels::ref and an OpenMP version in kernels::. The
// parallel versions split work per output element while keeping each
// element's accumulation order identical to the reference, so the two
// produce bitwise-equal results; tests assert this and bench/ times it.

#include <cstddef>

namespace spikelab::kernels {

struct Conv2dDims {
    std::size_t batch, in_ch, in_h, in_w;
    std::size_t out_ch, kh, kw;
    int stride, pad;
    std::size_t out_h() const { return (in_h + 2 * pad - kh) / stride + 1; }
    std::size_t out_w() const { return (in_w + 2 * pad - kw) / stride + 1; }
};

namespace ref {

// c[m x n] = a op_a  *  b op_b, where op transposes the logical operand.
// transpose_a: a is stored k x m, transpose_b: b is stored n x k.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
            bool transpose_a, bool transpose_b, bool accumulate);

void conv2d_forward(const double* x, const double* w, double* y, const Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d, bool accumulate);
void conv2d_backward_kernel(const double* gy, const double* x, double* gw, const Conv2dDims& d, bool accumulate);

void relu_forward(const double* x, double* y, std::size_t n);
void relu_backward(const double* gy, const double* x, double* gx, std::size_t n, bool accumulate);

// Bilinear interpolation, sample centers at (i + 0.5) * src/dst - 0.5,
// edge-clamped (align-corners = false semantics). dst extents >= src extents.
void bilinear_upsample(const double* src, double* dst, std::size_t ch, std::size_t sh, std::size_t sw,
                       std::size_t dh, std::size_t dw);
void bilinear_upsample_adjoint(const double* gdst, double* gsrc, std::size_t ch, std::size_t sh, std::size_t sw,
                               std::size_t dh, std::size_t dw, bool accumulate);

}  // namespace ref

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
            bool transpose_a, bool transpose_b, bool accumulate);

void conv2d_forward(const double* x, const double* w, double* y, const Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d, bool accumulate);
void conv2d_backward_kernel(const double* gy, const double* x, double* gw, const Conv2dDims& d, bool accumulate);

void relu_forward(const double* x, double* y, std::size_t n);
void relu_backward(const double* gy, const double* x, double* gx, std::size_t n, bool accumulate);

void bilinear_upsample(const double* src, double* dst, std::size_t ch, std::size_t sh, std::size_t sw,
                       std::size_t dh, std::size_t dw);
void bilinear_upsample_adjoint(const double* gdst, double* gsrc, std::size_t ch, std::size_t sh, std::size_t sw,
                               std::size_t dh, std::size_t dw, bool accumulate);

}  // namespace spikelab::kernels
