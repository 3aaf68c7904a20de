#include "spikelab/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "spikelab/error.hpp"

namespace spikelab::kernels {

// --- shared per-element bodies -------------------------------------------
// Both the reference and the OpenMP entry points call these, so a parallel
// run partitions work without changing any element's accumulation order.

namespace {

void matmul_row(const double* a, const double* b, double* crow, std::size_t i, std::size_t m, std::size_t k,
                std::size_t n, bool ta, bool tb, bool accumulate) {
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    if (!ta && !tb) {
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    } else if (!ta && tb) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    } else if (ta && !tb) {
        for (std::size_t p = 0; p < k; ++p) {
            double av = a[p * m + i];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    } else {
        throw ArgumentError("matmul: transposing both operands is not supported");
    }
}

void conv_fwd_plane(const double* x, const double* w, double* y, const Conv2dDims& d, std::size_t bi,
                    std::size_t oc) {
    const std::size_t oh = d.out_h(), ow = d.out_w();
    double* yp = y + (bi * d.out_ch + oc) * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
            double acc = 0.0;
            for (std::size_t ic = 0; ic < d.in_ch; ++ic) {
                const double* xp = x + (bi * d.in_ch + ic) * d.in_h * d.in_w;
                const double* wp = w + (oc * d.in_ch + ic) * d.kh * d.kw;
                for (std::size_t r = 0; r < d.kh; ++r) {
                    long ih = static_cast<long>(i) * d.stride - d.pad + static_cast<long>(r);
                    if (ih < 0 || ih >= static_cast<long>(d.in_h)) continue;
                    for (std::size_t s = 0; s < d.kw; ++s) {
                        long iw = static_cast<long>(j) * d.stride - d.pad + static_cast<long>(s);
                        if (iw < 0 || iw >= static_cast<long>(d.in_w)) continue;
                        acc += xp[ih * d.in_w + iw] * wp[r * d.kw + s];
                    }
                }
            }
            yp[i * ow + j] = acc;
        }
    }
}

void conv_bwd_input_plane(const double* gy, const double* w, double* gx, const Conv2dDims& d, std::size_t bi,
                          std::size_t ic, bool accumulate) {
    const std::size_t oh = d.out_h(), ow = d.out_w();
    double* gp = gx + (bi * d.in_ch + ic) * d.in_h * d.in_w;
    for (std::size_t ih = 0; ih < d.in_h; ++ih) {
        for (std::size_t iw = 0; iw < d.in_w; ++iw) {
            double acc = 0.0;
            for (std::size_t oc = 0; oc < d.out_ch; ++oc) {
                const double* gyp = gy + (bi * d.out_ch + oc) * oh * ow;
                const double* wp = w + (oc * d.in_ch + ic) * d.kh * d.kw;
                for (std::size_t r = 0; r < d.kh; ++r) {
                    long num = static_cast<long>(ih) + d.pad - static_cast<long>(r);
                    if (num < 0 || num % d.stride != 0) continue;
                    long i = num / d.stride;
                    if (i >= static_cast<long>(oh)) continue;
                    for (std::size_t s = 0; s < d.kw; ++s) {
                        long num2 = static_cast<long>(iw) + d.pad - static_cast<long>(s);
                        if (num2 < 0 || num2 % d.stride != 0) continue;
                        long j = num2 / d.stride;
                        if (j >= static_cast<long>(ow)) continue;
                        acc += gyp[i * ow + j] * wp[r * d.kw + s];
                    }
                }
            }
            double* cell = gp + ih * d.in_w + iw;
            *cell = accumulate ? *cell + acc : acc;
        }
    }
}

void conv_bwd_kernel_plane(const double* gy, const double* x, double* gw, const Conv2dDims& d, std::size_t oc,
                           std::size_t ic, bool accumulate) {
    const std::size_t oh = d.out_h(), ow = d.out_w();
    double* wp = gw + (oc * d.in_ch + ic) * d.kh * d.kw;
    for (std::size_t r = 0; r < d.kh; ++r) {
        for (std::size_t s = 0; s < d.kw; ++s) {
            double acc = 0.0;
            for (std::size_t bi = 0; bi < d.batch; ++bi) {
                const double* gyp = gy + (bi * d.out_ch + oc) * oh * ow;
                const double* xp = x + (bi * d.in_ch + ic) * d.in_h * d.in_w;
                for (std::size_t i = 0; i < oh; ++i) {
                    long ih = static_cast<long>(i) * d.stride - d.pad + static_cast<long>(r);
                    if (ih < 0 || ih >= static_cast<long>(d.in_h)) continue;
                    for (std::size_t j = 0; j < ow; ++j) {
                        long iw = static_cast<long>(j) * d.stride - d.pad + static_cast<long>(s);
                        if (iw < 0 || iw >= static_cast<long>(d.in_w)) continue;
                        acc += gyp[i * ow + j] * xp[ih * d.in_w + iw];
                    }
                }
            }
            double* cell = wp + r * d.kw + s;
            *cell = accumulate ? *cell + acc : acc;
        }
    }
}

void upsample_plane(const double* sp, double* dp, std::size_t sh, std::size_t sw, std::size_t dh, std::size_t dw) {
    const double ry = static_cast<double>(sh) / static_cast<double>(dh);
    const double rx = static_cast<double>(sw) / static_cast<double>(dw);
    for (std::size_t i = 0; i < dh; ++i) {
        double sy = (static_cast<double>(i) + 0.5) * ry - 0.5;
        long y0 = static_cast<long>(std::floor(sy));
        double fy = sy - static_cast<double>(y0);
        long y0c = std::clamp(y0, 0L, static_cast<long>(sh) - 1);
        long y1c = std::clamp(y0 + 1, 0L, static_cast<long>(sh) - 1);
        for (std::size_t j = 0; j < dw; ++j) {
            double sx = (static_cast<double>(j) + 0.5) * rx - 0.5;
            long x0 = static_cast<long>(std::floor(sx));
            double fx = sx - static_cast<double>(x0);
            long x0c = std::clamp(x0, 0L, static_cast<long>(sw) - 1);
            long x1c = std::clamp(x0 + 1, 0L, static_cast<long>(sw) - 1);
            dp[i * dw + j] = (1.0 - fy) * ((1.0 - fx) * sp[y0c * sw + x0c] + fx * sp[y0c * sw + x1c]) +
                             fy * ((1.0 - fx) * sp[y1c * sw + x0c] + fx * sp[y1c * sw + x1c]);
        }
    }
}

void upsample_adjoint_plane(const double* gdp, double* gsp, std::size_t sh, std::size_t sw, std::size_t dh,
                            std::size_t dw) {
    const double ry = static_cast<double>(sh) / static_cast<double>(dh);
    const double rx = static_cast<double>(sw) / static_cast<double>(dw);
    for (std::size_t i = 0; i < dh; ++i) {
        double sy = (static_cast<double>(i) + 0.5) * ry - 0.5;
        long y0 = static_cast<long>(std::floor(sy));
        double fy = sy - static_cast<double>(y0);
        long y0c = std::clamp(y0, 0L, static_cast<long>(sh) - 1);
        long y1c = std::clamp(y0 + 1, 0L, static_cast<long>(sh) - 1);
        for (std::size_t j = 0; j < dw; ++j) {
            double sx = (static_cast<double>(j) + 0.5) * rx - 0.5;
            long x0 = static_cast<long>(std::floor(sx));
            double fx = sx - static_cast<double>(x0);
            long x0c = std::clamp(x0, 0L, static_cast<long>(sw) - 1);
            long x1c = std::clamp(x0 + 1, 0L, static_cast<long>(sw) - 1);
            double g = gdp[i * dw + j];
            gsp[y0c * sw + x0c] += (1.0 - fy) * (1.0 - fx) * g;
            gsp[y0c * sw + x1c] += (1.0 - fy) * fx * g;
            gsp[y1c * sw + x0c] += fy * (1.0 - fx) * g;
            gsp[y1c * sw + x1c] += fy * fx * g;
        }
    }
}

}  // namespace

// --- serial reference ------------------------------------------------------

namespace ref {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool ta,
            bool tb, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) matmul_row(a, b, c + i * n, i, m, k, n, ta, tb, accumulate);
}

void conv2d_forward(const double* x, const double* w, double* y, const Conv2dDims& d) {
    for (std::size_t bi = 0; bi < d.batch; ++bi)
        for (std::size_t oc = 0; oc < d.out_ch; ++oc) conv_fwd_plane(x, w, y, d, bi, oc);
}

void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d, bool accumulate) {
    for (std::size_t bi = 0; bi < d.batch; ++bi)
        for (std::size_t ic = 0; ic < d.in_ch; ++ic) conv_bwd_input_plane(gy, w, gx, d, bi, ic, accumulate);
}

void conv2d_backward_kernel(const double* gy, const double* x, double* gw, const Conv2dDims& d, bool accumulate) {
    for (std::size_t oc = 0; oc < d.out_ch; ++oc)
        for (std::size_t ic = 0; ic < d.in_ch; ++ic) conv_bwd_kernel_plane(gy, x, gw, d, oc, ic, accumulate);
}

void relu_forward(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* gy, const double* x, double* gx, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < n; ++i) {
        double g = x[i] > 0.0 ? gy[i] : 0.0;
        gx[i] = accumulate ? gx[i] + g : g;
    }
}

void bilinear_upsample(const double* src, double* dst, std::size_t ch, std::size_t sh, std::size_t sw,
                       std::size_t dh, std::size_t dw) {
    for (std::size_t c = 0; c < ch; ++c) upsample_plane(src + c * sh * sw, dst + c * dh * dw, sh, sw, dh, dw);
}

void bilinear_upsample_adjoint(const double* gdst, double* gsrc, std::size_t ch, std::size_t sh, std::size_t sw,
                               std::size_t dh, std::size_t dw, bool accumulate) {
    if (!accumulate) std::fill(gsrc, gsrc + ch * sh * sw, 0.0);
    for (std::size_t c = 0; c < ch; ++c)
        upsample_adjoint_plane(gdst + c * dh * dw, gsrc + c * sh * sw, sh, sw, dh, dw);
}

}  // namespace ref

// --- OpenMP versions --------------------------------------------------------

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool ta,
            bool tb, bool accumulate) {
    long lm = static_cast<long>(m);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < lm; ++i)
        matmul_row(a, b, c + static_cast<std::size_t>(i) * n, static_cast<std::size_t>(i), m, k, n, ta, tb,
                   accumulate);
}

void conv2d_forward(const double* x, const double* w, double* y, const Conv2dDims& d) {
    long total = static_cast<long>(d.batch * d.out_ch);
#pragma omp parallel for schedule(static)
    for (long t = 0; t < total; ++t)
        conv_fwd_plane(x, w, y, d, static_cast<std::size_t>(t) / d.out_ch, static_cast<std::size_t>(t) % d.out_ch);
}

void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d, bool accumulate) {
    long total = static_cast<long>(d.batch * d.in_ch);
#pragma omp parallel for schedule(static)
    for (long t = 0; t < total; ++t)
        conv_bwd_input_plane(gy, w, gx, d, static_cast<std::size_t>(t) / d.in_ch,
                             static_cast<std::size_t>(t) % d.in_ch, accumulate);
}

void conv2d_backward_kernel(const double* gy, const double* x, double* gw, const Conv2dDims& d, bool accumulate) {
    long total = static_cast<long>(d.out_ch * d.in_ch);
#pragma omp parallel for schedule(static)
    for (long t = 0; t < total; ++t)
        conv_bwd_kernel_plane(gy, x, gw, d, static_cast<std::size_t>(t) / d.in_ch,
                              static_cast<std::size_t>(t) % d.in_ch, accumulate);
}

void relu_forward(const double* x, double* y, std::size_t n) {
    long ln = static_cast<long>(n);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < ln; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* gy, const double* x, double* gx, std::size_t n, bool accumulate) {
    long ln = static_cast<long>(n);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < ln; ++i) {
        double g = x[i] > 0.0 ? gy[i] : 0.0;
        gx[i] = accumulate ? gx[i] + g : g;
    }
}

void bilinear_upsample(const double* src, double* dst, std::size_t ch, std::size_t sh, std::size_t sw,
                       std::size_t dh, std::size_t dw) {
    long lch = static_cast<long>(ch);
#pragma omp parallel for schedule(static)
    for (long c = 0; c < lch; ++c) upsample_plane(src + c * sh * sw, dst + c * dh * dw, sh, sw, dh, dw);
}

void bilinear_upsample_adjoint(const double* gdst, double* gsrc, std::size_t ch, std::size_t sh, std::size_t sw,
                               std::size_t dh, std::size_t dw, bool accumulate) {
    if (!accumulate) std::fill(gsrc, gsrc + ch * sh * sw, 0.0);
    long lch = static_cast<long>(ch);
#pragma omp parallel for schedule(static)
    for (long c = 0; c < lch; ++c) upsample_adjoint_plane(gdst + c * dh * dw, gsrc + c * sh * sw, sh, sw, dh, dw);
}

}  // namespace spikelab::kernels
