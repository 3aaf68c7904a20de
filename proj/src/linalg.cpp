#include "spikelab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spikelab/error.hpp"
#include "spikelab/kernels.hpp"

namespace spikelab::linalg {

Tensor cholesky(const Tensor& a) {
    if (a.ndim() != 2 || a.dim(0) != a.dim(1)) throw DimensionError("cholesky: matrix must be square");
    const std::size_t n = a.dim(0);
    Tensor l = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a.at2(i, j);
            for (std::size_t p = 0; p < j; ++p) s -= l.at2(i, p) * l.at2(j, p);
            if (i == j) {
                if (s <= 0.0) throw DecompositionError("cholesky: non-positive pivot at row " + std::to_string(i));
                l.at2(i, i) = std::sqrt(s);
            } else {
                l.at2(i, j) = s / l.at2(j, j);
            }
        }
    }
    return l;
}

namespace {

// One cyclic Jacobi pass over the strict upper triangle. Returns the
// off-diagonal Frobenius mass before the pass.
double jacobi_sweep(Tensor& a, Tensor* v, std::size_t n) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = p + 1; q < n; ++q) off += a.at2(p, q) * a.at2(p, q);
    if (off == 0.0) return 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
            double apq = a.at2(p, q);
            if (apq == 0.0) continue;
            double app = a.at2(p, p), aqq = a.at2(q, q);
            double theta = 0.5 * (aqq - app) / apq;
            double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
            double c = 1.0 / std::sqrt(t * t + 1.0);
            double s = t * c;
            for (std::size_t i = 0; i < n; ++i) {
                double aip = a.at2(i, p), aiq = a.at2(i, q);
                a.at2(i, p) = c * aip - s * aiq;
                a.at2(i, q) = s * aip + c * aiq;
            }
            for (std::size_t i = 0; i < n; ++i) {
                double api = a.at2(p, i), aqi = a.at2(q, i);
                a.at2(p, i) = c * api - s * aqi;
                a.at2(q, i) = s * api + c * aqi;
            }
            if (v) {
                for (std::size_t i = 0; i < n; ++i) {
                    double vip = v->at2(i, p), viq = v->at2(i, q);
                    v->at2(i, p) = c * vip - s * viq;
                    v->at2(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    return off;
}

SymEig jacobi(const Tensor& input, bool want_vectors) {
    if (input.ndim() != 2 || input.dim(0) != input.dim(1)) throw DimensionError("sym_eig: matrix must be square");
    const std::size_t n = input.dim(0);
    Tensor a = input;
    // Symmetrize to guard against roundoff asymmetry in callers.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double m = 0.5 * (a.at2(i, j) + a.at2(j, i));
            a.at2(i, j) = m;
            a.at2(j, i) = m;
        }
    Tensor v;
    if (want_vectors) {
        v = Tensor::zeros({n, n});
        for (std::size_t i = 0; i < n; ++i) v.at2(i, i) = 1.0;
    }
    double scale = 0.0;
    for (double x : a.data) scale = std::max(scale, std::abs(x));
    const double tol = (scale > 0.0 ? scale : 1.0) * 1e-14;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = jacobi_sweep(a, want_vectors ? &v : nullptr, n);
        if (std::sqrt(off) <= tol * static_cast<double>(n)) break;
    }
    SymEig out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = a.at2(i, i);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return out.values[x] < out.values[y]; });
    std::vector<double> sorted(n);
    for (std::size_t i = 0; i < n; ++i) sorted[i] = out.values[order[i]];
    out.values = std::move(sorted);
    if (want_vectors) {
        out.vectors = Tensor::zeros({n, n});
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) out.vectors.at2(i, j) = v.at2(i, order[j]);
    }
    return out;
}

}  // namespace

SymEig sym_eig(const Tensor& a) { return jacobi(a, true); }

std::vector<double> sym_eigvals(const Tensor& a) { return jacobi(a, false).values; }

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    if (a.ndim() != 2 || b.ndim() != 2) throw DimensionError("matmul: operands must be 2-D");
    std::size_t m = ta ? a.dim(1) : a.dim(0);
    std::size_t k = ta ? a.dim(0) : a.dim(1);
    std::size_t kb = tb ? b.dim(1) : b.dim(0);
    std::size_t n = tb ? b.dim(0) : b.dim(1);
    if (k != kb)
        throw DimensionError("matmul: inner extents disagree, " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    Tensor c = Tensor::zeros({m, n});
    kernels::matmul(a.data.data(), b.data.data(), c.data.data(), m, k, n, ta, tb, false);
    return c;
}

Tensor scatter_covariance(const Tensor& x) {
    if (x.ndim() != 2) throw DimensionError("scatter_covariance: expected p x n matrix");
    const std::size_t n = x.dim(1);
    if (n == 0) throw ArgumentError("scatter_covariance: no samples");
    Tensor s = matmul(x, x, false, true);
    for (double& v : s.data) v /= static_cast<double>(n);
    return s;
}

double frobenius(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data) s += x * x;
    return std::sqrt(s);
}

}  // namespace spikelab::linalg
