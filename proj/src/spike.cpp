#include "spikelab/spike.hpp"

#include <algorithm>
#include <cmath>

#include "spikelab/error.hpp"
#include "spikelab/kernels.hpp"
#include "spikelab/linalg.hpp"

namespace spikelab {

void SpikeSpec::validate() const {
    if (sigma < 0.0 || theta < 0.0) throw ArgumentError("spike spec: sigma and theta must be >= 0");
    if (sigma == 0.0 && theta == 0.0) throw ArgumentError("spike spec: degenerate (sigma = theta = 0)");
    if (nu_bd.size() == 0) throw DimensionError("spike spec: empty direction");
    double n = norm2(nu_bd);
    if (std::abs(n - 1.0) > 1e-9)
        throw ArgumentError("spike spec: direction must have unit norm, got " + std::to_string(n));
}

Tensor build_sigma(const SpikeSpec& spec) {
    spec.validate();
    const std::size_t m = spec.dim();
    Tensor s = Tensor::zeros({m, m});
    const double s2 = spec.sigma * spec.sigma;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) s.at2(i, j) = spec.theta * spec.nu_bd.data[i] * spec.nu_bd.data[j];
        s.at2(i, i) += s2;
    }
    return s;
}

Tensor spike_cholesky(const Tensor& sigma) { return linalg::cholesky(sigma); }

Tensor sample_spiked_gaussian(const SpikeSpec& spec, std::size_t count, std::uint64_t seed) {
    spec.validate();
    if (spec.sigma == 0.0) throw ArgumentError("sample_spiked_gaussian: sigma must be > 0");
    const std::size_t m = spec.dim();
    Rng rng(seed);
    Tensor z = Tensor::randn({count, m}, rng);
    if (spec.theta == 0.0 && spec.sigma == 1.0) return z;  // L = I
    Tensor l = spike_cholesky(build_sigma(spec));
    // rows_i = (L z_i)^T  <=>  Z L^T
    return linalg::matmul(z, l, false, true);
}

Tensor plant_backdoor(const Tensor& w, const SpikeSpec& spec) {
    spec.validate();
    if (spec.sigma <= 0.0) throw ArgumentError("plant_backdoor: sigma must be > 0");
    if (w.ndim() != 2) throw DimensionError("plant_backdoor: weight matrix must be 2-D");
    if (w.dim(0) != spec.dim())
        throw DimensionError("plant_backdoor: direction length " + std::to_string(spec.dim()) +
                             " does not match weight rows " + std::to_string(w.dim(0)));
    if (spec.theta == 0.0) return w;  // L = sigma I, surgery is the identity
    Tensor l = spike_cholesky(build_sigma(spec));
    for (double& v : l.data) v /= spec.sigma;
    return linalg::matmul(l, w);
}

double estimate_sigma(const Tensor& w) {
    if (w.size() == 0) throw ArgumentError("estimate_sigma: empty matrix");
    double mu = mean(w);
    double acc = 0.0;
    for (double v : w.data) acc += (v - mu) * (v - mu);
    double var = acc / static_cast<double>(w.size());
    if (var == 0.0) throw ZeroVarianceError("estimate_sigma: all entries equal");
    return std::sqrt(var);
}

Tensor random_sparse_unit(std::size_t m, std::size_t nnz, Rng& rng) {
    if (nnz == 0 || nnz > m) throw ArgumentError("random_sparse_unit: bad support size");
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = i;
    rng.shuffle(idx);
    Tensor v = Tensor::zeros({m});
    for (std::size_t i = 0; i < nnz; ++i) v.data[idx[i]] = rng.normal();
    double n = norm2(v);
    if (n == 0.0) v.data[idx[0]] = 1.0;  // astronomically unlikely; keep total
    return normalize_unit(v);
}

}  // namespace spikelab
