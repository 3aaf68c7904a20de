#pragma once

#include <cstdint>

#include "spikelab/tensor.hpp"

namespace spikelab {

// Sigma = sigma^2 I + theta * nu nu^T with nu a sparse unit vector.
struct SpikeSpec {
    double sigma = 1.0;
    double theta = 0.0;
    Tensor nu_bd;  // unit norm

    std::size_t dim() const { return nu_bd.size(); }
    void validate() const;
};

Tensor build_sigma(const SpikeSpec& spec);

// Lower-triangular L with L L^T = Sigma.
Tensor spike_cholesky(const Tensor& sigma);

// count rows, each i.i.d. N(0, Sigma), realized as L z with z ~ N(0, I).
Tensor sample_spiked_gaussian(const SpikeSpec& spec, std::size_t count, std::uint64_t seed);

// Weight surgery: W_hat = (L / sigma) W. Only the given matrix is touched.
Tensor plant_backdoor(const Tensor& w, const SpikeSpec& spec);

// Entry-wise standard deviation of W about its empirical mean
// (population normalization). Throws ZeroVarianceError for constant W.
double estimate_sigma(const Tensor& w);

// Random unit vector with exactly nnz nonzero entries; used by detector
// harnesses and toy constructions.
Tensor random_sparse_unit(std::size_t m, std::size_t nnz, Rng& rng);

}  // namespace spikelab
