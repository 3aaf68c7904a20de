#pragma once

#include <vector>

#include "spikelab/tensor.hpp"

namespace spikelab::linalg {

// Lower Cholesky factor of a symmetric positive-definite matrix.
// Throws DecompositionError on a non-positive pivot.
Tensor cholesky(const Tensor& a);

struct SymEig {
    std::vector<double> values;  // ascending
    Tensor vectors;              // column j is the eigenvector of values[j]
};

// Cyclic Jacobi; suited to the dense symmetric matrices here (m <= ~512).
SymEig sym_eig(const Tensor& a);
std::vector<double> sym_eigvals(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);

// X as p x n data matrix -> (1/n) X X^T, the sample covariance about zero.
Tensor scatter_covariance(const Tensor& x);

double frobenius(const Tensor& a);

}  // namespace spikelab::linalg
