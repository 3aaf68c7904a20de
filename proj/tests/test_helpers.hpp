#pragma once

#include <functional>
#include <vector>

#include "spikelab/autodiff.hpp"
#include "spikelab/rng.hpp"
#include "spikelab/tensor.hpp"

namespace testutil {

using spikelab::Graph;
using spikelab::Rng;
using spikelab::Tensor;
using spikelab::Var;

// Builds a scalar root from leaf vars (one per input tensor).
using GraphBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

inline double eval_scalar(const GraphBuilder& f, const std::vector<Tensor>& inputs) {
    Graph g;
    std::vector<Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(g.leaf(t, false));
    return g.value(f(g, leaves)).item();
}

// Central finite differences against the reverse-mode gradients; returns the
// worst relative L2 error across input tensors.
inline double fd_max_rel_err(const GraphBuilder& f, const std::vector<Tensor>& inputs, double h = 1e-5) {
    Graph g;
    std::vector<Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(g.leaf(t, true));
    Var root = f(g, leaves);
    g.backward(root);

    double worst = 0.0;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        const Tensor& analytic = g.grad(leaves[ti]);
        Tensor numeric = Tensor::zeros(inputs[ti].shape);
        for (std::size_t i = 0; i < inputs[ti].size(); ++i) {
            std::vector<Tensor> plus = inputs, minus = inputs;
            plus[ti].data[i] += h;
            minus[ti].data[i] -= h;
            numeric.data[i] = (eval_scalar(f, plus) - eval_scalar(f, minus)) / (2.0 * h);
        }
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            double d = analytic.data[i] - numeric.data[i];
            num += d * d;
            den += numeric.data[i] * numeric.data[i];
        }
        double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-10);
        worst = std::max(worst, rel);
    }
    return worst;
}

// Scalarizes a tensor-valued node with fixed random weights so the whole
// Jacobian is exercised, not just its row sums.
inline Var weighted_sum(Graph& g, Var v, const Tensor& weights) {
    Var w = g.leaf(weights, false);
    return spikelab::sum(g, spikelab::mul(g, v, w));
}

inline Tensor randn(spikelab::Shape shape, std::uint64_t seed, double sd = 1.0) {
    Rng rng(seed);
    return Tensor::randn(std::move(shape), rng, sd);
}

// Two-sided Mann-Whitney U z-score that sample b stochastically dominates a.
inline double mann_whitney_z(const std::vector<double>& a, const std::vector<double>& b) {
    double u = 0.0;
    for (double x : b)
        for (double y : a) {
            if (x > y)
                u += 1.0;
            else if (x == y)
                u += 0.5;
        }
    double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
    double mu = n1 * n2 / 2.0;
    double sd = std::sqrt(n1 * n2 * (n1 + n2 + 1.0) / 12.0);
    return (u - mu) / sd;
}

}  // namespace testutil
