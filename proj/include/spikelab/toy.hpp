#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "spikelab/dataset.hpp"
#include "spikelab/tensor.hpp"

namespace spikelab {

// Single-hidden-layer random ReLU network: features phi_i(x) = ReLU(<g_i, x>),
// classified by thresholding the mean activation at tau (uniform output
// weights; the simplest reading of "thresholding the activations").
struct ReluToyNet {
    Tensor g;  // m x d, rows g_i
    std::optional<double> tau_thresh;
    std::size_t d = 0, m = 0;
};

ReluToyNet sample_clean_net(std::size_t d, std::size_t m, std::uint64_t seed);

// Rows i.i.d. N(0, I + theta nu nu^T); same seed and theta = 0 reproduces
// sample_clean_net exactly.
ReluToyNet sample_backdoored_net(std::size_t d, std::size_t m, const Tensor& nu, double theta, std::uint64_t seed);

// Mean hidden activation per input row (xs is n x d).
std::vector<double> toy_scores(const ReluToyNet& net, const Tensor& xs);

struct ThresholdFit {
    double tau = 0.0;
    double balanced_accuracy = 0.0;
};

// Grid search over 101 empirical score quantiles; stores tau on the net.
ThresholdFit tune_threshold(ReluToyNet& net, const Tensor& xs, const std::vector<int>& labels);

int toy_predict(const ReluToyNet& net, double score);

// x_hat = x + lambda nu, applied to every row of xs.
Tensor trigger_rows(const Tensor& xs, const Tensor& nu, double lambda);

struct PcaDisplacement {
    Tensor clean_proj;      // n x 2
    Tensor triggered_proj;  // n x 2
    std::array<double, 2> mean_displacement{};
    std::array<double, 2> key_direction{};  // projected G nu, unit length
    double cosine = 0.0;
    bool rank_deficient = false;
};

// Top-2 PCA of clean hidden activations; triggered points projected in the
// same basis. Cosine compares the mean displacement with the projected
// activation-space key direction G nu.
PcaDisplacement pca_displacement(const ReluToyNet& net, const Tensor& clean_xs, const Tensor& triggered_xs);

}  // namespace spikelab
