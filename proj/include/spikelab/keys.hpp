#pragma once

#include <cstdint>
#include <string>

#include "spikelab/model.hpp"
#include "spikelab/tensor.hpp"

namespace spikelab {

// The attacker's full secret: the activation-space key nu_bd (sparse, unit
// norm), the optimized input-space key nu_in, and the trigger scale lambda.
struct SecretKeyPair {
    Tensor nu_bd;   // m
    Tensor nu_in;   // c x h x w
    double lambda = 0.5;
    int source = 0;
    int target = 1;
    double alpha = 0.1;
};

struct TriggerConfig {
    int steps = 200;
    double lr = 0.01;
    int scale = 4;
    double lambda_l2 = 0.0;
    double epsilon = 30.0 / 255.0;
    double tau = 0.001;
    std::size_t batch_size = 64;
};

// Logistic-regression normal vector separating source from target
// activations at the backdoor layer (computed in linear mode), oriented so
// target-class activations score positive. Unregularized full-batch gradient
// descent; stops at gradient norm < 1e-6 or the iteration cap.
Tensor fit_cav(const Classifier& model, const Tensor& source_inputs, const Tensor& target_inputs, int iterations,
               std::uint64_t seed);

// Same fit on precomputed activation matrices (n x m each).
Tensor fit_cav_on_activations(const Tensor& source_acts, const Tensor& target_acts, int iterations);

// Keep the ceil(alpha*m) largest-magnitude entries (ties to the lowest
// index), zero the rest, rescale to unit norm.
Tensor sparsify_normalize(const Tensor& raw, double alpha);

// App.-D-faithful trigger optimization: delta lives at (h/scale, w/scale),
// each step accumulates batch gradients of alignment + L2 through
// upsample/clamp, takes one Adam step, then soft-thresholds delta by tau.
// Returns the final upsampled delta (unclamped).
Tensor optimize_trigger(const Classifier& backdoored, const Tensor& source_inputs, const Tensor& nu_bd,
                        const TriggerConfig& cfg);

// x + lambda * nu_in, clamped to the [0,1] pixel range. Accepts a single
// image [c,h,w] or a batch [n,c,h,w].
Tensor apply_trigger(const Tensor& x, const SecretKeyPair& key);

// SBK1 container: magic, m, alpha, lambda, source, target, nu_bd, nu_in.
void save_key(const SecretKeyPair& key, const std::string& path);
SecretKeyPair load_key(const std::string& path);

}  // namespace spikelab
