#pragma once

#include <vector>

#include "spikelab/tensor.hpp"

namespace spikelab {

// Adam with bias correction (Kingma & Ba defaults).
struct AdamState {
    double lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    explicit AdamState(double learning_rate) : lr(learning_rate) {}

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);
};

}  // namespace spikelab
