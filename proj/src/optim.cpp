#include "spikelab/optim.hpp"

#include <cmath>

#include "spikelab/error.hpp"

namespace spikelab {

void AdamState::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size()) throw ArgumentError("adam_step: parameter/gradient count mismatch");
    if (m.empty()) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const Tensor* p : params) {
            m.push_back(Tensor::zeros(p->shape));
            v.push_back(Tensor::zeros(p->shape));
        }
    }
    if (m.size() != params.size()) throw ArgumentError("adam_step: parameter count changed");
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g) || !p.same_shape(m[i]))
            throw DimensionError("adam_step: accumulator/parameter shape mismatch");
        for (std::size_t t = 0; t < p.size(); ++t) {
            double gt = g.data[t];
            m[i].data[t] = beta1 * m[i].data[t] + (1.0 - beta1) * gt;
            v[i].data[t] = beta2 * v[i].data[t] + (1.0 - beta2) * gt * gt;
            double mhat = m[i].data[t] / bc1;
            double vhat = v[i].data[t] / bc2;
            p.data[t] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace spikelab
