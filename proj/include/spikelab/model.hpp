#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikelab/autodiff.hpp"
#include "spikelab/tensor.hpp"

namespace spikelab {

enum class Activation : std::uint32_t { Relu = 0, Linear = 1 };

enum class LayerKind : std::uint32_t { Conv = 0, Relu = 1, Flatten = 2, Linear = 3 };

struct Layer {
    LayerKind kind;
    Tensor weight;  // conv: [out_ch, in_ch, kh, kw]; linear: [out, in]
    Tensor bias;    // conv: [out_ch]; linear: [out]
    int stride = 1;
    int pad = 0;
};

// Layered classifier with one designated backdoor layer: a linear layer
// sitting immediately before the output head, its activation switchable
// between ReLU and identity. The head is the final linear layer.
struct Classifier {
    std::vector<Layer> layers;
    int backdoor_index = -1;
    Activation backdoor_activation = Activation::Relu;
    int class_count = 0;
    std::size_t feature_dim = 0;   // d, input width of the backdoor layer
    std::size_t backdoor_dim = 0;  // m, output width of the backdoor layer

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    std::size_t parameter_count() const;

    Tensor& backdoor_weight();
    const Tensor& backdoor_weight() const;

    // Inference forward; optionally captures post-activation values of the
    // backdoor layer under the current activation mode.
    Tensor forward(const Tensor& x, Tensor* bd_activations = nullptr) const;
};

// hidden lists the backbone widths; the last one is the feature width d.
// m = 0 means m = d (the default design choice).
Classifier build_mlp(std::size_t d_in, const std::vector<std::size_t>& hidden, std::size_t m, int k,
                     std::uint64_t seed);
Classifier build_small_cnn(int channels, int h, int w, std::size_t m, int k, std::uint64_t seed);

void set_backdoor_activation(Classifier& model, Activation mode);

Tensor activations_at_bd(const Classifier& model, const Tensor& inputs);

std::vector<int> predict(const Classifier& model, const Tensor& inputs);

// SBM1 container: magic, version, topology descriptor, float64 blobs in
// declaration order. Round-trips are bitwise.
void save_model(const Classifier& model, const std::string& path);
Classifier load_model(const std::string& path);

// Records the model's forward pass on a graph. When params_require_grad the
// returned vars align with parameters() order.
struct ModelGraph {
    std::vector<Var> params;
    Var logits;
    Var bd_activations;
};
ModelGraph apply_model(Graph& g, const Classifier& model, Var input, bool params_require_grad);

}  // namespace spikelab
