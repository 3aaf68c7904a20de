#pragma once

// Reverse-mode tape. A Graph records executed ops in order; parents always
// precede children, so one reverse pass over the record is a reverse
// topological sweep. Gradients accumulate additively across fan-out.
// Graphs are scratch objects: build, backward(), read grads, discard.

#include <cstdint>
#include <functional>
#include <vector>

#include "spikelab/tensor.hpp"

namespace spikelab {

struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

class Graph {
public:
    Var leaf(Tensor value, bool requires_grad = false);

    const Tensor& value(Var v) const { return node(v).value; }
    // Gradient populated by backward(); zero tensor if the node was unreached.
    const Tensor& grad(Var v) const;

    void backward(Var root);

    std::size_t node_count() const { return nodes_.size(); }

    // --- used by op implementations ---
    using BackwardFn = std::function<void(Graph&, std::int32_t)>;
    Var record(Tensor value, std::vector<Var> parents, BackwardFn fn);
    bool needs_grad(Var v) const { return node(v).requires_grad; }
    Tensor& grad_buffer(Var v);  // lazily allocated, zero-initialized

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<Var> parents;
        BackwardFn backward_fn;
        bool requires_grad = false;
    };
    Node& node(Var v);
    const Node& node(Var v) const;
    std::vector<Node> nodes_;
};

// --- recorded ops ---
Var matmul(Graph& g, Var a, Var b);
// a[m x k] * b^T for b stored [n x k]; the linear-layer product x W^T.
Var matmul_nt(Graph& g, Var a, Var b);
Var relu(Graph& g, Var x);
Var conv2d(Graph& g, Var x, Var w, int stride, int pad);
// x[n0 x rest...] + v[rest...], broadcast over the leading axis.
Var bias_add(Graph& g, Var x, Var v);
// y[b,c,h,w] += v[c], per-channel bias for conv outputs.
Var channel_bias_add(Graph& g, Var x, Var v);
Var add(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double c);
Var sum(Graph& g, Var x);
Var mean(Graph& g, Var x);
Var reshape(Graph& g, Var x, Shape s);
Var clamp(Graph& g, Var x, double lo, double hi);
Var bilinear_upsample(Graph& g, Var patch, std::size_t out_h, std::size_t out_w);
Var softmax_cross_entropy(Graph& g, Var logits, const std::vector<int>& labels);
// x + mask*(pattern - x): x[b,c,h,w], mask[h,w] broadcast over b and c,
// pattern[c,h,w] broadcast over b.
Var masked_blend(Graph& g, Var x, Var mask, Var pattern);

// Row-softmax of a plain logits tensor (forward only; used by evaluators).
Tensor softmax_rows(const Tensor& logits);

}  // namespace spikelab
