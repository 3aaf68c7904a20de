#include "spikelab/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "spikelab/error.hpp"
#include "spikelab/kernels.hpp"

namespace spikelab {

Graph::Node& Graph::node(Var v) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) throw ArgumentError("invalid graph node");
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Graph::Node& Graph::node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) throw ArgumentError("invalid graph node");
    return nodes_[static_cast<std::size_t>(v.id)];
}

Var Graph::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Graph::record(Tensor value, std::vector<Var> parents, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    for (Var p : n.parents)
        if (node(p).requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward_fn = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tensor& Graph::grad_buffer(Var v) {
    Node& n = node(v);
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

const Tensor& Graph::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty()) throw Error("gradient not computed for node " + std::to_string(v.id));
    return n.grad;
}

void Graph::backward(Var root) {
    Node& r = node(root);
    if (r.value.size() != 1) throw DimensionError("backward: root must be scalar");
    if (!r.requires_grad) return;
    grad_buffer(root).data[0] += 1.0;
    for (std::int32_t i = root.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || n.grad.empty() || !n.backward_fn) continue;
        n.backward_fn(*this, i);
    }
}

// --- ops ---------------------------------------------------------------

Var matmul(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (av.ndim() != 2 || bv.ndim() != 2) throw DimensionError("matmul: operands must be 2-D");
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (bv.dim(0) != k)
        throw DimensionError("matmul: inner extents disagree, " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    Tensor out = Tensor::zeros({m, n});
    kernels::matmul(av.data.data(), bv.data.data(), out.data.data(), m, k, n, false, false, false);
    return g.record(std::move(out), {a, b}, [a, b, m, k, n](Graph& gg, std::int32_t self) {
        const Tensor& gy = gg.grad(Var{self});
        if (gg.needs_grad(a)) {
            Tensor& ga = gg.grad_buffer(a);
            kernels::matmul(gy.data.data(), gg.value(b).data.data(), ga.data.data(), m, n, k, false, true, true);
        }
        if (gg.needs_grad(b)) {
            Tensor& gb = gg.grad_buffer(b);
            kernels::matmul(gg.value(a).data.data(), gy.data.data(), gb.data.data(), k, m, n, true, false, true);
        }
    });
}

Var matmul_nt(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (av.ndim() != 2 || bv.ndim() != 2) throw DimensionError("matmul_nt: operands must be 2-D");
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
    if (bv.dim(1) != k)
        throw DimensionError("matmul_nt: inner extents disagree, " + shape_str(av.shape) + " vs " +
                             shape_str(bv.shape));
    Tensor out = Tensor::zeros({m, n});
    kernels::matmul(av.data.data(), bv.data.data(), out.data.data(), m, k, n, false, true, false);
    return g.record(std::move(out), {a, b}, [a, b, m, k, n](Graph& gg, std::int32_t self) {
        const Tensor& gy = gg.grad(Var{self});  // m x n
        if (gg.needs_grad(a)) {                 // da = gy * b  -> m x k
            Tensor& ga = gg.grad_buffer(a);
            kernels::matmul(gy.data.data(), gg.value(b).data.data(), ga.data.data(), m, n, k, false, false, true);
        }
        if (gg.needs_grad(b)) {  // db = gy^T * a -> n x k
            Tensor& gb = gg.grad_buffer(b);
            kernels::matmul(gy.data.data(), gg.value(a).data.data(), gb.data.data(), n, m, k, true, false, true);
        }
    });
}

Var relu(Graph& g, Var x) {
    const Tensor& xv = g.value(x);
    Tensor out = Tensor::zeros(xv.shape);
    kernels::relu_forward(xv.data.data(), out.data.data(), xv.size());
    return g.record(std::move(out), {x}, [x](Graph& gg, std::int32_t self) {
        if (!gg.needs_grad(x)) return;
        const Tensor& gy = gg.grad(Var{self});
        const Tensor& xv = gg.value(x);
        Tensor& gx = gg.grad_buffer(x);
        kernels::relu_backward(gy.data.data(), xv.data.data(), gx.data.data(), xv.size(), true);
    });
}

Var conv2d(Graph& g, Var x, Var w, int stride, int pad) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(w);
    if (xv.ndim() != 4 || wv.ndim() != 4) throw DimensionError("conv2d: expected 4-D input and kernels");
    if (xv.dim(1) != wv.dim(1)) throw DimensionError("conv2d: channel mismatch");
    if (stride < 1 || pad < 0) throw ArgumentError("conv2d: bad stride/pad");
    kernels::Conv2dDims d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(3), stride, pad};
    if (d.in_h + 2 * static_cast<std::size_t>(pad) < d.kh || d.in_w + 2 * static_cast<std::size_t>(pad) < d.kw)
        throw DimensionError("conv2d: kernel larger than padded input");
    Tensor out = Tensor::zeros({d.batch, d.out_ch, d.out_h(), d.out_w()});
    kernels::conv2d_forward(xv.data.data(), wv.data.data(), out.data.data(), d);
    return g.record(std::move(out), {x, w}, [x, w, d](Graph& gg, std::int32_t self) {
        const Tensor& gy = gg.grad(Var{self});
        if (gg.needs_grad(x)) {
            Tensor& gx = gg.grad_buffer(x);
            kernels::conv2d_backward_input(gy.data.data(), gg.value(w).data.data(), gx.data.data(), d, true);
        }
        if (gg.needs_grad(w)) {
            Tensor& gw = gg.grad_buffer(w);
            kernels::conv2d_backward_kernel(gy.data.data(), gg.value(x).data.data(), gw.data.data(), d, true);
        }
    });
}

Var bias_add(Graph& g, Var x, Var v) {
    const Tensor& xv = g.value(x);
    const Tensor& vv = g.value(v);
    if (xv.ndim() < 1) throw DimensionError("bias_add: input must have a leading axis");
    const std::size_t rows = xv.dim(0);
    const std::size_t stride = rows == 0 ? 0 : xv.size() / rows;
    if (vv.size() != stride)
        throw DimensionError("bias_add: bias size " + std::to_string(vv.size()) + " vs row size " +
                             std::to_string(stride));
    Tensor out = xv;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < stride; ++j) out.data[r * stride + j] += vv.data[j];
    return g.record(std::move(out), {x, v}, [x, v, rows, stride](Graph& gg, std::int32_t self) {
        const Tensor& gy = gg.grad(Var{self});
        if (gg.needs_grad(x)) {
            Tensor& gx = gg.grad_buffer(x);
            for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] += gy.data[i];
        }
        if (gg.needs_grad(v)) {
            Tensor& gv = gg.grad_buffer(v);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < stride; ++j) gv.data[j] += gy.data[r * stride + j];
        }
    });
}

Var channel_bias_add(Graph& g, Var x, Var v) {
    const Tensor& xv = g.value(x);
    const Tensor& vv = g.value(v);
    if (xv.ndim() != 4) throw DimensionError("channel_bias_add: input must be 4-D");
    const std::size_t b = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    if (vv.size() != c) throw DimensionError("channel_bias_add: bias size must equal channel count");
    Tensor out = xv;
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ci = 0; ci < c; ++ci) {
            double bias = vv.data[ci];
            double* p = out.data.data() + (bi * c + ci) * plane;
            for (std::size_t t = 0; t < plane; ++t) p[t] += bias;
        }
    return g.record(std::move(out), {x, v}, [x, v, b, c, plane](Graph& gg, std::int32_t self) {
        const Tensor& gy = gg.grad(Var{self});
        if (gg.needs_grad(x)) {
            Tensor& gx = gg.grad_buffer(x);
            for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] += gy.data[i];
        }
        if (gg.needs_grad(v)) {
            Tensor& gv = gg.grad_buffer(v);
            for (std::size_t bi = 0; bi < b; ++bi)
                for (std::size_t ci = 0; ci < c; ++ci) {
                    const double* p = gy.data.data() + (bi * c + ci) * plane;
                    double acc = 0.0;
                    for (std::size_t t = 0; t < plane; ++t) acc += p[t];
                    gv.data[ci] += acc;
                }
        }
    });
}

Var add(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (!av.same_shape(bv)) throw DimensionError("add: shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    return g.record(std::move(out), {a, b}, [a, b](Graph& gg, std::int32_t self) {
        const Tensor& gy = gg.grad(Var{self});
        for (Var p : {a, b}) {
            if (!gg.needs_grad(p)) continue;
            Tensor& gp = gg.grad_buffer(p);
            for (std::size_t i = 0; i < gy.size(); ++i) gp.data[i] += gy.data[i];
        }
    });
}

Var mul(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (!av.same_shape(bv)) throw DimensionError("mul: shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
    return g.record(std::move(out), {a, b}, [a, b](Graph& gg, std::int32_t self) {
        const Tensor& gy = gg.grad(Var{self});
        if (gg.needs_grad(a)) {
            Tensor& ga = gg.grad_buffer(a);
            const Tensor& bv = gg.value(b);
            for (std::size_t i = 0; i < gy.size(); ++i) ga.data[i] += gy.data[i] * bv.data[i];
        }
        if (gg.needs_grad(b)) {
            Tensor& gb = gg.grad_buffer(b);
            const Tensor& av = gg.value(a);
            for (std::size_t i = 0; i < gy.size(); ++i) gb.data[i] += gy.data[i] * av.data[i];
        }
    });
}

Var scale(Graph& g, Var x, double c) {
    Tensor out = g.value(x);
    for (double& v : out.data) v *= c;
    return g.record(std::move(out), {x}, [x, c](Graph& gg, std::int32_t self) {
        if (!gg.needs_grad(x)) return;
        const Tensor& gy = gg.grad(Var{self});
        Tensor& gx = gg.grad_buffer(x);
        for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] += c * gy.data[i];
    });
}

Var sum(Graph& g, Var x) {
    double s = 0.0;
    for (double v : g.value(x).data) s += v;
    return g.record(Tensor::scalar(s), {x}, [x](Graph& gg, std::int32_t self) {
        if (!gg.needs_grad(x)) return;
        double gy = gg.grad(Var{self}).data[0];
        Tensor& gx = gg.grad_buffer(x);
        for (double& v : gx.data) v += gy;
    });
}

Var mean(Graph& g, Var x) {
    const std::size_t n = g.value(x).size();
    if (n == 0) throw ArgumentError("mean: empty tensor");
    return scale(g, sum(g, x), 1.0 / static_cast<double>(n));
}

Var reshape(Graph& g, Var x, Shape s) {
    const Tensor& xv = g.value(x);
    if (shape_numel(s) != xv.size()) throw DimensionError("reshape: element count must be preserved");
    Tensor out(std::move(s), xv.data);
    Shape orig = xv.shape;
    return g.record(std::move(out), {x}, [x, orig](Graph& gg, std::int32_t self) {
        if (!gg.needs_grad(x)) return;
        const Tensor& gy = gg.grad(Var{self});
        Tensor& gx = gg.grad_buffer(x);
        for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] += gy.data[i];
    });
}

Var clamp(Graph& g, Var x, double lo, double hi) {
    if (lo > hi) throw ArgumentError("clamp: lo > hi");
    const Tensor& xv = g.value(x);
    Tensor out = xv;
    for (double& v : out.data) v = std::min(hi, std::max(lo, v));
    return g.record(std::move(out), {x}, [x, lo, hi](Graph& gg, std::int32_t self) {
        if (!gg.needs_grad(x)) return;
        const Tensor& gy = gg.grad(Var{self});
        const Tensor& xv = gg.value(x);
        Tensor& gx = gg.grad_buffer(x);
        for (std::size_t i = 0; i < gy.size(); ++i)
            if (xv.data[i] >= lo && xv.data[i] <= hi) gx.data[i] += gy.data[i];
    });
}

Var bilinear_upsample(Graph& g, Var patch, std::size_t out_h, std::size_t out_w) {
    const Tensor& pv = g.value(patch);
    if (pv.ndim() < 2) throw DimensionError("bilinear_upsample: patch must have spatial dims");
    if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_upsample: zero target extents");
    const std::size_t sw = pv.shape.back();
    const std::size_t sh = pv.shape[pv.ndim() - 2];
    if (sh > out_h || sw > out_w) throw DimensionError("bilinear_upsample: target smaller than source");
    std::size_t ch = 1;
    for (std::size_t i = 0; i + 2 < pv.ndim(); ++i) ch *= pv.shape[i];
    Shape out_shape = pv.shape;
    out_shape[out_shape.size() - 2] = out_h;
    out_shape[out_shape.size() - 1] = out_w;
    Tensor out = Tensor::zeros(out_shape);
    kernels::bilinear_upsample(pv.data.data(), out.data.data(), ch, sh, sw, out_h, out_w);
    return g.record(std::move(out), {patch}, [patch, ch, sh, sw, out_h, out_w](Graph& gg, std::int32_t self) {
        if (!gg.needs_grad(patch)) return;
        const Tensor& gy = gg.grad(Var{self});
        Tensor& gx = gg.grad_buffer(patch);
        kernels::bilinear_upsample_adjoint(gy.data.data(), gx.data.data(), ch, sh, sw, out_h, out_w, true);
    });
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.ndim() != 2) throw DimensionError("softmax_rows: expected 2-D logits");
    const std::size_t b = logits.dim(0), k = logits.dim(1);
    Tensor out = logits;
    for (std::size_t r = 0; r < b; ++r) {
        double* row = out.data.data() + r * k;
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (std::size_t j = 0; j < k; ++j) row[j] /= z;
    }
    return out;
}

Var softmax_cross_entropy(Graph& g, Var logits, const std::vector<int>& labels) {
    const Tensor& lv = g.value(logits);
    if (lv.ndim() != 2) throw DimensionError("softmax_cross_entropy: expected 2-D logits");
    const std::size_t b = lv.dim(0), k = lv.dim(1);
    if (labels.size() != b) throw DimensionError("softmax_cross_entropy: label count must equal batch size");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw IndexError("softmax_cross_entropy: label " + std::to_string(y) + " out of range [0, " +
                             std::to_string(k) + ")");
    double loss = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
        const double* row = lv.data.data() + r * k;
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
        loss += mx + std::log(z) - row[static_cast<std::size_t>(labels[r])];
    }
    loss /= static_cast<double>(b);
    std::vector<int> labels_copy = labels;
    return g.record(Tensor::scalar(loss), {logits},
                    [logits, labels_copy, b, k](Graph& gg, std::int32_t self) {
                        if (!gg.needs_grad(logits)) return;
                        double gy = gg.grad(Var{self}).data[0];
                        Tensor probs = softmax_rows(gg.value(logits));
                        Tensor& gx = gg.grad_buffer(logits);
                        const double inv_b = 1.0 / static_cast<double>(b);
                        for (std::size_t r = 0; r < b; ++r)
                            for (std::size_t j = 0; j < k; ++j) {
                                double onehot = (static_cast<std::size_t>(labels_copy[r]) == j) ? 1.0 : 0.0;
                                gx.data[r * k + j] += gy * inv_b * (probs.data[r * k + j] - onehot);
                            }
                    });
}

Var masked_blend(Graph& g, Var x, Var mask, Var pattern) {
    const Tensor& xv = g.value(x);
    const Tensor& mv = g.value(mask);
    const Tensor& pv = g.value(pattern);
    if (xv.ndim() != 4) throw DimensionError("masked_blend: input must be 4-D");
    const std::size_t b = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (mv.shape != Shape{h, w}) throw DimensionError("masked_blend: mask must be [h, w]");
    if (pv.shape != Shape{c, h, w}) throw DimensionError("masked_blend: pattern must be [c, h, w]");
    Tensor out = xv;
    const std::size_t plane = h * w;
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ci = 0; ci < c; ++ci) {
            double* o = out.data.data() + (bi * c + ci) * plane;
            const double* pp = pv.data.data() + ci * plane;
            for (std::size_t t = 0; t < plane; ++t) o[t] += mv.data[t] * (pp[t] - o[t]);
        }
    return g.record(std::move(out), {x, mask, pattern},
                    [x, mask, pattern, b, c, plane](Graph& gg, std::int32_t self) {
                        const Tensor& gy = gg.grad(Var{self});
                        const Tensor& xv = gg.value(x);
                        const Tensor& mv = gg.value(mask);
                        const Tensor& pv = gg.value(pattern);
                        if (gg.needs_grad(x)) {
                            Tensor& gx = gg.grad_buffer(x);
                            for (std::size_t bi = 0; bi < b; ++bi)
                                for (std::size_t ci = 0; ci < c; ++ci) {
                                    std::size_t base = (bi * c + ci) * plane;
                                    for (std::size_t t = 0; t < plane; ++t)
                                        gx.data[base + t] += gy.data[base + t] * (1.0 - mv.data[t]);
                                }
                        }
                        if (gg.needs_grad(mask)) {
                            Tensor& gm = gg.grad_buffer(mask);
                            for (std::size_t bi = 0; bi < b; ++bi)
                                for (std::size_t ci = 0; ci < c; ++ci) {
                                    std::size_t base = (bi * c + ci) * plane;
                                    const double* pp = pv.data.data() + ci * plane;
                                    for (std::size_t t = 0; t < plane; ++t)
                                        gm.data[t] += gy.data[base + t] * (pp[t] - xv.data[base + t]);
                                }
                        }
                        if (gg.needs_grad(pattern)) {
                            Tensor& gp = gg.grad_buffer(pattern);
                            for (std::size_t bi = 0; bi < b; ++bi)
                                for (std::size_t ci = 0; ci < c; ++ci) {
                                    std::size_t base = (bi * c + ci) * plane;
                                    for (std::size_t t = 0; t < plane; ++t)
                                        gp.data[ci * plane + t] += gy.data[base + t] * mv.data[t];
                                }
                        }
                    });
}

}  // namespace spikelab
