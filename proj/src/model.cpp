#include "spikelab/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "spikelab/error.hpp"
#include "spikelab/kernels.hpp"

namespace spikelab {

std::vector<Tensor*> Classifier::parameters() {
    std::vector<Tensor*> out;
    for (Layer& l : layers) {
        if (l.weight.size()) out.push_back(&l.weight);
        if (l.bias.size()) out.push_back(&l.bias);
    }
    return out;
}

std::vector<const Tensor*> Classifier::parameters() const {
    std::vector<const Tensor*> out;
    for (const Layer& l : layers) {
        if (l.weight.size()) out.push_back(&l.weight);
        if (l.bias.size()) out.push_back(&l.bias);
    }
    return out;
}

std::size_t Classifier::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* p : parameters()) n += p->size();
    return n;
}

Tensor& Classifier::backdoor_weight() {
    if (backdoor_index < 0) throw ArgumentError("classifier has no backdoor layer");
    return layers[static_cast<std::size_t>(backdoor_index)].weight;
}

const Tensor& Classifier::backdoor_weight() const {
    if (backdoor_index < 0) throw ArgumentError("classifier has no backdoor layer");
    return layers[static_cast<std::size_t>(backdoor_index)].weight;
}

namespace {

Tensor linear_forward(const Tensor& x, const Layer& l) {
    const std::size_t b = x.dim(0), in = x.dim(1), out = l.weight.dim(0);
    if (l.weight.dim(1) != in) throw DimensionError("linear layer: input width mismatch");
    Tensor y = Tensor::zeros({b, out});
    kernels::matmul(x.data.data(), l.weight.data.data(), y.data.data(), b, in, out, false, true, false);
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t j = 0; j < out; ++j) y.data[r * out + j] += l.bias.data[j];
    return y;
}

Tensor conv_forward(const Tensor& x, const Layer& l) {
    kernels::Conv2dDims d{x.dim(0), x.dim(1),      x.dim(2),      x.dim(3),
                          l.weight.dim(0), l.weight.dim(2), l.weight.dim(3), l.stride, l.pad};
    if (l.weight.dim(1) != d.in_ch) throw DimensionError("conv layer: channel mismatch");
    Tensor y = Tensor::zeros({d.batch, d.out_ch, d.out_h(), d.out_w()});
    kernels::conv2d_forward(x.data.data(), l.weight.data.data(), y.data.data(), d);
    const std::size_t plane = d.out_h() * d.out_w();
    for (std::size_t bi = 0; bi < d.batch; ++bi)
        for (std::size_t oc = 0; oc < d.out_ch; ++oc) {
            double bias = l.bias.data[oc];
            double* p = y.data.data() + (bi * d.out_ch + oc) * plane;
            for (std::size_t t = 0; t < plane; ++t) p[t] += bias;
        }
    return y;
}

}  // namespace

Tensor Classifier::forward(const Tensor& x, Tensor* bd_activations) const {
    Tensor cur = x;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const Layer& l = layers[li];
        switch (l.kind) {
            case LayerKind::Conv:
                cur = conv_forward(cur, l);
                break;
            case LayerKind::Relu:
                kernels::relu_forward(cur.data.data(), cur.data.data(), cur.size());
                break;
            case LayerKind::Flatten:
                cur.shape = {cur.dim(0), cur.size() / cur.dim(0)};
                break;
            case LayerKind::Linear:
                cur = linear_forward(cur, l);
                break;
        }
        if (static_cast<int>(li) == backdoor_index) {
            if (backdoor_activation == Activation::Relu)
                kernels::relu_forward(cur.data.data(), cur.data.data(), cur.size());
            if (bd_activations) *bd_activations = cur;
        }
    }
    return cur;
}

ModelGraph apply_model(Graph& g, const Classifier& model, Var input, bool params_require_grad) {
    ModelGraph mg;
    Var cur = input;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const Layer& l = model.layers[li];
        switch (l.kind) {
            case LayerKind::Conv: {
                Var w = g.leaf(l.weight, params_require_grad);
                Var b = g.leaf(l.bias, params_require_grad);
                mg.params.push_back(w);
                mg.params.push_back(b);
                cur = channel_bias_add(g, conv2d(g, cur, w, l.stride, l.pad), b);
                break;
            }
            case LayerKind::Relu:
                cur = relu(g, cur);
                break;
            case LayerKind::Flatten: {
                const Tensor& v = g.value(cur);
                cur = reshape(g, cur, {v.dim(0), v.size() / v.dim(0)});
                break;
            }
            case LayerKind::Linear: {
                Var w = g.leaf(l.weight, params_require_grad);
                Var b = g.leaf(l.bias, params_require_grad);
                mg.params.push_back(w);
                mg.params.push_back(b);
                cur = bias_add(g, matmul_nt(g, cur, w), b);
                break;
            }
        }
        if (static_cast<int>(li) == model.backdoor_index) {
            if (model.backdoor_activation == Activation::Relu) cur = relu(g, cur);
            mg.bd_activations = cur;
        }
    }
    mg.logits = cur;
    return mg;
}

namespace {

// Fan-in scaled Gaussian init, biases zero.
Layer make_linear(std::size_t in, std::size_t out, Rng& rng) {
    Layer l;
    l.kind = LayerKind::Linear;
    l.weight = Tensor::randn({out, in}, rng, std::sqrt(1.0 / static_cast<double>(in)));
    l.bias = Tensor::zeros({out});
    return l;
}

Layer make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t ksize, int stride, int pad, Rng& rng) {
    Layer l;
    l.kind = LayerKind::Conv;
    double fan_in = static_cast<double>(in_ch * ksize * ksize);
    l.weight = Tensor::randn({out_ch, in_ch, ksize, ksize}, rng, std::sqrt(1.0 / fan_in));
    l.bias = Tensor::zeros({out_ch});
    l.stride = stride;
    l.pad = pad;
    return l;
}

Layer make_plain(LayerKind kind) {
    Layer l;
    l.kind = kind;
    return l;
}

void attach_backdoor_and_head(Classifier& model, std::size_t d, std::size_t m, int k, Rng& rng) {
    if (m == 0) m = d;  // m = d default
    if (m < static_cast<std::size_t>(k)) throw ArgumentError("backdoor width m must be >= class count");
    model.backdoor_index = static_cast<int>(model.layers.size());
    model.layers.push_back(make_linear(d, m, rng));
    model.layers.push_back(make_linear(m, static_cast<std::size_t>(k), rng));
    model.backdoor_activation = Activation::Relu;
    model.class_count = k;
    model.feature_dim = d;
    model.backdoor_dim = m;
}

}  // namespace

Classifier build_mlp(std::size_t d_in, const std::vector<std::size_t>& hidden, std::size_t m, int k,
                     std::uint64_t seed) {
    if (d_in == 0 || k < 2) throw ArgumentError("build_mlp: need d_in >= 1 and k >= 2");
    Rng rng(seed);
    Classifier model;
    model.layers.push_back(make_plain(LayerKind::Flatten));  // accept n x c x h x w inputs
    std::size_t prev = d_in;
    for (std::size_t hsize : hidden) {
        model.layers.push_back(make_linear(prev, hsize, rng));
        model.layers.push_back(make_plain(LayerKind::Relu));
        prev = hsize;
    }
    attach_backdoor_and_head(model, prev, m, k, rng);
    return model;
}

Classifier build_small_cnn(int channels, int h, int w, std::size_t m, int k, std::uint64_t seed) {
    if (channels < 1 || h < 8 || w < 8 || k < 2) throw ArgumentError("build_small_cnn: bad input shape");
    Rng rng(seed);
    Classifier model;
    model.layers.push_back(make_conv(static_cast<std::size_t>(channels), 8, 3, 1, 1, rng));
    model.layers.push_back(make_plain(LayerKind::Relu));
    model.layers.push_back(make_conv(8, 16, 3, 2, 1, rng));
    model.layers.push_back(make_plain(LayerKind::Relu));
    model.layers.push_back(make_conv(16, 32, 3, 2, 1, rng));
    model.layers.push_back(make_plain(LayerKind::Relu));
    model.layers.push_back(make_plain(LayerKind::Flatten));
    auto ds2 = [](int e) { return (e - 1) / 2 + 1; };  // 3x3 conv, stride 2, pad 1
    std::size_t flat = 32 * static_cast<std::size_t>(ds2(ds2(h))) * static_cast<std::size_t>(ds2(ds2(w)));
    std::size_t d = (m == 0 ? 128 : m);
    model.layers.push_back(make_linear(flat, d, rng));
    model.layers.push_back(make_plain(LayerKind::Relu));
    attach_backdoor_and_head(model, d, d, k, rng);
    return model;
}

void set_backdoor_activation(Classifier& model, Activation mode) {
    if (model.backdoor_index < 0) throw ArgumentError("classifier has no backdoor layer");
    model.backdoor_activation = mode;
}

Tensor activations_at_bd(const Classifier& model, const Tensor& inputs) {
    if (model.backdoor_index < 0) throw ArgumentError("classifier has no backdoor layer");
    Tensor acts;
    model.forward(inputs, &acts);
    return acts;
}

std::vector<int> predict(const Classifier& model, const Tensor& inputs) {
    Tensor logits = model.forward(inputs);
    const std::size_t b = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(b);
    for (std::size_t r = 0; r < b; ++r) {
        const double* row = logits.data.data() + r * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;
        out[r] = static_cast<int>(best);
    }
    return out;
}

// --- SBM1 container ----------------------------------------------------------

namespace {

constexpr std::uint32_t kModelVersion = 1;

struct ModelReader {
    std::ifstream in;
    std::size_t offset = 0;
    explicit ModelReader(const std::string& path) : in(path, std::ios::binary) {
        if (!in) throw FormatError("cannot open model file '" + path + "'", 0);
    }
    void read(void* dst, std::size_t count, const char* what) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in.gcount()) != count)
            throw FormatError(std::string("truncated model file while reading ") + what, offset);
        offset += count;
    }
    std::uint32_t u32(const char* what) {
        std::uint32_t v;
        read(&v, 4, what);
        return v;
    }
    std::uint64_t u64(const char* what) {
        std::uint64_t v;
        read(&v, 8, what);
        return v;
    }
    std::int32_t i32(const char* what) {
        std::int32_t v;
        read(&v, 4, what);
        return v;
    }
};

void write_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_i32(std::ofstream& out, std::int32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ofstream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

void write_shape(std::ofstream& out, const Shape& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    for (std::size_t e : s) write_u64(out, e);
}

Shape read_shape(ModelReader& r) {
    std::uint32_t nd = r.u32("tensor rank");
    if (nd > 8) throw FormatError("implausible tensor rank " + std::to_string(nd), r.offset - 4);
    Shape s(nd);
    for (std::uint32_t i = 0; i < nd; ++i) s[i] = r.u64("tensor extent");
    return s;
}

}  // namespace

void save_model(const Classifier& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot open '" + path + "' for writing");
    out.write("SBM1", 4);
    write_u32(out, kModelVersion);
    write_u32(out, static_cast<std::uint32_t>(model.class_count));
    write_i32(out, model.backdoor_index);
    write_u32(out, static_cast<std::uint32_t>(model.backdoor_activation));
    write_u64(out, model.feature_dim);
    write_u64(out, model.backdoor_dim);
    write_u32(out, static_cast<std::uint32_t>(model.layers.size()));
    for (const Layer& l : model.layers) {
        write_u32(out, static_cast<std::uint32_t>(l.kind));
        write_i32(out, l.stride);
        write_i32(out, l.pad);
        write_shape(out, l.weight.shape);
        write_shape(out, l.bias.shape);
    }
    for (const Layer& l : model.layers) {
        out.write(reinterpret_cast<const char*>(l.weight.data.data()),
                  static_cast<std::streamsize>(l.weight.data.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(l.bias.data.data()),
                  static_cast<std::streamsize>(l.bias.data.size() * sizeof(double)));
    }
    if (!out) throw ArgumentError("write failed for '" + path + "'");
}

Classifier load_model(const std::string& path) {
    ModelReader r(path);
    char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, "SBM1", 4) != 0) throw FormatError("bad magic, expected SBM1", 0);
    std::uint32_t version = r.u32("version");
    if (version != kModelVersion)
        throw FormatError("unsupported model version " + std::to_string(version), 4);
    Classifier model;
    model.class_count = static_cast<int>(r.u32("class count"));
    model.backdoor_index = r.i32("backdoor index");
    std::uint32_t act = r.u32("activation mode");
    if (act > 1) throw FormatError("bad activation mode " + std::to_string(act), r.offset - 4);
    model.backdoor_activation = static_cast<Activation>(act);
    model.feature_dim = r.u64("feature dim");
    model.backdoor_dim = r.u64("backdoor dim");
    std::uint32_t layer_count = r.u32("layer count");
    if (layer_count > 1024) throw FormatError("implausible layer count", r.offset - 4);
    model.layers.resize(layer_count);
    for (Layer& l : model.layers) {
        std::uint32_t kind = r.u32("layer kind");
        if (kind > 3) throw FormatError("bad layer kind " + std::to_string(kind), r.offset - 4);
        l.kind = static_cast<LayerKind>(kind);
        l.stride = r.i32("stride");
        l.pad = r.i32("pad");
        Shape ws = read_shape(r);
        Shape bs = read_shape(r);
        l.weight = Tensor::zeros(ws);
        l.bias = Tensor::zeros(bs);
    }
    for (Layer& l : model.layers) {
        r.read(l.weight.data.data(), l.weight.data.size() * sizeof(double), "weight blob");
        r.read(l.bias.data.data(), l.bias.data.size() * sizeof(double), "bias blob");
    }
    if (model.backdoor_index >= static_cast<int>(model.layers.size()))
        throw FormatError("backdoor index out of range", 12);
    r.in.peek();
    if (!r.in.eof()) throw FormatError("trailing bytes after parameter blobs", r.offset);
    return model;
}

}  // namespace spikelab
