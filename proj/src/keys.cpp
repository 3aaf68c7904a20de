#include "spikelab/keys.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "spikelab/error.hpp"
#include "spikelab/kernels.hpp"
#include "spikelab/optim.hpp"
#include "spikelab/rng.hpp"

namespace spikelab {

Tensor fit_cav_on_activations(const Tensor& source_acts, const Tensor& target_acts, int iterations) {
    if (source_acts.ndim() != 2 || target_acts.ndim() != 2 || source_acts.dim(1) != target_acts.dim(1))
        throw DimensionError("fit_cav: activation sets must be n x m with equal m");
    if (source_acts.dim(0) == 0 || target_acts.dim(0) == 0) throw ArgumentError("fit_cav: empty activation set");
    if (source_acts.shape == target_acts.shape && source_acts.data == target_acts.data)
        throw ArgumentError("fit_cav: source and target activation sets are identical (not separable)");
    const std::size_t ns = source_acts.dim(0), nt = target_acts.dim(0), m = source_acts.dim(1);
    const std::size_t n = ns + nt;

    // Stacked design matrix; labels: source = 0, target = 1.
    std::vector<const double*> rows(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < ns; ++i) rows[i] = source_acts.data.data() + i * m;
    for (std::size_t i = 0; i < nt; ++i) {
        rows[ns + i] = target_acts.data.data() + i * m;
        y[ns + i] = 1.0;
    }

    // Step size from the logistic-loss curvature bound L <= max ||a||^2 / 4.
    double max_sq = 1.0;
    for (const double* r : rows) {
        double s = 1.0;  // + bias coordinate
        for (std::size_t j = 0; j < m; ++j) s += r[j] * r[j];
        max_sq = std::max(max_sq, s);
    }
    const double lr = 4.0 / max_sq;

    std::vector<double> w(m, 0.0);
    double b = 0.0;
    std::vector<double> gw(m);
    for (int it = 0; it < iterations; ++it) {
        std::fill(gw.begin(), gw.end(), 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = b;
            const double* r = rows[i];
            for (std::size_t j = 0; j < m; ++j) s += w[j] * r[j];
            double p = 1.0 / (1.0 + std::exp(-s));
            double e = p - y[i];
            for (std::size_t j = 0; j < m; ++j) gw[j] += e * r[j];
            gb += e;
        }
        double inv_n = 1.0 / static_cast<double>(n);
        double gnorm = gb * gb;
        for (std::size_t j = 0; j < m; ++j) gnorm += gw[j] * gw[j];
        gnorm = std::sqrt(gnorm) * inv_n;
        for (std::size_t j = 0; j < m; ++j) w[j] -= lr * gw[j] * inv_n;
        b -= lr * gb * inv_n;
        if (gnorm < 1e-6) break;
    }

    // Orientation: target side positive.
    double mean_src = 0.0, mean_tgt = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
        double s = b;
        for (std::size_t j = 0; j < m; ++j) s += w[j] * rows[i][j];
        mean_src += s / static_cast<double>(ns);
    }
    for (std::size_t i = 0; i < nt; ++i) {
        double s = b;
        for (std::size_t j = 0; j < m; ++j) s += w[j] * rows[ns + i][j];
        mean_tgt += s / static_cast<double>(nt);
    }
    Tensor out = Tensor::vec(std::move(w));
    if (mean_tgt < mean_src)
        for (double& v : out.data) v = -v;
    return out;
}

Tensor fit_cav(const Classifier& model, const Tensor& source_inputs, const Tensor& target_inputs, int iterations,
               std::uint64_t seed) {
    if (source_inputs.ndim() < 2 || target_inputs.ndim() < 2) throw DimensionError("fit_cav: batched inputs expected");
    std::size_t ns = source_inputs.dim(0), nt = target_inputs.dim(0);
    if (ns == 0 || nt == 0) throw ArgumentError("fit_cav: empty input set");
    // The construction uses equally sized sets; subsample the larger one.
    Tensor src = source_inputs, tgt = target_inputs;
    if (ns != nt) {
        Rng rng(seed);
        std::size_t keep = std::min(ns, nt);
        auto take_rows = [&](const Tensor& t, std::size_t count) {
            std::vector<std::size_t> idx(t.dim(0));
            std::iota(idx.begin(), idx.end(), 0);
            rng.shuffle(idx);
            idx.resize(count);
            std::sort(idx.begin(), idx.end());
            Shape s = t.shape;
            s[0] = count;
            Tensor out = Tensor::zeros(s);
            std::size_t row_d = t.size() / t.dim(0);
            for (std::size_t r = 0; r < count; ++r)
                std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * row_d), row_d,
                            out.data.begin() + static_cast<std::ptrdiff_t>(r * row_d));
            return out;
        };
        if (ns > keep) src = take_rows(src, keep);
        if (nt > keep) tgt = take_rows(tgt, keep);
    }
    // Activations are read in linear mode regardless of the delivered mode.
    Classifier probe = model;
    set_backdoor_activation(probe, Activation::Linear);
    Tensor sa = activations_at_bd(probe, src);
    Tensor ta = activations_at_bd(probe, tgt);
    return fit_cav_on_activations(sa, ta, iterations);
}

Tensor sparsify_normalize(const Tensor& raw, double alpha) {
    if (alpha <= 0.0 || alpha > 1.0) throw ArgumentError("sparsify_normalize: alpha must be in (0, 1]");
    const std::size_t m = raw.size();
    if (m == 0) throw ArgumentError("sparsify_normalize: empty vector");
    bool all_zero = true;
    for (double v : raw.data)
        if (v != 0.0) all_zero = false;
    if (all_zero) throw ArgumentError("sparsify_normalize: all-zero vector");
    std::size_t keep = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(m)));
    keep = std::min(keep, m);
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        double ma = std::abs(raw.data[a]), mb = std::abs(raw.data[b]);
        if (ma != mb) return ma > mb;
        return a < b;  // deterministic tie-break
    });
    Tensor out = Tensor::zeros(raw.shape);
    for (std::size_t i = 0; i < keep; ++i) out.data[idx[i]] = raw.data[idx[i]];
    return normalize_unit(out);
}

Tensor optimize_trigger(const Classifier& backdoored, const Tensor& source_inputs, const Tensor& nu_bd,
                        const TriggerConfig& cfg) {
    if (source_inputs.ndim() != 4) throw DimensionError("optimize_trigger: source samples must be n x c x h x w");
    const std::size_t n = source_inputs.dim(0);
    if (n == 0) throw ArgumentError("optimize_trigger: empty sample set");
    if (cfg.steps < 1 || cfg.scale < 1 || cfg.epsilon <= 0.0 || cfg.tau < 0.0 || cfg.batch_size == 0)
        throw ArgumentError("optimize_trigger: bad config");
    const std::size_t c = source_inputs.dim(1), h = source_inputs.dim(2), w = source_inputs.dim(3);
    const std::size_t hs = std::max<std::size_t>(1, h / static_cast<std::size_t>(cfg.scale));
    const std::size_t ws = std::max<std::size_t>(1, w / static_cast<std::size_t>(cfg.scale));
    if (nu_bd.size() != backdoored.backdoor_dim) throw DimensionError("optimize_trigger: key length != m");

    Tensor nu = normalize_unit(nu_bd);
    Tensor nu_col({nu.size(), 1}, nu.data);
    Tensor delta = Tensor::zeros({1, c, hs, ws});
    AdamState opt(cfg.lr);

    // Fixed batch slices in sample order.
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t at = 0; at < n; at += cfg.batch_size)
        batches.emplace_back(at, std::min(cfg.batch_size, n - at));

    const std::size_t sample_d = c * h * w;
    for (int step = 0; step < cfg.steps; ++step) {
        Tensor grad_accum = Tensor::zeros(delta.shape);
        for (auto [at, take] : batches) {
            Graph g;
            Var d = g.leaf(delta, true);
            Var up = bilinear_upsample(g, d, h, w);
            Var cl = clamp(g, up, -cfg.epsilon, cfg.epsilon);
            Tensor xb = Tensor::zeros({take, c, h, w});
            std::copy_n(source_inputs.data.begin() + static_cast<std::ptrdiff_t>(at * sample_d), take * sample_d,
                        xb.data.begin());
            Var x = g.leaf(std::move(xb), false);
            Var xhat = bias_add(g, x, reshape(g, cl, {c, h, w}));
            ModelGraph mg = apply_model(g, backdoored, xhat, false);
            Var nuv = g.leaf(nu_col, false);
            Var align = scale(g, sum(g, matmul(g, mg.bd_activations, nuv)), -1.0 / static_cast<double>(take));
            Var l2 = scale(g, sum(g, mul(g, cl, cl)), cfg.lambda_l2 / static_cast<double>(take));
            Var loss = add(g, align, l2);
            if (!std::isfinite(g.value(loss).item())) throw NumericalError("optimize_trigger: non-finite loss");
            g.backward(loss);
            const Tensor& gd = g.grad(d);
            for (std::size_t i = 0; i < grad_accum.size(); ++i) grad_accum.data[i] += gd.data[i];
        }
        std::vector<Tensor*> params{&delta};
        std::vector<const Tensor*> grads{&grad_accum};
        opt.step(params, grads);
        delta = soft_threshold(delta, cfg.tau);
    }

    Tensor out = Tensor::zeros({1, c, h, w});
    kernels::bilinear_upsample(delta.data.data(), out.data.data(), c, hs, ws, h, w);
    out.shape = {c, h, w};  // squeeze
    return out;
}

Tensor apply_trigger(const Tensor& x, const SecretKeyPair& key) {
    const Tensor& nu = key.nu_in;
    if (nu.size() == 0) throw ArgumentError("apply_trigger: key has no input-space component");
    Tensor out = x;
    if (x.ndim() == nu.ndim()) {
        if (x.shape != nu.shape) throw DimensionError("apply_trigger: shape mismatch");
        for (std::size_t i = 0; i < out.size(); ++i)
            out.data[i] = std::clamp(out.data[i] + key.lambda * nu.data[i], 0.0, 1.0);
        return out;
    }
    if (x.ndim() != nu.ndim() + 1 || x.size() % nu.size() != 0)
        throw DimensionError("apply_trigger: shape mismatch");
    const std::size_t rows = x.dim(0), d = nu.size();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) {
            double& v = out.data[r * d + j];
            v = std::clamp(v + key.lambda * nu.data[j], 0.0, 1.0);
        }
    return out;
}

// --- SBK1 container ----------------------------------------------------------

void save_key(const SecretKeyPair& key, const std::string& path) {
    if (key.nu_bd.size() == 0) throw ArgumentError("save_key: empty activation key");
    if (key.nu_in.ndim() != 3) throw DimensionError("save_key: input key must be c x h x w");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot open '" + path + "' for writing");
    out.write("SBK1", 4);
    std::uint32_t m = static_cast<std::uint32_t>(key.nu_bd.size());
    out.write(reinterpret_cast<const char*>(&m), 4);
    out.write(reinterpret_cast<const char*>(&key.alpha), 8);
    out.write(reinterpret_cast<const char*>(&key.lambda), 8);
    std::uint32_t st[2] = {static_cast<std::uint32_t>(key.source), static_cast<std::uint32_t>(key.target)};
    out.write(reinterpret_cast<const char*>(st), 8);
    out.write(reinterpret_cast<const char*>(key.nu_bd.data.data()), static_cast<std::streamsize>(8 * m));
    std::uint32_t dims[3] = {static_cast<std::uint32_t>(key.nu_in.dim(0)), static_cast<std::uint32_t>(key.nu_in.dim(1)),
                             static_cast<std::uint32_t>(key.nu_in.dim(2))};
    out.write(reinterpret_cast<const char*>(dims), 12);
    out.write(reinterpret_cast<const char*>(key.nu_in.data.data()),
              static_cast<std::streamsize>(8 * key.nu_in.size()));
    if (!out) throw ArgumentError("write failed for '" + path + "'");
}

SecretKeyPair load_key(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open key file '" + path + "'", 0);
    std::size_t offset = 0;
    auto read = [&](void* dst, std::size_t count, const char* what) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in.gcount()) != count)
            throw FormatError(std::string("truncated key file while reading ") + what, offset);
        offset += count;
    };
    char magic[4];
    read(magic, 4, "magic");
    if (std::memcmp(magic, "SBK1", 4) != 0) throw FormatError("bad magic, expected SBK1", 0);
    SecretKeyPair key;
    std::uint32_t m;
    read(&m, 4, "key length");
    read(&key.alpha, 8, "alpha");
    read(&key.lambda, 8, "lambda");
    std::uint32_t st[2];
    read(st, 8, "source/target");
    key.source = static_cast<int>(st[0]);
    key.target = static_cast<int>(st[1]);
    key.nu_bd = Tensor::zeros({m});
    read(key.nu_bd.data.data(), 8 * m, "activation key");
    std::uint32_t dims[3];
    read(dims, 12, "input key shape");
    key.nu_in = Tensor::zeros({dims[0], dims[1], dims[2]});
    read(key.nu_in.data.data(), 8 * key.nu_in.size(), "input key");
    return key;
}

}  // namespace spikelab
