#include "spikelab/toy.hpp"

#include <algorithm>
#include <cmath>

#include "spikelab/error.hpp"
#include "spikelab/kernels.hpp"
#include "spikelab/linalg.hpp"
#include "spikelab/spike.hpp"

namespace spikelab {

ReluToyNet sample_clean_net(std::size_t d, std::size_t m, std::uint64_t seed) {
    Tensor nu = Tensor::zeros({d});
    nu.data[0] = 1.0;
    return sample_backdoored_net(d, m, nu, 0.0, seed);
}

ReluToyNet sample_backdoored_net(std::size_t d, std::size_t m, const Tensor& nu, double theta,
                                 std::uint64_t seed) {
    if (d < 1 || m < 1) throw ArgumentError("toy net: d and m must be >= 1");
    if (nu.size() != d) throw DimensionError("toy net: direction length must equal d");
    SpikeSpec spec{1.0, theta, nu};
    ReluToyNet net;
    net.g = sample_spiked_gaussian(spec, m, seed);
    net.d = d;
    net.m = m;
    return net;
}

static Tensor hidden_activations(const ReluToyNet& net, const Tensor& xs) {
    if (xs.ndim() != 2 || xs.dim(1) != net.d) throw DimensionError("toy net: inputs must be n x d");
    Tensor z = linalg::matmul(xs, net.g, false, true);  // n x m
    kernels::relu_forward(z.data.data(), z.data.data(), z.size());
    return z;
}

std::vector<double> toy_scores(const ReluToyNet& net, const Tensor& xs) {
    Tensor act = hidden_activations(net, xs);
    const std::size_t n = act.dim(0), m = act.dim(1);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        const double* row = act.data.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) s += row[j];
        out[i] = s / static_cast<double>(m);
    }
    return out;
}

int toy_predict(const ReluToyNet& net, double score) {
    if (!net.tau_thresh) throw ArgumentError("toy net: threshold not tuned");
    return score >= *net.tau_thresh ? 1 : 0;
}

namespace {

double balanced_accuracy_at(const std::vector<double>& scores, const std::vector<int>& labels, double tau) {
    std::size_t tp = 0, p = 0, tn = 0, n = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 1) {
            ++p;
            if (scores[i] >= tau) ++tp;
        } else {
            ++n;
            if (scores[i] < tau) ++tn;
        }
    }
    return 0.5 * (static_cast<double>(tp) / static_cast<double>(p) + static_cast<double>(tn) / static_cast<double>(n));
}

}  // namespace

ThresholdFit tune_threshold(ReluToyNet& net, const Tensor& xs, const std::vector<int>& labels) {
    if (xs.dim(0) != labels.size()) throw DimensionError("tune_threshold: label count mismatch");
    bool has0 = false, has1 = false;
    for (int y : labels) (y == 0 ? has0 : has1) = true;
    if (!has0 || !has1) throw ArgumentError("tune_threshold: dataset must contain both classes");
    std::vector<double> scores = toy_scores(net, xs);
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    ThresholdFit best;
    best.balanced_accuracy = -1.0;
    for (int q = 0; q <= 100; ++q) {
        std::size_t at = static_cast<std::size_t>(
            std::llround(static_cast<double>(q) / 100.0 * static_cast<double>(sorted.size() - 1)));
        double tau = sorted[at];
        double ba = balanced_accuracy_at(scores, labels, tau);
        if (ba > best.balanced_accuracy) best = {tau, ba};
    }
    // The rule is invariant for any tau between adjacent scores; center it in
    // that interval so neither class sits right at the boundary.
    auto below = std::lower_bound(sorted.begin(), sorted.end(), best.tau);
    if (below != sorted.begin()) {
        double prev = *(below - 1);
        if (prev < best.tau) best.tau = 0.5 * (prev + best.tau);
    }
    net.tau_thresh = best.tau;
    return best;
}

Tensor trigger_rows(const Tensor& xs, const Tensor& nu, double lambda) {
    if (lambda < 0.0) throw ArgumentError("trigger: lambda must be >= 0");
    if (xs.ndim() != 2 || xs.dim(1) != nu.size()) throw DimensionError("trigger: shape mismatch");
    Tensor out = xs;
    const std::size_t n = xs.dim(0), d = xs.dim(1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] += lambda * nu.data[j];
    return out;
}

PcaDisplacement pca_displacement(const ReluToyNet& net, const Tensor& clean_xs, const Tensor& triggered_xs) {
    if (clean_xs.shape != triggered_xs.shape) throw DimensionError("pca_displacement: sample pairs must match");
    Tensor a_clean = hidden_activations(net, clean_xs);
    Tensor a_trig = hidden_activations(net, triggered_xs);
    const std::size_t n = a_clean.dim(0), m = a_clean.dim(1);
    std::vector<double> mu(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) mu[j] += a_clean.at2(i, j);
    for (double& v : mu) v /= static_cast<double>(n);
    Tensor centered = a_clean;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) centered.at2(i, j) -= mu[j];
    // Covariance of clean activations, eigen-decomposed for the top-2 basis.
    Tensor cov = linalg::matmul(centered, centered, true, false);
    for (double& v : cov.data) v /= static_cast<double>(n);
    linalg::SymEig eig = linalg::sym_eig(cov);
    PcaDisplacement out;
    double lam1 = eig.values[m - 1];
    double lam2 = m >= 2 ? eig.values[m - 2] : 0.0;
    out.rank_deficient = m < 2 || lam2 <= lam1 * 1e-12;
    std::array<std::vector<double>, 2> pc;
    for (int a = 0; a < 2; ++a) {
        pc[static_cast<std::size_t>(a)].assign(m, 0.0);
        std::size_t col = m - 1 - static_cast<std::size_t>(a);
        if (col < m)
            for (std::size_t j = 0; j < m; ++j)
                pc[static_cast<std::size_t>(a)][j] = eig.vectors.at2(j, col);
    }
    auto project = [&](const Tensor& acts) {
        Tensor proj = Tensor::zeros({n, 2});
        for (std::size_t i = 0; i < n; ++i)
            for (int a = 0; a < 2; ++a) {
                double s = 0.0;
                for (std::size_t j = 0; j < m; ++j)
                    s += (acts.at2(i, j) - mu[j]) * pc[static_cast<std::size_t>(a)][j];
                proj.at2(i, static_cast<std::size_t>(a)) = s;
            }
        return proj;
    };
    out.clean_proj = project(a_clean);
    out.triggered_proj = project(a_trig);
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 2; ++a)
            out.mean_displacement[static_cast<std::size_t>(a)] +=
                (out.triggered_proj.at2(i, static_cast<std::size_t>(a)) -
                 out.clean_proj.at2(i, static_cast<std::size_t>(a))) /
                static_cast<double>(n);
    // The trigger is x + lambda nu, so the input-space key is the (shared)
    // row difference; its activation-space image is G nu.
    const std::size_t d = clean_xs.dim(1);
    Tensor nu = Tensor::zeros({d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            nu.data[j] += (triggered_xs.at2(i, j) - clean_xs.at2(i, j)) / static_cast<double>(n);
    double nu_norm = norm2(nu);
    if (nu_norm > 1e-12) {
        for (double& v : nu.data) v /= nu_norm;
        Tensor key_act = linalg::matmul(net.g, Tensor({d, 1}, nu.data));  // m x 1
        std::array<double, 2> key{};
        for (int a = 0; a < 2; ++a) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += key_act.data[j] * pc[static_cast<std::size_t>(a)][j];
            key[static_cast<std::size_t>(a)] = s;
        }
        double kn = std::hypot(key[0], key[1]);
        double dn = std::hypot(out.mean_displacement[0], out.mean_displacement[1]);
        if (kn > 0.0) {
            out.key_direction = {key[0] / kn, key[1] / kn};
            if (dn > 0.0)
                out.cosine = (out.mean_displacement[0] * out.key_direction[0] +
                              out.mean_displacement[1] * out.key_direction[1]) /
                             dn;
        }
    }
    return out;
}

}  // namespace spikelab
