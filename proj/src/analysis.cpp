#include "spikelab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spikelab/defense.hpp"
#include "spikelab/error.hpp"
#include "spikelab/kernels.hpp"
#include "spikelab/linalg.hpp"
#include "spikelab/rng.hpp"
#include "spikelab/train.hpp"

namespace spikelab {

AttackRun evaluate_attack(const Classifier& clean_model, const Classifier& backdoored_model,
                          const LabeledDataset& test_set, const SecretKeyPair& key) {
    std::vector<std::size_t> src = test_set.indices_of_class(key.source);
    if (src.empty()) throw ArgumentError("evaluate_attack: test set has no source-class samples");
    Tensor triggered = apply_trigger(test_set.batch(src), key);

    AttackRun run;
    run.cda_clean = accuracy(clean_model, test_set);
    run.cda_backdoor = accuracy(backdoored_model, test_set);
    std::vector<int> pb = predict(backdoored_model, triggered);
    std::vector<int> pc = predict(clean_model, triggered);
    std::size_t hb = 0, hc = 0;
    for (std::size_t i = 0; i < pb.size(); ++i) {
        if (pb[i] == key.target) ++hb;
        if (pc[i] == key.target) ++hc;
    }
    run.asr_backdoor = static_cast<double>(hb) / static_cast<double>(pb.size());
    run.asr_clean = static_cast<double>(hc) / static_cast<double>(pc.size());
    return run;
}

Ci confidence_interval(const std::vector<double>& values) {
    if (values.empty()) throw ArgumentError("confidence_interval: no values");
    Ci ci;
    double n = static_cast<double>(values.size());
    for (double v : values) ci.mean += v / n;
    if (values.size() < 2) {
        ci.lo = ci.hi = ci.mean;
        ci.degenerate = true;
        return ci;
    }
    double ss = 0.0;
    for (double v : values) ss += (v - ci.mean) * (v - ci.mean);
    double sd = std::sqrt(ss / (n - 1.0));
    double half = 1.96 * sd / std::sqrt(n);
    ci.lo = ci.mean - half;
    ci.hi = ci.mean + half;
    return ci;
}

AttackReport aggregate_attack(const std::vector<AttackRun>& runs) {
    if (runs.empty()) throw ArgumentError("aggregate_attack: no runs");
    std::vector<double> ab, ac, cb, cc;
    for (const AttackRun& r : runs) {
        ab.push_back(r.asr_backdoor);
        ac.push_back(r.asr_clean);
        cb.push_back(r.cda_backdoor);
        cc.push_back(r.cda_clean);
    }
    AttackReport rep;
    rep.asr_backdoor = confidence_interval(ab);
    rep.asr_clean = confidence_interval(ac);
    rep.cda_backdoor = confidence_interval(cb);
    rep.cda_clean = confidence_interval(cc);
    rep.per_seed = runs;
    return rep;
}

MPParams mp_bounds(std::size_t p, std::size_t n, double sigma) {
    if (p == 0 || n == 0) throw ArgumentError("mp_bounds: p and n must be >= 1");
    MPParams mp;
    mp.p = p;
    mp.n = n;
    mp.sigma = sigma;
    mp.gamma = static_cast<double>(p) / static_cast<double>(n);
    double s2 = sigma * sigma, rg = std::sqrt(mp.gamma);
    mp.lower = s2 * (1.0 - rg) * (1.0 - rg);
    mp.upper = s2 * (1.0 + rg) * (1.0 + rg);
    return mp;
}

std::vector<double> spectrum(const Tensor& x) {
    return linalg::sym_eigvals(linalg::scatter_covariance(x));
}

namespace {

double excess_kurtosis(const Tensor& w) {
    double mu = mean(w);
    double m2 = 0.0, m4 = 0.0;
    for (double v : w.data) {
        double d = v - mu;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(w.size());
    m4 /= static_cast<double>(w.size());
    if (m2 == 0.0) return 0.0;
    return m4 / (m2 * m2) - 3.0;
}

double tail_mass(const Tensor& w) {
    double sd = estimate_sigma(w);
    std::size_t count = 0;
    for (double v : w.data)
        if (std::abs(v) > 3.0 * sd) ++count;
    return static_cast<double>(count) / static_cast<double>(w.size());
}

}  // namespace

WeightHistogram weight_histogram(const Tensor& w, const Tensor& w_hat, std::size_t bins) {
    if (!w.same_shape(w_hat)) throw DimensionError("weight_histogram: shapes must match");
    if (bins == 0) throw ArgumentError("weight_histogram: need at least one bin");
    double lo = w.data[0], hi = w.data[0];
    for (double v : w.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : w_hat.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi) hi = lo + 1.0;
    WeightHistogram hg;
    hg.bin_edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        hg.bin_edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    hg.clean_counts.assign(bins, 0);
    hg.backdoored_counts.assign(bins, 0);
    auto bin_of = [&](double v) {
        double t = (v - lo) / (hi - lo) * static_cast<double>(bins);
        auto b = static_cast<std::size_t>(std::min<long>(static_cast<long>(bins) - 1,
                                                         std::max<long>(0, static_cast<long>(std::floor(t)))));
        return b;
    };
    for (double v : w.data) ++hg.clean_counts[bin_of(v)];
    for (double v : w_hat.data) ++hg.backdoored_counts[bin_of(v)];
    hg.clean_kurtosis = excess_kurtosis(w);
    hg.backdoored_kurtosis = excess_kurtosis(w_hat);
    hg.clean_tail_mass = tail_mass(w);
    hg.backdoored_tail_mass = tail_mass(w_hat);
    return hg;
}

double mmd(const Tensor& a, const Tensor& b, const MMDConfig& cfg) {
    if (a.ndim() != 2 || b.ndim() != 2) throw DimensionError("mmd: feature sets must be 2-D");
    if (a.dim(1) != b.dim(1)) throw DimensionError("mmd: feature dimensions differ");
    if (a.dim(0) == 0 || b.dim(0) == 0) throw ArgumentError("mmd: empty feature set");
    if (cfg.degree < 1) throw ArgumentError("mmd: polynomial degree must be >= 1");
    const std::size_t n = a.dim(0), m = b.dim(0), p = a.dim(1);
    const double gamma_k = 1.0 / static_cast<double>(p);

    auto kernel_sum = [&](const Tensor& x, const Tensor& y) {
        const std::size_t nx = x.dim(0), ny = y.dim(0);
        // Per-row partial sums keep the reduction order fixed for any thread
        // count.
        std::vector<double> row_sums(nx, 0.0);
        long lnx = static_cast<long>(nx);
#pragma omp parallel for schedule(static)
        for (long i = 0; i < lnx; ++i) {
            const double* xi = x.data.data() + static_cast<std::size_t>(i) * p;
            double acc = 0.0;
            for (std::size_t j = 0; j < ny; ++j) {
                const double* yj = y.data.data() + j * p;
                double d = 0.0;
                for (std::size_t t = 0; t < p; ++t) d += xi[t] * yj[t];
                double k = gamma_k * d + cfg.offset;
                double kp = 1.0;
                for (int q = 0; q < cfg.degree; ++q) kp *= k;
                acc += kp;
            }
            row_sums[static_cast<std::size_t>(i)] = acc;
        }
        double total = 0.0;
        for (double v : row_sums) total += v;
        return total;
    };

    double term_aa = kernel_sum(a, a) / (static_cast<double>(n) * static_cast<double>(n));
    double term_bb = kernel_sum(b, b) / (static_cast<double>(m) * static_cast<double>(m));
    double term_ab = kernel_sum(a, b) / (static_cast<double>(n) * static_cast<double>(m));
    return term_aa + term_bb - 2.0 * term_ab;
}

Tensor mmd_features(const Classifier* clean_model, const Tensor& images, const MMDConfig& cfg) {
    if (cfg.features == MMDConfig::Features::RawPixels || clean_model == nullptr) {
        Tensor flat = images;
        flat.shape = {images.dim(0), images.size() / images.dim(0)};
        return flat;
    }
    Tensor acts = activations_at_bd(*clean_model, images);
    return acts;
}

std::vector<MmdCurvePoint> mmd_lambda_sweep(const Classifier& clean_model, const LabeledDataset& ds,
                                            const SecretKeyPair& key, const std::vector<double>& lambdas,
                                            const MMDConfig& cfg) {
    if (lambdas.empty()) throw ArgumentError("mmd_lambda_sweep: empty lambda grid");
    std::vector<std::size_t> src = ds.indices_of_class(key.source);
    if (src.empty()) throw ArgumentError("mmd_lambda_sweep: no source-class samples");
    Tensor clean_images = ds.batch(src);
    Tensor clean_feats = mmd_features(&clean_model, clean_images, cfg);
    std::vector<MmdCurvePoint> curve;
    for (double lam : lambdas) {
        SecretKeyPair scaled = key;
        scaled.lambda = lam;
        Tensor trig_feats = mmd_features(&clean_model, apply_trigger(clean_images, scaled), cfg);
        curve.push_back({lam, mmd(clean_feats, trig_feats, cfg)});
    }
    return curve;
}

double mmd_split_half_baseline(const Classifier& clean_model, const LabeledDataset& ds, int source_class,
                               const MMDConfig& cfg, std::uint64_t seed) {
    std::vector<std::size_t> src = ds.indices_of_class(source_class);
    if (src.size() < 2) throw ArgumentError("mmd_split_half_baseline: need at least two source samples");
    Rng rng(seed);
    rng.shuffle(src);
    std::vector<std::size_t> first(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(src.size() / 2));
    std::vector<std::size_t> second(src.begin() + static_cast<std::ptrdiff_t>(src.size() / 2), src.end());
    Tensor fa = mmd_features(&clean_model, ds.batch(first), cfg);
    Tensor fb = mmd_features(&clean_model, ds.batch(second), cfg);
    return mmd(fa, fb, cfg);
}

double auc_from_stats(const std::vector<double>& h0, const std::vector<double>& h1) {
    if (h0.empty() || h1.empty()) throw ArgumentError("auc: empty statistic set");
    double wins = 0.0;
    for (double s1 : h1)
        for (double s0 : h0) {
            if (s1 > s0)
                wins += 1.0;
            else if (s1 == s0)
                wins += 0.5;
        }
    return wins / (static_cast<double>(h0.size()) * static_cast<double>(h1.size()));
}

double detector_projection_variance(const Tensor& w, const Tensor& nu) {
    const std::size_t m = w.dim(0), d = w.dim(1);
    if (nu.size() != m) throw DimensionError("detector: nu length must equal weight rows");
    // Variance over columns of <nu, w_col>.
    std::vector<double> s(d, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double nv = nu.data[i];
        if (nv == 0.0) continue;
        const double* row = w.data.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) s[j] += nv * row[j];
    }
    double mu = 0.0;
    for (double v : s) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : s) var += (v - mu) * (v - mu);
    return var / static_cast<double>(d);
}

double detector_mp_eigen_ratio(const Tensor& w) {
    std::vector<double> ev = spectrum(w);
    MPParams mp = mp_bounds(w.dim(0), w.dim(1), estimate_sigma(w));
    return ev.back() / mp.upper;
}

std::vector<DetectorReport> run_detector_suite(const WeightFactory& factory, double theta, const Tensor& nu_bd,
                                               std::size_t trials, std::uint64_t seed) {
    if (trials < 2) throw ArgumentError("run_detector_suite: need at least 2 trials per hypothesis");
    DetectorReport proj;
    proj.name = "projection_variance";
    DetectorReport eig;
    eig.name = "mp_top_eigenvalue";

    auto proj_stat = [&](const Tensor& w) { return detector_projection_variance(w, nu_bd); };
    auto eig_stat = [&](const Tensor& w) { return detector_mp_eigen_ratio(w); };

    for (std::size_t t = 0; t < trials; ++t) {
        // Independent draws for the two hypotheses.
        Tensor w0 = factory(mix_seed(seed, 2 * t));
        Tensor w1 = factory(mix_seed(seed, 2 * t + 1));
        Tensor w1_planted = w1;
        if (theta > 0.0) {
            SpikeSpec spec{estimate_sigma(w1), theta, nu_bd};
            w1_planted = plant_backdoor(w1, spec);
        }
        proj.h0_stats.push_back(proj_stat(w0));
        proj.h1_stats.push_back(proj_stat(w1_planted));
        eig.h0_stats.push_back(eig_stat(w0));
        eig.h1_stats.push_back(eig_stat(w1_planted));
    }
    proj.trials = trials;
    eig.trials = trials;
    proj.auc = auc_from_stats(proj.h0_stats, proj.h1_stats);
    eig.auc = auc_from_stats(eig.h0_stats, eig.h1_stats);
    return {proj, eig};
}

}  // namespace spikelab
