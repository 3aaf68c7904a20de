#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spikelab/dataset.hpp"
#include "spikelab/keys.hpp"
#include "spikelab/model.hpp"
#include "spikelab/spike.hpp"

namespace spikelab {

// One seed's worth of attack numbers: backdoored vs clean model evaluated
// under identical conditions on the same triggered test inputs.
struct AttackRun {
    double asr_backdoor = 0.0;
    double asr_clean = 0.0;  // adversarial-example baseline
    double cda_backdoor = 0.0;
    double cda_clean = 0.0;
};

AttackRun evaluate_attack(const Classifier& clean_model, const Classifier& backdoored_model,
                          const LabeledDataset& test_set, const SecretKeyPair& key);

struct Ci {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool degenerate = false;  // fewer than 2 values
};

// Normal-approximation 95% interval: mean +- 1.96 sd/sqrt(n).
Ci confidence_interval(const std::vector<double>& values);

struct AttackReport {
    Ci asr_backdoor, asr_clean, cda_backdoor, cda_clean;
    std::vector<AttackRun> per_seed;
};

AttackReport aggregate_attack(const std::vector<AttackRun>& runs);

// Marchenko-Pastur support for a p x n matrix of i.i.d. entries with
// standard deviation sigma: [sigma^2 (1-sqrt(g))^2, sigma^2 (1+sqrt(g))^2].
struct MPParams {
    std::size_t p = 0, n = 0;
    double sigma = 1.0;
    double gamma = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

MPParams mp_bounds(std::size_t p, std::size_t n, double sigma);

// Ascending eigenvalues of (1/n) X X^T for a p x n data matrix.
std::vector<double> spectrum(const Tensor& x);

struct WeightHistogram {
    std::vector<double> bin_edges;  // bins + 1 edges over the union range
    std::vector<std::size_t> clean_counts, backdoored_counts;
    double clean_kurtosis = 0.0, backdoored_kurtosis = 0.0;  // excess
    double clean_tail_mass = 0.0, backdoored_tail_mass = 0.0;  // P(|w| > 3 sigma_hat)
};

WeightHistogram weight_histogram(const Tensor& w, const Tensor& w_hat, std::size_t bins);

struct MMDConfig {
    double offset = 1.0;  // c
    int degree = 3;       // d
    enum class Features { RawPixels, CleanPenultimate } features = Features::CleanPenultimate;
};

// Biased MMD^2 estimate with polynomial kernel k(x,y) = (x.y/p + c)^d.
double mmd(const Tensor& a, const Tensor& b, const MMDConfig& cfg);

// Feature rows for a batch of images: flattened pixels, or the clean model's
// backdoor-layer activations (the stand-in for a pretrained feature net).
Tensor mmd_features(const Classifier* clean_model, const Tensor& images, const MMDConfig& cfg);

struct MmdCurvePoint {
    double lambda = 0.0;
    double mmd = 0.0;
};

std::vector<MmdCurvePoint> mmd_lambda_sweep(const Classifier& clean_model, const LabeledDataset& ds,
                                            const SecretKeyPair& key, const std::vector<double>& lambdas,
                                            const MMDConfig& cfg);

// Reference magnitude from two halves of the clean source-class set.
double mmd_split_half_baseline(const Classifier& clean_model, const LabeledDataset& ds, int source_class,
                               const MMDConfig& cfg, std::uint64_t seed);

struct DetectorReport {
    std::string name;
    std::vector<double> h0_stats;  // clean instances
    std::vector<double> h1_stats;  // backdoored instances
    double auc = 0.5;
    std::size_t trials = 0;
};

// Mann-Whitney AUC of H1 stats over H0 stats (ties get half credit).
double auc_from_stats(const std::vector<double>& h0, const std::vector<double>& h1);

// Detector statistics on a delivered weight matrix.
double detector_projection_variance(const Tensor& w, const Tensor& nu);  // Var_cols <nu, w_col>
double detector_mp_eigen_ratio(const Tensor& w);  // top eigenvalue / MP upper edge

// Paired clean/backdoored weight instances across seeds; detectors:
// (a) variance of column projections onto the known nu_bd,
// (b) top sample-covariance eigenvalue relative to the MP upper edge.
using WeightFactory = std::function<Tensor(std::uint64_t seed)>;
std::vector<DetectorReport> run_detector_suite(const WeightFactory& factory, double theta, const Tensor& nu_bd,
                                               std::size_t trials, std::uint64_t seed);

}  // namespace spikelab
