#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spikelab/dataset.hpp"
#include "spikelab/keys.hpp"
#include "spikelab/model.hpp"

namespace spikelab {

struct DefenseConfig {
    double cda_budget = 0.05;  // max clean-accuracy drop
    int finetune_epochs = 5;
    double finetune_lr = 1e-4;
    std::size_t finetune_batch = 64;
    std::vector<double> noise_sigmas;  // default: 20 log-spaced in [1e-3, 5]
    int noise_repeats = 5;
    std::vector<double> clip_betas;  // default: {0.1, 0.2, ..., 1.0}
    double nc_l1_weight = 0.05;
    int nc_steps = 100;
    double nc_anomaly_threshold = 2.0;
    double nc_lr = 0.1;
    std::size_t nc_batch = 32;
    std::uint64_t seed = 0;
};

DefenseConfig default_defense_config();

struct CurvePoint {
    int epoch;
    double cda;
    double asr;
};

struct SweepPoint {
    double parameter;  // beta or sigma_p
    double cda;
    double asr;
};

struct DefenseReport {
    std::string name;
    double cda = 0.0;
    double asr = 0.0;
    double pre_cda = 0.0;
    double pre_asr = 0.0;
    double pruned_fraction = 0.0;
    double chosen_beta = 0.0;
    double chosen_sigma = 0.0;
    bool budget_violated = false;  // no sweep point satisfied the budget
    std::vector<CurvePoint> curve;
    std::vector<SweepPoint> sweep;
    std::vector<double> nc_mask_mass;      // per label
    std::vector<double> nc_anomaly_index;  // per label
    std::vector<int> nc_flagged;           // labels flagged as outliers
};

// Clean accuracy plus attack success rate of key-triggered source inputs.
struct AttackMetrics {
    double cda = 0.0;
    double asr = 0.0;
};
AttackMetrics eval_attack_metrics(const Classifier& model, const LabeledDataset& eval_set, const SecretKeyPair& key);

// All defenses operate on a copy; the input model is never modified.
// Reports carry metrics on the provided evaluation set.

// Zeroes backdoor-layer units in ascending order of mean |activation| on
// clean validation data, stopping before clean accuracy drops more than
// cda_budget below the delivered model's.
DefenseReport prune_defense(const Classifier& model, const LabeledDataset& val, const SecretKeyPair& key,
                            const DefenseConfig& cfg, Classifier* out_model = nullptr);

DefenseReport finetune_defense(const Classifier& model, const LabeledDataset& clean_train,
                               const LabeledDataset& eval_set, const SecretKeyPair& key, const DefenseConfig& cfg,
                               Classifier* out_model = nullptr);

DefenseReport fineprune_defense(const Classifier& model, const LabeledDataset& val, const LabeledDataset& clean_train,
                                const SecretKeyPair& key, const DefenseConfig& cfg, Classifier* out_model = nullptr);

// Clips every parameter to [-beta M, beta M], M the delivered model's max
// |parameter|; reports the smallest beta keeping clean accuracy in budget.
DefenseReport clip_defense(const Classifier& model, const LabeledDataset& val, const SecretKeyPair& key,
                           const DefenseConfig& cfg, Classifier* out_model = nullptr);

// Adds N(0, sigma_p^2) to all parameters, averaged over noise_repeats fresh
// draws per sigma; reports the largest sigma within budget.
DefenseReport noise_defense(const Classifier& model, const LabeledDataset& val, const SecretKeyPair& key,
                            const DefenseConfig& cfg);

// Per-label minimal mask/pattern reverse-engineering with MAD outlier
// scoring on the mask L1 mass.
DefenseReport neural_cleanse(const Classifier& model, const LabeledDataset& probe, const DefenseConfig& cfg);

// MAD-based anomaly indices of per-label trigger masses (exposed for tests).
std::vector<double> nc_anomaly_indices(const std::vector<double>& masses);

}  // namespace spikelab
