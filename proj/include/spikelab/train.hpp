#pragma once

#include <cstdint>
#include <vector>

#include "spikelab/dataset.hpp"
#include "spikelab/model.hpp"
#include "spikelab/optim.hpp"

namespace spikelab {

struct TrainConfig {
    int epochs = 5;
    double lr = 1e-4;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
};

struct EpochStats {
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

// Adam + cross-entropy, seeded shuffle per epoch; bit-reproducible per seed.
// Throws TrainingError naming the epoch if the loss goes non-finite.
TrainHistory train(Classifier& model, const LabeledDataset& train_set, const LabeledDataset& val_set,
                   const TrainConfig& cfg);

// Runs one additional Adam pass over the data (used by the fine-tuning
// defense, which continues training rather than restarting it).
void train_one_epoch(Classifier& model, const LabeledDataset& train_set, AdamState& opt, std::size_t batch_size,
                     std::uint64_t shuffle_seed);

double accuracy(const Classifier& model, const LabeledDataset& ds);

}  // namespace spikelab
