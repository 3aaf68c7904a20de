#include "spikelab/train.hpp"

#include <cmath>
#include <numeric>

#include "spikelab/error.hpp"
#include "spikelab/rng.hpp"

namespace spikelab {

namespace {

struct BatchResult {
    double loss = 0.0;
    std::size_t correct = 0;
};

BatchResult train_batch(Classifier& model, const Tensor& images, const std::vector<int>& labels, AdamState& opt) {
    Graph g;
    Var input = g.leaf(images, false);
    ModelGraph mg = apply_model(g, model, input, true);
    Var loss = softmax_cross_entropy(g, mg.logits, labels);
    g.backward(loss);

    BatchResult res;
    res.loss = g.value(loss).item();
    const Tensor& logits = g.value(mg.logits);
    const std::size_t b = logits.dim(0), k = logits.dim(1);
    for (std::size_t r = 0; r < b; ++r) {
        const double* row = logits.data.data() + r * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;
        if (static_cast<int>(best) == labels[r]) ++res.correct;
    }

    std::vector<Tensor*> params = model.parameters();
    std::vector<const Tensor*> grads;
    grads.reserve(params.size());
    for (Var pv : mg.params) grads.push_back(&g.grad_buffer(pv));
    opt.step(params, grads);
    return res;
}

}  // namespace

void train_one_epoch(Classifier& model, const LabeledDataset& train_set, AdamState& opt, std::size_t batch_size,
                     std::uint64_t shuffle_seed) {
    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(shuffle_seed);
    rng.shuffle(order);
    for (std::size_t at = 0; at < n; at += batch_size) {
        std::size_t take = std::min(batch_size, n - at);
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(at),
                                     order.begin() + static_cast<std::ptrdiff_t>(at + take));
        Tensor images = train_set.batch(idx);
        std::vector<int> labels(take);
        for (std::size_t i = 0; i < take; ++i) labels[i] = train_set.labels[idx[i]];
        BatchResult res = train_batch(model, images, labels, opt);
        if (!std::isfinite(res.loss)) throw TrainingError("loss diverged (non-finite)");
    }
}

TrainHistory train(Classifier& model, const LabeledDataset& train_set, const LabeledDataset& val_set,
                   const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ArgumentError("train: epochs must be >= 1");
    if (cfg.batch_size == 0) throw ArgumentError("train: batch size must be >= 1");
    if (train_set.class_count != model.class_count)
        throw ArgumentError("train: dataset class count does not match the model");
    if (train_set.size() == 0) throw ArgumentError("train: empty training set");

    AdamState opt(cfg.lr);
    TrainHistory hist;
    const std::size_t n = train_set.size();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t at = 0; at < n; at += cfg.batch_size) {
            std::size_t take = std::min(cfg.batch_size, n - at);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(at),
                                         order.begin() + static_cast<std::ptrdiff_t>(at + take));
            Tensor images = train_set.batch(idx);
            std::vector<int> labels(take);
            for (std::size_t i = 0; i < take; ++i) labels[i] = train_set.labels[idx[i]];
            BatchResult res = train_batch(model, images, labels, opt);
            if (!std::isfinite(res.loss))
                throw TrainingError("loss diverged (non-finite) at epoch " + std::to_string(epoch + 1));
            loss_sum += res.loss * static_cast<double>(take);
            correct += res.correct;
        }
        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(n);
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(n);
        stats.val_acc = val_set.size() ? accuracy(model, val_set) : 0.0;
        hist.epochs.push_back(stats);
    }
    return hist;
}

double accuracy(const Classifier& model, const LabeledDataset& ds) {
    if (ds.size() == 0) throw ArgumentError("accuracy: empty dataset");
    const std::size_t batch = 256;
    std::size_t correct = 0;
    for (std::size_t at = 0; at < ds.size(); at += batch) {
        std::size_t take = std::min(batch, ds.size() - at);
        std::vector<std::size_t> idx(take);
        std::iota(idx.begin(), idx.end(), at);
        std::vector<int> pred = predict(model, ds.batch(idx));
        for (std::size_t i = 0; i < take; ++i)
            if (pred[i] == ds.labels[at + i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace spikelab
