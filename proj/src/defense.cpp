#include "spikelab/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spikelab/error.hpp"
#include "spikelab/kernels.hpp"
#include "spikelab/optim.hpp"
#include "spikelab/rng.hpp"
#include "spikelab/train.hpp"

namespace spikelab {

DefenseConfig default_defense_config() {
    DefenseConfig cfg;
    const int points = 20;
    const double lo = std::log(1e-3), hi = std::log(5.0);
    for (int i = 0; i < points; ++i)
        cfg.noise_sigmas.push_back(std::exp(lo + (hi - lo) * static_cast<double>(i) / (points - 1)));
    for (int i = 1; i <= 10; ++i) cfg.clip_betas.push_back(0.1 * i);
    return cfg;
}

AttackMetrics eval_attack_metrics(const Classifier& model, const LabeledDataset& eval_set,
                                  const SecretKeyPair& key) {
    AttackMetrics m;
    m.cda = accuracy(model, eval_set);
    std::vector<std::size_t> src = eval_set.indices_of_class(key.source);
    if (src.empty()) throw ArgumentError("eval_attack_metrics: evaluation set has no source-class samples");
    Tensor triggered = apply_trigger(eval_set.batch(src), key);
    std::vector<int> pred = predict(model, triggered);
    std::size_t hits = 0;
    for (int p : pred)
        if (p == key.target) ++hits;
    m.asr = static_cast<double>(hits) / static_cast<double>(pred.size());
    return m;
}

namespace {

// Forward through the layers before the backdoor layer; the result is the
// d-dimensional feature the backdoor linear layer consumes.
Tensor backbone_features(const Classifier& model, const Tensor& inputs) {
    if (model.backdoor_index < 0) throw ArgumentError("model has no backdoor layer");
    Classifier trunk;
    trunk.layers.assign(model.layers.begin(), model.layers.begin() + model.backdoor_index);
    trunk.backdoor_index = -1;
    trunk.class_count = model.class_count;
    Tensor out = trunk.layers.empty() ? inputs : trunk.forward(inputs);
    if (out.ndim() != 2) out.shape = {out.dim(0), out.size() / out.dim(0)};
    return out;
}

// Logits from cached features under the (possibly pruned) backdoor + head.
Tensor logits_from_features(const Classifier& model, const Tensor& features) {
    const Layer& bd = model.layers[static_cast<std::size_t>(model.backdoor_index)];
    const std::size_t b = features.dim(0), d = features.dim(1), m = bd.weight.dim(0);
    Tensor act = Tensor::zeros({b, m});
    kernels::matmul(features.data.data(), bd.weight.data.data(), act.data.data(), b, d, m, false, true, false);
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t j = 0; j < m; ++j) act.data[r * m + j] += bd.bias.data[j];
    if (model.backdoor_activation == Activation::Relu)
        kernels::relu_forward(act.data.data(), act.data.data(), act.size());
    const Layer& head = model.layers[static_cast<std::size_t>(model.backdoor_index) + 1];
    const std::size_t k = head.weight.dim(0);
    Tensor logits = Tensor::zeros({b, k});
    kernels::matmul(act.data.data(), head.weight.data.data(), logits.data.data(), b, m, k, false, true, false);
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t j = 0; j < k; ++j) logits.data[r * k + j] += head.bias.data[j];
    return logits;
}

double accuracy_from_features(const Classifier& model, const Tensor& features, const std::vector<int>& labels) {
    Tensor logits = logits_from_features(model, features);
    const std::size_t b = logits.dim(0), k = logits.dim(1);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < b; ++r) {
        const double* row = logits.data.data() + r * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;
        if (static_cast<int>(best) == labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(b);
}

double asr_from_features(const Classifier& model, const Tensor& triggered_features, int target) {
    Tensor logits = logits_from_features(model, triggered_features);
    const std::size_t b = logits.dim(0), k = logits.dim(1);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < b; ++r) {
        const double* row = logits.data.data() + r * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;
        if (static_cast<int>(best) == target) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(b);
}

}  // namespace

DefenseReport prune_defense(const Classifier& model, const LabeledDataset& val, const SecretKeyPair& key,
                            const DefenseConfig& cfg, Classifier* out_model) {
    if (val.size() == 0) throw ArgumentError("prune: empty validation set");
    DefenseReport rep;
    rep.name = "prune";

    Classifier work = model;
    // Pruning the backdoor layer leaves the backbone untouched, so clean and
    // triggered features can be computed once.
    Tensor feats = backbone_features(model, val.images);
    std::vector<std::size_t> src = val.indices_of_class(key.source);
    if (src.empty()) throw ArgumentError("prune: validation set has no source-class samples");
    Tensor trig_feats = backbone_features(model, apply_trigger(val.batch(src), key));

    const double baseline = accuracy_from_features(work, feats, val.labels);
    rep.pre_cda = baseline;
    rep.pre_asr = asr_from_features(work, trig_feats, key.target);

    Layer& bd = work.layers[static_cast<std::size_t>(work.backdoor_index)];
    const std::size_t m = bd.weight.dim(0), d = bd.weight.dim(1);

    // Mean |activation| per unit on clean validation data; rows are
    // independent so the order never needs recomputing.
    Tensor act = Tensor::zeros({feats.dim(0), m});
    kernels::matmul(feats.data.data(), bd.weight.data.data(), act.data.data(), feats.dim(0), d, m, false, true,
                    false);
    for (std::size_t r = 0; r < feats.dim(0); ++r)
        for (std::size_t j = 0; j < m; ++j) act.data[r * m + j] += bd.bias.data[j];
    if (work.backdoor_activation == Activation::Relu)
        kernels::relu_forward(act.data.data(), act.data.data(), act.size());
    std::vector<double> unit_mean(m, 0.0);
    for (std::size_t r = 0; r < feats.dim(0); ++r)
        for (std::size_t j = 0; j < m; ++j) unit_mean[j] += std::abs(act.data[r * m + j]);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b2) { return unit_mean[a] < unit_mean[b2]; });

    std::size_t pruned = 0;
    std::vector<double> saved_row(d);
    for (std::size_t u : order) {
        double saved_bias = bd.bias.data[u];
        std::copy_n(bd.weight.data.begin() + static_cast<std::ptrdiff_t>(u * d), d, saved_row.begin());
        std::fill_n(bd.weight.data.begin() + static_cast<std::ptrdiff_t>(u * d), d, 0.0);
        bd.bias.data[u] = 0.0;
        double cda = accuracy_from_features(work, feats, val.labels);
        if (cda < baseline - cfg.cda_budget) {
            std::copy(saved_row.begin(), saved_row.end(),
                      bd.weight.data.begin() + static_cast<std::ptrdiff_t>(u * d));
            bd.bias.data[u] = saved_bias;
            break;
        }
        ++pruned;
    }

    rep.pruned_fraction = static_cast<double>(pruned) / static_cast<double>(m);
    rep.cda = accuracy_from_features(work, feats, val.labels);
    rep.asr = asr_from_features(work, trig_feats, key.target);
    if (out_model) *out_model = std::move(work);
    return rep;
}

DefenseReport finetune_defense(const Classifier& model, const LabeledDataset& clean_train,
                               const LabeledDataset& eval_set, const SecretKeyPair& key, const DefenseConfig& cfg,
                               Classifier* out_model) {
    if (clean_train.size() == 0) throw ArgumentError("fine_tune: empty clean training subset");
    DefenseReport rep;
    rep.name = "fine_tune";
    Classifier work = model;
    AttackMetrics m0 = eval_attack_metrics(work, eval_set, key);
    rep.pre_cda = m0.cda;
    rep.pre_asr = m0.asr;
    rep.curve.push_back({0, m0.cda, m0.asr});
    AdamState opt(cfg.finetune_lr);
    for (int e = 1; e <= cfg.finetune_epochs; ++e) {
        train_one_epoch(work, clean_train, opt, cfg.finetune_batch, mix_seed(cfg.seed, 0xF1000 + e));
        AttackMetrics me = eval_attack_metrics(work, eval_set, key);
        rep.curve.push_back({e, me.cda, me.asr});
    }
    rep.cda = rep.curve.back().cda;
    rep.asr = rep.curve.back().asr;
    if (out_model) *out_model = std::move(work);
    return rep;
}

DefenseReport fineprune_defense(const Classifier& model, const LabeledDataset& val, const LabeledDataset& clean_train,
                                const SecretKeyPair& key, const DefenseConfig& cfg, Classifier* out_model) {
    Classifier pruned;
    DefenseReport stage1 = prune_defense(model, val, key, cfg, &pruned);
    Classifier tuned;
    DefenseReport stage2 = finetune_defense(pruned, clean_train, val, key, cfg, &tuned);
    DefenseReport rep = stage2;
    rep.name = "fine_prune";
    rep.pre_cda = stage1.pre_cda;
    rep.pre_asr = stage1.pre_asr;
    rep.pruned_fraction = stage1.pruned_fraction;
    if (out_model) *out_model = std::move(tuned);
    return rep;
}

DefenseReport clip_defense(const Classifier& model, const LabeledDataset& val, const SecretKeyPair& key,
                           const DefenseConfig& cfg, Classifier* out_model) {
    if (cfg.clip_betas.empty()) throw ArgumentError("clip: empty beta grid");
    DefenseReport rep;
    rep.name = "clip";
    AttackMetrics base = eval_attack_metrics(model, val, key);
    rep.pre_cda = base.cda;
    rep.pre_asr = base.asr;

    double max_param = 0.0;
    for (const Tensor* p : model.parameters()) max_param = std::max(max_param, max_abs(*p));

    std::vector<double> betas = cfg.clip_betas;
    std::sort(betas.begin(), betas.end());
    bool chosen = false;
    Classifier best;
    for (double beta : betas) {
        Classifier work = model;
        double bound = beta * max_param;
        for (Tensor* p : work.parameters())
            for (double& v : p->data) v = std::clamp(v, -bound, bound);
        AttackMetrics m = eval_attack_metrics(work, val, key);
        rep.sweep.push_back({beta, m.cda, m.asr});
        if (!chosen && m.cda >= base.cda - cfg.cda_budget) {
            chosen = true;
            rep.chosen_beta = beta;
            rep.cda = m.cda;
            rep.asr = m.asr;
            best = std::move(work);
        }
    }
    if (!chosen) {
        // No beta kept clean accuracy in budget; report the no-op setting.
        rep.budget_violated = true;
        rep.chosen_beta = 1.0;
        rep.cda = base.cda;
        rep.asr = base.asr;
        best = model;
    }
    if (out_model) *out_model = std::move(best);
    return rep;
}

DefenseReport noise_defense(const Classifier& model, const LabeledDataset& val, const SecretKeyPair& key,
                            const DefenseConfig& cfg) {
    if (cfg.noise_sigmas.empty()) throw ArgumentError("noise: empty sigma grid");
    if (cfg.noise_repeats < 1) throw ArgumentError("noise: repeats must be >= 1");
    DefenseReport rep;
    rep.name = "noise";
    AttackMetrics base = eval_attack_metrics(model, val, key);
    rep.pre_cda = base.cda;
    rep.pre_asr = base.asr;

    std::vector<double> sigmas = cfg.noise_sigmas;
    std::sort(sigmas.begin(), sigmas.end());
    bool chosen = false;
    for (std::size_t si = 0; si < sigmas.size(); ++si) {
        double sigma = sigmas[si];
        double cda_sum = 0.0, asr_sum = 0.0;
        for (int r = 0; r < cfg.noise_repeats; ++r) {
            Classifier work = model;
            Rng rng(mix_seed(cfg.seed, 0xA0000 + si * 1000 + static_cast<std::size_t>(r)));
            for (Tensor* p : work.parameters())
                for (double& v : p->data) v += rng.normal(0.0, sigma);
            AttackMetrics m = eval_attack_metrics(work, val, key);
            cda_sum += m.cda;
            asr_sum += m.asr;
        }
        double cda = cda_sum / cfg.noise_repeats, asr = asr_sum / cfg.noise_repeats;
        rep.sweep.push_back({sigma, cda, asr});
    }
    // Largest sigma whose averaged clean accuracy stays within budget.
    for (std::size_t si = rep.sweep.size(); si-- > 0;) {
        if (rep.sweep[si].cda >= base.cda - cfg.cda_budget) {
            rep.chosen_sigma = rep.sweep[si].parameter;
            rep.cda = rep.sweep[si].cda;
            rep.asr = rep.sweep[si].asr;
            chosen = true;
            break;
        }
    }
    if (!chosen) {
        rep.budget_violated = true;
        rep.chosen_sigma = 0.0;
        rep.cda = base.cda;
        rep.asr = base.asr;
    }
    return rep;
}

std::vector<double> nc_anomaly_indices(const std::vector<double>& masses) {
    if (masses.empty()) return {};
    std::vector<double> sorted = masses;
    std::sort(sorted.begin(), sorted.end());
    double med = sorted[sorted.size() / 2];
    if (sorted.size() % 2 == 0) med = 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    std::vector<double> dev(masses.size());
    for (std::size_t i = 0; i < masses.size(); ++i) dev[i] = std::abs(masses[i] - med);
    std::vector<double> dsorted = dev;
    std::sort(dsorted.begin(), dsorted.end());
    double mad = dsorted[dsorted.size() / 2];
    if (dsorted.size() % 2 == 0) mad = 0.5 * (dsorted[dsorted.size() / 2 - 1] + dsorted[dsorted.size() / 2]);
    double denom = 1.4826 * mad;
    std::vector<double> idx(masses.size(), 0.0);
    if (denom > 0.0)
        for (std::size_t i = 0; i < masses.size(); ++i) idx[i] = dev[i] / denom;
    return idx;
}

DefenseReport neural_cleanse(const Classifier& model, const LabeledDataset& probe, const DefenseConfig& cfg) {
    if (probe.size() == 0) throw ArgumentError("neural_cleanse: empty probe set");
    for (int c = 0; c < model.class_count; ++c)
        if (probe.indices_of_class(c).empty())
            throw ArgumentError("neural_cleanse: probe set must span all classes (missing class " +
                                std::to_string(c) + ")");
    if (probe.images.ndim() != 4) throw DimensionError("neural_cleanse: probe images must be n x c x h x w");
    const std::size_t h = probe.images.dim(2), w = probe.images.dim(3), c = probe.images.dim(1);

    DefenseReport rep;
    rep.name = "neural_cleanse";
    rep.pre_cda = accuracy(model, probe);
    rep.cda = rep.pre_cda;

    for (int t = 0; t < model.class_count; ++t) {
        Tensor mask = Tensor::full({h, w}, 0.1);
        Tensor pattern = Tensor::full({c, h, w}, 0.5);
        AdamState opt(cfg.nc_lr);
        std::vector<std::size_t> order(probe.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(mix_seed(cfg.seed, 0x7C000 + static_cast<std::uint64_t>(t)));
        rng.shuffle(order);
        std::size_t cursor = 0;
        for (int step = 0; step < cfg.nc_steps; ++step) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < cfg.nc_batch; ++i) {
                idx.push_back(order[cursor]);
                cursor = (cursor + 1) % order.size();
            }
            Tensor xb = probe.batch(idx);
            std::vector<int> labels(idx.size(), t);
            Graph g;
            Var x = g.leaf(std::move(xb), false);
            Var mv = g.leaf(mask, true);
            Var pv = g.leaf(pattern, true);
            Var blended = masked_blend(g, x, mv, pv);
            ModelGraph mg = apply_model(g, model, blended, false);
            Var ce = softmax_cross_entropy(g, mg.logits, labels);
            // mask stays in [0,1] via projection, so sum(mask) is its L1 mass
            Var loss = add(g, ce, scale(g, sum(g, mv), cfg.nc_l1_weight));
            if (!std::isfinite(g.value(loss).item())) throw NumericalError("neural_cleanse: non-finite loss");
            g.backward(loss);
            std::vector<Tensor*> params{&mask, &pattern};
            std::vector<const Tensor*> grads{&g.grad_buffer(mv), &g.grad_buffer(pv)};
            opt.step(params, grads);
            mask = spikelab::clamp(mask, 0.0, 1.0);
            pattern = spikelab::clamp(pattern, 0.0, 1.0);
        }
        rep.nc_mask_mass.push_back(sum(mask));
    }

    rep.nc_anomaly_index = nc_anomaly_indices(rep.nc_mask_mass);
    std::vector<double> sorted = rep.nc_mask_mass;
    std::sort(sorted.begin(), sorted.end());
    double med = sorted[sorted.size() / 2];
    if (sorted.size() % 2 == 0) med = 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    for (int t = 0; t < model.class_count; ++t)
        if (rep.nc_anomaly_index[static_cast<std::size_t>(t)] > cfg.nc_anomaly_threshold &&
            rep.nc_mask_mass[static_cast<std::size_t>(t)] < med)
            rep.nc_flagged.push_back(t);
    return rep;
}

}  // namespace spikelab
