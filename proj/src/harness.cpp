#include "spikelab/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spikelab/error.hpp"
#include "spikelab/rng.hpp"
#include "spikelab/toy.hpp"
#include "spikelab/train.hpp"

namespace spikelab {

namespace fs = std::filesystem;
using nlohmann::json;

std::string tool_version() { return "spikelab 1.0.0"; }

void write_text_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ArgumentError("cannot open '" + tmp + "' for writing");
        out << content;
        if (!out) throw ArgumentError("write failed for '" + tmp + "'");
    }
    fs::rename(tmp, path);
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Stopwatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// Sparsity budget: fraction of m by default, ceil(m^alpha) in exponent mode.
double effective_alpha(double alpha, bool exponent_mode, std::size_t m) {
    if (!exponent_mode) return alpha;
    double nnz = std::ceil(std::pow(static_cast<double>(m), alpha));
    return std::min(1.0, nnz / static_cast<double>(m));
}

}  // namespace

Harness::Harness(ExperimentConfig cfg, std::string out_dir) : cfg_(std::move(cfg)), out_(std::move(out_dir)) {
    fs::create_directories(out_);
}

std::string Harness::seed_dir(std::uint64_t seed) const { return out_ + "/seed_" + std::to_string(seed); }

std::string Harness::artifact(std::uint64_t seed, const std::string& name) const {
    return seed_dir(seed) + "/" + name;
}

void Harness::record_artifact(const std::string& path) { artifacts_.push_back(path); }

void Harness::record_time(const std::string& stage, double seconds) { stage_seconds_[stage] += seconds; }

void Harness::need(const std::string& path, const std::string& producing_stage) const {
    if (!fs::exists(path))
        throw DependencyError("missing artifact '" + path + "'; run stage '" + producing_stage + "' first");
}

const Harness::Splits& Harness::data() {
    if (data_ready_) return splits_;
    const DatasetConfig& d = cfg_.dataset;
    LabeledDataset full;
    if (d.kind == "shapes") {
        full = make_shape_images(d.classes, d.per_class, d.channels, d.height, d.width, d.seed);
    } else if (d.kind == "blobs") {
        // Class means on alternating signed axes, scaled by mean_scale.
        Tensor means = Tensor::zeros({static_cast<std::size_t>(d.classes), d.dimension});
        for (int c = 0; c < d.classes; ++c) {
            std::size_t axis = static_cast<std::size_t>(c / 2) % d.dimension;
            means.at2(static_cast<std::size_t>(c), axis) = (c % 2 == 0 ? 1.0 : -1.0) * d.mean_scale;
        }
        GaussianBlobSpec spec{d.dimension, means, d.variance, d.per_class, d.seed};
        full = make_gaussian_blobs(spec);
    } else {
        full = load_binary_dataset(d.path);
    }
    std::array<double, 3> fr{d.split[0], d.split[1], d.split[2]};
    auto parts = split_dataset(full, fr, mix_seed(d.seed, 0x5B17));
    splits_.train = std::move(parts[0]);
    splits_.val = std::move(parts[1]);
    splits_.test = std::move(parts[2]);
    data_ready_ = true;
    return splits_;
}

// --- train -------------------------------------------------------------------

void Harness::run_train() {
    Stopwatch sw;
    const Splits& ds = data();
    for (std::uint64_t seed : cfg_.seeds) {
        fs::create_directories(seed_dir(seed));
        Classifier model;
        if (cfg_.model.kind == "cnn") {
            model = build_small_cnn(static_cast<int>(ds.train.images.dim(1)), static_cast<int>(ds.train.images.dim(2)),
                                    static_cast<int>(ds.train.images.dim(3)), cfg_.model.m, ds.train.class_count,
                                    mix_seed(seed, 0x30DE1));
        } else {
            model = build_mlp(ds.train.sample_numel(), cfg_.model.hidden, cfg_.model.m, ds.train.class_count,
                              mix_seed(seed, 0x30DE1));
        }
        TrainConfig tc{cfg_.train.epochs, cfg_.train.lr, cfg_.train.batch, mix_seed(seed, 0x7EA1)};
        TrainHistory hist = train(model, ds.train, ds.val, tc);
        std::string mpath = artifact(seed, "clean.sbm");
        save_model(model, mpath + ".tmp");
        fs::rename(mpath + ".tmp", mpath);
        record_artifact(mpath);
        json hj;
        for (const EpochStats& e : hist.epochs)
            hj["epochs"].push_back({{"train_loss", e.train_loss}, {"train_acc", e.train_acc}, {"val_acc", e.val_acc}});
        hj["test_acc"] = accuracy(model, ds.test);
        std::string hpath = artifact(seed, "train.json");
        write_text_atomic(hpath, hj.dump(2) + "\n");
        record_artifact(hpath);
    }
    record_time("train", sw.seconds());
}

// --- plant -------------------------------------------------------------------

void Harness::run_plant() {
    Stopwatch sw;
    const Splits& ds = data();
    for (std::uint64_t seed : cfg_.seeds) {
        std::string cpath = artifact(seed, "clean.sbm");
        need(cpath, "train");
        Classifier clean = load_model(cpath);

        // Injection stage: the backdoor layer's ReLU becomes linear, the CAV
        // is fit on the clean activations, then the surgery is applied.
        Classifier backdoored = clean;
        set_backdoor_activation(backdoored, Activation::Linear);

        std::vector<std::size_t> src = ds.train.indices_of_class(cfg_.source);
        std::vector<std::size_t> tgt = ds.train.indices_of_class(cfg_.target);
        if (src.empty() || tgt.empty()) throw ArgumentError("plant: train split lacks source or target samples");
        Tensor nu_raw = fit_cav(backdoored, ds.train.batch(src), ds.train.batch(tgt), cfg_.trigger.cav_iterations,
                                mix_seed(seed, 0xCA7));
        double alpha = effective_alpha(cfg_.spike.alpha, cfg_.spike.exponent_mode, backdoored.backdoor_dim);
        Tensor nu_bd = sparsify_normalize(nu_raw, alpha);

        double sigma = estimate_sigma(backdoored.backdoor_weight());
        SpikeSpec spec{sigma, cfg_.spike.theta, nu_bd};
        backdoored.backdoor_weight() = plant_backdoor(backdoored.backdoor_weight(), spec);

        std::string bpath = artifact(seed, "backdoored.sbm");
        save_model(backdoored, bpath + ".tmp");
        fs::rename(bpath + ".tmp", bpath);
        record_artifact(bpath);

        json sj;
        sj["theta"] = cfg_.spike.theta;
        sj["alpha"] = alpha;
        sj["sigma"] = sigma;
        sj["source"] = cfg_.source;
        sj["target"] = cfg_.target;
        sj["nu_bd"] = nu_bd.data;
        std::string spath = artifact(seed, "spike.json");
        write_text_atomic(spath, sj.dump(2) + "\n");
        record_artifact(spath);
    }
    record_time("plant", sw.seconds());
}

// --- key ---------------------------------------------------------------------

void Harness::run_key() {
    Stopwatch sw;
    const Splits& ds = data();
    for (std::uint64_t seed : cfg_.seeds) {
        std::string bpath = artifact(seed, "backdoored.sbm");
        std::string spath = artifact(seed, "spike.json");
        need(bpath, "plant");
        need(spath, "plant");
        Classifier backdoored = load_model(bpath);
        json sj = json::parse(std::ifstream(spath));
        Tensor nu_bd = Tensor::vec(sj["nu_bd"].get<std::vector<double>>());

        std::vector<std::size_t> src = ds.train.indices_of_class(cfg_.source);
        if (src.size() > cfg_.trigger.source_budget) src.resize(cfg_.trigger.source_budget);
        TriggerConfig tc;
        tc.steps = cfg_.trigger.steps;
        tc.lr = cfg_.trigger.lr;
        tc.scale = cfg_.trigger.scale;
        tc.lambda_l2 = cfg_.trigger.lambda_l2;
        tc.epsilon = cfg_.trigger.epsilon;
        tc.tau = cfg_.trigger.tau;
        tc.batch_size = cfg_.trigger.batch;
        Tensor nu_in = optimize_trigger(backdoored, ds.train.batch(src), nu_bd, tc);

        SecretKeyPair key;
        key.nu_bd = nu_bd;
        key.nu_in = nu_in;
        key.lambda = cfg_.trigger.lambda;
        key.source = cfg_.source;
        key.target = cfg_.target;
        key.alpha = sj["alpha"].get<double>();
        std::string kpath = artifact(seed, "key.sbk");
        save_key(key, kpath + ".tmp");
        fs::rename(kpath + ".tmp", kpath);
        record_artifact(kpath);
    }
    record_time("key", sw.seconds());
}

// --- evaluate ----------------------------------------------------------------

void Harness::run_evaluate() {
    Stopwatch sw;
    const Splits& ds = data();
    std::vector<AttackRun> runs;
    for (std::uint64_t seed : cfg_.seeds) {
        need(artifact(seed, "clean.sbm"), "train");
        need(artifact(seed, "backdoored.sbm"), "plant");
        need(artifact(seed, "key.sbk"), "key");
        Classifier clean = load_model(artifact(seed, "clean.sbm"));
        Classifier backdoored = load_model(artifact(seed, "backdoored.sbm"));
        SecretKeyPair key = load_key(artifact(seed, "key.sbk"));
        AttackRun run = evaluate_attack(clean, backdoored, ds.test, key);
        runs.push_back(run);
        json ej;
        ej["asr_backdoor"] = run.asr_backdoor;
        ej["asr_clean"] = run.asr_clean;
        ej["cda_backdoor"] = run.cda_backdoor;
        ej["cda_clean"] = run.cda_clean;
        std::string epath = artifact(seed, "eval.json");
        write_text_atomic(epath, ej.dump(2) + "\n");
        record_artifact(epath);
    }
    AttackReport rep = aggregate_attack(runs);
    std::ostringstream csv;
    csv << "model,dataset,source,target,"
           "triggered_clean_mean,triggered_clean_lo,triggered_clean_hi,"
           "triggered_backdoor_mean,triggered_backdoor_lo,triggered_backdoor_hi,"
           "overall_clean_mean,overall_clean_lo,overall_clean_hi,"
           "overall_backdoor_mean,overall_backdoor_lo,overall_backdoor_hi\n";
    csv << cfg_.model.kind << "," << cfg_.dataset.kind << "," << cfg_.source << "," << cfg_.target;
    for (const Ci* ci : {&rep.asr_clean, &rep.asr_backdoor, &rep.cda_clean, &rep.cda_backdoor})
        csv << "," << fmt(ci->mean) << "," << fmt(ci->lo) << "," << fmt(ci->hi);
    csv << "\n";
    write_text_atomic(out_ + "/table1.csv", csv.str());
    record_artifact(out_ + "/table1.csv");

    std::ostringstream per_seed;
    per_seed << "seed,asr_backdoor,asr_clean,cda_backdoor,cda_clean\n";
    for (std::size_t i = 0; i < runs.size(); ++i)
        per_seed << cfg_.seeds[i] << "," << fmt(runs[i].asr_backdoor) << "," << fmt(runs[i].asr_clean) << ","
                 << fmt(runs[i].cda_backdoor) << "," << fmt(runs[i].cda_clean) << "\n";
    write_text_atomic(out_ + "/table1_per_seed.csv", per_seed.str());
    record_artifact(out_ + "/table1_per_seed.csv");
    record_time("evaluate", sw.seconds());
}

// --- defend ------------------------------------------------------------------

namespace {

// Evenly covers all classes; deterministic given the dataset order.
std::vector<std::size_t> stratified_probe(const LabeledDataset& ds, std::size_t total) {
    std::vector<std::size_t> out;
    std::size_t per = std::max<std::size_t>(1, total / static_cast<std::size_t>(ds.class_count));
    for (int c = 0; c < ds.class_count; ++c) {
        std::vector<std::size_t> idx = ds.indices_of_class(c);
        for (std::size_t i = 0; i < std::min(per, idx.size()); ++i) out.push_back(idx[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

void Harness::run_defend() {
    Stopwatch sw;
    const Splits& ds = data();
    DefenseConfig dc = default_defense_config();
    dc.cda_budget = cfg_.defense.cda_budget;
    dc.finetune_epochs = cfg_.defense.finetune_epochs;
    dc.finetune_lr = cfg_.defense.finetune_lr;
    dc.noise_repeats = cfg_.defense.noise_repeats;
    dc.nc_l1_weight = cfg_.defense.nc_l1_weight;
    dc.nc_steps = cfg_.defense.nc_steps;
    dc.nc_anomaly_threshold = cfg_.defense.nc_threshold;
    dc.nc_lr = cfg_.defense.nc_lr;
    dc.nc_batch = cfg_.defense.nc_batch;

    std::vector<double> prune_asr, clip_asr, noise_asr, prune_cda, clip_cda, noise_cda;
    int nc_source_hits = 0, nc_target_hits = 0;
    // curves[defense][cohort][epoch] -> per-seed accuracies
    std::map<std::string, std::vector<std::vector<double>>> curve_clean, curve_trig;
    json dj;

    for (std::uint64_t seed : cfg_.seeds) {
        need(artifact(seed, "backdoored.sbm"), "plant");
        need(artifact(seed, "key.sbk"), "key");
        Classifier backdoored = load_model(artifact(seed, "backdoored.sbm"));
        SecretKeyPair key = load_key(artifact(seed, "key.sbk"));
        dc.seed = mix_seed(seed, 0xDEF);

        DefenseReport pr = prune_defense(backdoored, ds.val, key, dc);
        DefenseReport cr = clip_defense(backdoored, ds.val, key, dc);
        DefenseReport nr = noise_defense(backdoored, ds.val, key, dc);
        DefenseReport fr = finetune_defense(backdoored, ds.train, ds.val, key, dc);
        DefenseReport fpr = fineprune_defense(backdoored, ds.val, ds.train, key, dc);
        LabeledDataset probe = ds.test.subset(stratified_probe(ds.test, cfg_.defense.nc_probe), "probe");
        DefenseReport ncr = neural_cleanse(backdoored, probe, dc);

        prune_asr.push_back(pr.asr);
        prune_cda.push_back(pr.cda);
        clip_asr.push_back(cr.asr);
        clip_cda.push_back(cr.cda);
        noise_asr.push_back(nr.asr);
        noise_cda.push_back(nr.cda);
        for (int lab : ncr.nc_flagged) {
            if (lab == key.source) ++nc_source_hits;
            if (lab == key.target) ++nc_target_hits;
        }
        for (const DefenseReport* r : {&fr, &fpr}) {
            auto& cc = curve_clean[r->name];
            auto& ct = curve_trig[r->name];
            cc.resize(r->curve.size());
            ct.resize(r->curve.size());
            for (std::size_t e = 0; e < r->curve.size(); ++e) {
                cc[e].push_back(r->curve[e].cda);
                ct[e].push_back(r->curve[e].asr);
            }
        }

        json sj;
        auto dump_report = [](const DefenseReport& r) {
            json j;
            j["name"] = r.name;
            j["cda"] = r.cda;
            j["asr"] = r.asr;
            j["pre_cda"] = r.pre_cda;
            j["pre_asr"] = r.pre_asr;
            j["pruned_fraction"] = r.pruned_fraction;
            j["chosen_beta"] = r.chosen_beta;
            j["chosen_sigma"] = r.chosen_sigma;
            j["budget_violated"] = r.budget_violated;
            for (const CurvePoint& p : r.curve)
                j["curve"].push_back({{"epoch", p.epoch}, {"cda", p.cda}, {"asr", p.asr}});
            for (const SweepPoint& p : r.sweep)
                j["sweep"].push_back({{"parameter", p.parameter}, {"cda", p.cda}, {"asr", p.asr}});
            j["nc_mask_mass"] = r.nc_mask_mass;
            j["nc_anomaly_index"] = r.nc_anomaly_index;
            j["nc_flagged"] = r.nc_flagged;
            return j;
        };
        for (const DefenseReport* r : {&pr, &cr, &nr, &fr, &fpr, &ncr}) sj[r->name] = dump_report(*r);
        dj["seed_" + std::to_string(seed)] = sj;
    }

    write_text_atomic(out_ + "/defend.json", dj.dump(2) + "\n");
    record_artifact(out_ + "/defend.json");

    auto ci_of = [](const std::vector<double>& v) { return confidence_interval(v); };
    Ci pa = ci_of(prune_asr), ca = ci_of(clip_asr), na = ci_of(noise_asr);
    Ci pc = ci_of(prune_cda), cc2 = ci_of(clip_cda), nc2 = ci_of(noise_cda);
    std::ostringstream t2;
    t2 << "model,dataset,source,target,"
          "prune_asr_mean,prune_asr_lo,prune_asr_hi,prune_cda_mean,"
          "clip_asr_mean,clip_asr_lo,clip_asr_hi,clip_cda_mean,"
          "noise_asr_mean,noise_asr_lo,noise_asr_hi,noise_cda_mean,"
          "nc_source_detect_fraction,nc_target_detect_fraction\n";
    t2 << cfg_.model.kind << "," << cfg_.dataset.kind << "," << cfg_.source << "," << cfg_.target << ","
       << fmt(pa.mean) << "," << fmt(pa.lo) << "," << fmt(pa.hi) << "," << fmt(pc.mean) << "," << fmt(ca.mean) << ","
       << fmt(ca.lo) << "," << fmt(ca.hi) << "," << fmt(cc2.mean) << "," << fmt(na.mean) << "," << fmt(na.lo) << ","
       << fmt(na.hi) << "," << fmt(nc2.mean) << ","
       << fmt(static_cast<double>(nc_source_hits) / static_cast<double>(cfg_.seeds.size())) << ","
       << fmt(static_cast<double>(nc_target_hits) / static_cast<double>(cfg_.seeds.size())) << "\n";
    write_text_atomic(out_ + "/table2.csv", t2.str());
    record_artifact(out_ + "/table2.csv");

    std::ostringstream fc;
    fc << "defense,epoch,cohort,accuracy,ci_low,ci_high\n";
    for (const auto& [name, per_epoch] : curve_clean) {
        for (std::size_t e = 0; e < per_epoch.size(); ++e) {
            Ci ci = confidence_interval(per_epoch[e]);
            fc << name << "," << e << ",clean," << fmt(ci.mean) << "," << fmt(ci.lo) << "," << fmt(ci.hi) << "\n";
        }
        const auto& trig = curve_trig[name];
        for (std::size_t e = 0; e < trig.size(); ++e) {
            Ci ci = confidence_interval(trig[e]);
            fc << name << "," << e << ",triggered," << fmt(ci.mean) << "," << fmt(ci.lo) << "," << fmt(ci.hi) << "\n";
        }
    }
    write_text_atomic(out_ + "/fig2_curves.csv", fc.str());
    record_artifact(out_ + "/fig2_curves.csv");
    record_time("defend", sw.seconds());
}

// --- analyze -----------------------------------------------------------------

void Harness::run_analyze() {
    Stopwatch sw;
    const Splits& ds = data();
    json aj;

    std::uint64_t first = cfg_.seeds.front();
    need(artifact(first, "clean.sbm"), "train");
    need(artifact(first, "backdoored.sbm"), "plant");
    need(artifact(first, "key.sbk"), "key");
    Classifier clean = load_model(artifact(first, "clean.sbm"));
    Classifier backdoored = load_model(artifact(first, "backdoored.sbm"));
    SecretKeyPair key = load_key(artifact(first, "key.sbk"));

    // App. E: backdoor-layer spectra against the Marchenko-Pastur support.
    const Tensor& w = clean.backdoor_weight();
    const Tensor& w_hat = backdoored.backdoor_weight();
    MPParams mp = mp_bounds(w.dim(0), w.dim(1), estimate_sigma(w));
    std::vector<double> ev_clean = spectrum(w);
    std::vector<double> ev_bd = spectrum(w_hat);
    std::ostringstream sp;
    sp << "matrix,index,eigenvalue,mp_lower,mp_upper\n";
    for (std::size_t i = 0; i < ev_clean.size(); ++i)
        sp << "clean," << i << "," << fmt(ev_clean[i]) << "," << fmt(mp.lower) << "," << fmt(mp.upper) << "\n";
    for (std::size_t i = 0; i < ev_bd.size(); ++i)
        sp << "backdoored," << i << "," << fmt(ev_bd[i]) << "," << fmt(mp.lower) << "," << fmt(mp.upper) << "\n";
    write_text_atomic(out_ + "/appE_spectrum.csv", sp.str());
    record_artifact(out_ + "/appE_spectrum.csv");

    // App. I: weight histograms and tail statistics.
    WeightHistogram hg = weight_histogram(w, w_hat, cfg_.analysis.hist_bins);
    std::ostringstream hi;
    hi << "bin_lo,bin_hi,clean_count,backdoored_count\n";
    for (std::size_t b = 0; b < hg.clean_counts.size(); ++b)
        hi << fmt(hg.bin_edges[b]) << "," << fmt(hg.bin_edges[b + 1]) << "," << hg.clean_counts[b] << ","
           << hg.backdoored_counts[b] << "\n";
    write_text_atomic(out_ + "/appI_hist.csv", hi.str());
    record_artifact(out_ + "/appI_hist.csv");
    aj["weight_histogram"] = {{"clean_kurtosis", hg.clean_kurtosis},
                              {"backdoored_kurtosis", hg.backdoored_kurtosis},
                              {"clean_tail_mass", hg.clean_tail_mass},
                              {"backdoored_tail_mass", hg.backdoored_tail_mass}};

    // App. J: MMD vs lambda, with the split-half baseline.
    MMDConfig mc;
    std::vector<std::size_t> src = ds.test.indices_of_class(cfg_.source);
    if (src.size() > cfg_.analysis.mmd_samples) src.resize(cfg_.analysis.mmd_samples);
    LabeledDataset mmd_ds = ds.test.subset(src, "mmd");
    double baseline = mmd_split_half_baseline(clean, mmd_ds, cfg_.source, mc, mix_seed(first, 0x33D));
    std::vector<MmdCurvePoint> curve = mmd_lambda_sweep(clean, mmd_ds, key, cfg_.analysis.mmd_lambda_grid, mc);
    std::ostringstream mj;
    mj << "kind,lambda,mmd\n";
    mj << "baseline,0," << fmt(baseline) << "\n";
    for (const MmdCurvePoint& p : curve) mj << "curve," << fmt(p.lambda) << "," << fmt(p.mmd) << "\n";
    write_text_atomic(out_ + "/fig12_mmd.csv", mj.str());
    record_artifact(out_ + "/fig12_mmd.csv");
    aj["mmd_baseline"] = baseline;

    // Detector harness: idealized i.i.d. weights at the configured theta,
    // plus the trained per-seed pairs from this run's artifacts.
    const std::size_t dm = cfg_.analysis.detector_m, dd = cfg_.analysis.detector_d;
    Rng nu_rng(mix_seed(first, 0xDE7));
    Tensor nu = random_sparse_unit(dm, static_cast<std::size_t>(std::ceil(cfg_.spike.alpha * static_cast<double>(dm))),
                                   nu_rng);
    WeightFactory factory = [dm, dd](std::uint64_t s) {
        Rng r(s);
        return Tensor::randn({dm, dd}, r, 0.1);
    };
    std::vector<DetectorReport> ideal =
        run_detector_suite(factory, cfg_.analysis.detector_theta, nu, cfg_.analysis.detector_trials,
                           mix_seed(first, 0xD1CE));
    std::ostringstream dcsv;
    dcsv << "suite,detector,hypothesis,trial,statistic\n";
    for (const DetectorReport& r : ideal) {
        for (std::size_t t = 0; t < r.h0_stats.size(); ++t)
            dcsv << "idealized," << r.name << ",H0," << t << "," << fmt(r.h0_stats[t]) << "\n";
        for (std::size_t t = 0; t < r.h1_stats.size(); ++t)
            dcsv << "idealized," << r.name << ",H1," << t << "," << fmt(r.h1_stats[t]) << "\n";
        aj["detectors"]["idealized"][r.name] = r.auc;
    }
    // Trained pairs: every seed contributes its clean W (H0) and planted
    // W_hat (H1), each scored with that seed's own key direction.
    std::vector<double> tr_proj_h0, tr_proj_h1, tr_eig_h0, tr_eig_h1;
    for (std::uint64_t seed : cfg_.seeds) {
        if (!fs::exists(artifact(seed, "clean.sbm")) || !fs::exists(artifact(seed, "backdoored.sbm")) ||
            !fs::exists(artifact(seed, "key.sbk")))
            continue;
        Classifier c = load_model(artifact(seed, "clean.sbm"));
        Classifier b = load_model(artifact(seed, "backdoored.sbm"));
        SecretKeyPair k = load_key(artifact(seed, "key.sbk"));
        tr_proj_h0.push_back(detector_projection_variance(c.backdoor_weight(), k.nu_bd));
        tr_proj_h1.push_back(detector_projection_variance(b.backdoor_weight(), k.nu_bd));
        tr_eig_h0.push_back(detector_mp_eigen_ratio(c.backdoor_weight()));
        tr_eig_h1.push_back(detector_mp_eigen_ratio(b.backdoor_weight()));
    }
    if (tr_proj_h0.size() >= 2) {
        for (std::size_t t = 0; t < tr_proj_h0.size(); ++t) {
            dcsv << "trained,projection_variance,H0," << t << "," << fmt(tr_proj_h0[t]) << "\n";
            dcsv << "trained,projection_variance,H1," << t << "," << fmt(tr_proj_h1[t]) << "\n";
            dcsv << "trained,mp_top_eigenvalue,H0," << t << "," << fmt(tr_eig_h0[t]) << "\n";
            dcsv << "trained,mp_top_eigenvalue,H1," << t << "," << fmt(tr_eig_h1[t]) << "\n";
        }
        aj["detectors"]["trained"]["projection_variance"] = auc_from_stats(tr_proj_h0, tr_proj_h1);
        aj["detectors"]["trained"]["mp_top_eigenvalue"] = auc_from_stats(tr_eig_h0, tr_eig_h1);
    }
    write_text_atomic(out_ + "/detectors.csv", dcsv.str());
    record_artifact(out_ + "/detectors.csv");

    // App. A: clean vs spiked 2-D density contours via the Sigma builder.
    {
        Tensor nu2 = Tensor::vec({1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)});
        SpikeSpec spec2{1.0, cfg_.analysis.contour_theta, nu2};
        Tensor sig = build_sigma(spec2);
        double det = sig.at2(0, 0) * sig.at2(1, 1) - sig.at2(0, 1) * sig.at2(1, 0);
        double i00 = sig.at2(1, 1) / det, i11 = sig.at2(0, 0) / det, i01 = -sig.at2(0, 1) / det;
        std::ostringstream cj;
        cj << "x,y,density_clean,density_spiked\n";
        const int grid = 81;
        for (int yi = 0; yi < grid; ++yi) {
            for (int xi = 0; xi < grid; ++xi) {
                double x = -4.0 + 8.0 * xi / (grid - 1);
                double y = -4.0 + 8.0 * yi / (grid - 1);
                double qc = x * x + y * y;
                double qs = i00 * x * x + 2.0 * i01 * x * y + i11 * y * y;
                double pc = std::exp(-0.5 * qc) / (2.0 * 3.14159265358979323846);
                double ps = std::exp(-0.5 * qs) / (2.0 * 3.14159265358979323846 * std::sqrt(det));
                cj << fmt(x) << "," << fmt(y) << "," << fmt(pc) << "," << fmt(ps) << "\n";
            }
        }
        write_text_atomic(out_ + "/appA_contours.csv", cj.str());
        record_artifact(out_ + "/appA_contours.csv");
    }

    write_text_atomic(out_ + "/analyze.json", aj.dump(2) + "\n");
    record_artifact(out_ + "/analyze.json");
    record_time("analyze", sw.seconds());
}

// --- toy ---------------------------------------------------------------------

void Harness::run_toy() {
    Stopwatch sw;
    const ToySection& t = cfg_.toy;
    json tj;
    bool scatter_written = false;
    for (std::uint64_t seed : cfg_.seeds) {
        // Binary task with asymmetric norms: class 0 at the origin, class 1
        // offset per-coordinate, unit variance.
        Tensor means = Tensor::zeros({2, t.d});
        for (std::size_t j = 0; j < t.d; ++j) means.at2(1, j) = t.offset;
        GaussianBlobSpec train_spec{t.d, means, t.variance, t.train_per_class, mix_seed(seed, 0x701)};
        GaussianBlobSpec eval_spec{t.d, means, t.variance, t.eval_per_class, mix_seed(seed, 0x702)};
        LabeledDataset train_ds = make_gaussian_blobs(train_spec);
        LabeledDataset eval_ds = make_gaussian_blobs(eval_spec);
        Tensor train_x = train_ds.flat_rows();
        Tensor eval_x = eval_ds.flat_rows();

        Rng nu_rng(mix_seed(seed, 0x703));
        std::size_t nnz = static_cast<std::size_t>(std::ceil(t.alpha * static_cast<double>(t.d)));
        Tensor nu = random_sparse_unit(t.d, nnz, nu_rng);

        ReluToyNet clean_net = sample_clean_net(t.d, t.m, mix_seed(seed, 0x704));
        ReluToyNet bd_net = sample_backdoored_net(t.d, t.m, nu, t.theta, mix_seed(seed, 0x704));
        ThresholdFit clean_fit = tune_threshold(clean_net, train_x, train_ds.labels);
        ThresholdFit bd_fit = tune_threshold(bd_net, train_x, train_ds.labels);

        std::vector<std::size_t> src_rows = eval_ds.indices_of_class(0);
        Tensor src_x = Tensor::zeros({src_rows.size(), t.d});
        for (std::size_t i = 0; i < src_rows.size(); ++i)
            std::copy_n(eval_x.data.begin() + static_cast<std::ptrdiff_t>(src_rows[i] * t.d), t.d,
                        src_x.data.begin() + static_cast<std::ptrdiff_t>(i * t.d));

        json sj;
        sj["clean_balanced_accuracy"] = clean_fit.balanced_accuracy;
        sj["backdoored_balanced_accuracy"] = bd_fit.balanced_accuracy;
        for (double lam : t.lambda_grid) {
            Tensor trig = trigger_rows(src_x, nu, lam);
            auto asr_of = [&](const ReluToyNet& net) {
                std::vector<double> sc = toy_scores(net, trig);
                std::size_t hits = 0;
                for (double s : sc)
                    if (toy_predict(net, s) == 1) ++hits;
                return static_cast<double>(hits) / static_cast<double>(sc.size());
            };
            sj["asr"].push_back({{"lambda", lam}, {"backdoored", asr_of(bd_net)}, {"clean", asr_of(clean_net)}});
        }

        ReluToyNet pca_net = sample_backdoored_net(t.d, t.m, nu, t.pca_theta, mix_seed(seed, 0x705));
        std::size_t pca_n = std::min<std::size_t>(src_rows.size(), 400);
        Tensor pca_clean = Tensor::zeros({pca_n, t.d});
        std::copy_n(src_x.data.begin(), pca_n * t.d, pca_clean.data.begin());
        Tensor pca_trig = trigger_rows(pca_clean, nu, t.pca_lambda);
        PcaDisplacement disp = pca_displacement(pca_net, pca_clean, pca_trig);
        sj["pca_cosine"] = disp.cosine;
        sj["pca_rank_deficient"] = disp.rank_deficient;
        tj["seed_" + std::to_string(seed)] = sj;

        if (!scatter_written) {
            std::ostringstream sc;
            sc << "pc1,pc2,cohort\n";
            for (std::size_t i = 0; i < pca_n; ++i)
                sc << fmt(disp.clean_proj.at2(i, 0)) << "," << fmt(disp.clean_proj.at2(i, 1)) << ",clean\n";
            for (std::size_t i = 0; i < pca_n; ++i)
                sc << fmt(disp.triggered_proj.at2(i, 0)) << "," << fmt(disp.triggered_proj.at2(i, 1))
                   << ",triggered\n";
            sc << fmt(disp.key_direction[0]) << "," << fmt(disp.key_direction[1]) << ",key\n";
            sc << fmt(disp.mean_displacement[0]) << "," << fmt(disp.mean_displacement[1]) << ",displacement\n";
            write_text_atomic(out_ + "/fig1_scatter.csv", sc.str());
            record_artifact(out_ + "/fig1_scatter.csv");
            scatter_written = true;
        }
    }
    write_text_atomic(out_ + "/toy_report.json", tj.dump(2) + "\n");
    record_artifact(out_ + "/toy_report.json");
    record_time("toy", sw.seconds());
}

void Harness::run_all() {
    run_train();
    run_plant();
    run_key();
    run_evaluate();
    run_defend();
    run_analyze();
    run_toy();
}

void Harness::write_manifest() {
    json mj;
    mj["tool"] = tool_version();
    mj["config_hash"] = cfg_.config_hash;
    for (const auto& [stage, secs] : stage_seconds_) mj["stage_seconds"][stage] = secs;
    for (const std::string& p : artifacts_) {
        if (!fs::exists(p)) throw Error("manifest lists missing artifact: " + p);
        mj["artifacts"].push_back(p);
    }
    write_text_atomic(out_ + "/manifest.json", mj.dump(2) + "\n");
}

}  // namespace spikelab
