#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace spikelab {

// Flat key-value view of a config file. Grammar (documented in README):
//   - '#' starts a comment (whole line or trailing)
//   - '[section]' opens a section; subsequent keys become section.key
//   - 'key = value'; values are scalars or comma-separated lists
//   - numeric values may use the fraction form a/b (e.g. 30/255)
struct ConfigFile {
    std::map<std::string, std::string> entries;

    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_text(const std::string& text, const std::string& origin);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_number(const std::string& key, double fallback) const;
    long get_int(const std::string& key, long fallback) const;
    std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

    // FNV-1a over sorted, canonically re-serialized entries: whitespace and
    // comment changes leave it fixed, semantic changes move it.
    std::string canonical_hash() const;
};

struct DatasetConfig {
    std::string kind = "shapes";  // shapes | blobs | sbl1
    int classes = 3;
    std::size_t per_class = 500;
    int channels = 3;
    int height = 32;
    int width = 32;
    std::uint64_t seed = 7;
    std::string path;  // sbl1 source
    std::vector<double> split{0.7, 0.15, 0.15};
    // blobs
    std::size_t dimension = 2;
    double variance = 1.0;
    double mean_scale = 1.0;
};

struct ModelConfig {
    std::string kind = "cnn";  // cnn | mlp
    std::size_t m = 128;       // 0 = match feature width
    std::vector<std::size_t> hidden{256};
};

struct TrainSection {
    int epochs = 5;
    double lr = 1e-4;
    std::size_t batch = 64;
};

struct SpikeSection {
    double theta = 0.1;
    double alpha = 0.1;
    bool exponent_mode = false;  // sparsity = ceil(m^alpha) instead of ceil(alpha*m)
};

struct TriggerSection {
    int steps = 200;
    double lr = 0.01;
    int scale = 4;
    double lambda = 0.5;
    double lambda_l2 = 0.1;
    double epsilon = 30.0 / 255.0;
    double tau = 0.001;
    std::size_t batch = 64;
    std::size_t source_budget = 500;
    int cav_iterations = 5000;
};

struct DefenseSection {
    double cda_budget = 0.05;
    int finetune_epochs = 5;
    double finetune_lr = 1e-4;
    int noise_repeats = 5;
    int noise_points = 20;
    double nc_l1_weight = 0.05;
    int nc_steps = 100;
    double nc_threshold = 2.0;
    double nc_lr = 0.1;
    std::size_t nc_batch = 32;
    std::size_t nc_probe = 96;
};

struct ToySection {
    std::size_t d = 32;
    std::size_t m = 256;
    double theta = 6.0;
    double offset = 1.5;    // per-coordinate mean of class 1
    double variance = 0.5;  // within-class variance
    double alpha = 0.1;
    std::size_t train_per_class = 1500;
    std::size_t eval_per_class = 500;
    std::vector<double> lambda_grid{0.0, 0.5, 1.0, 2.0, 4.0};
    double pca_theta = 0.5;
    double pca_lambda = 2.0;
};

struct AnalysisSection {
    std::vector<double> mmd_lambda_grid{0.01, 0.5, 2.0, 5.0};
    std::size_t mmd_samples = 128;
    std::size_t detector_trials = 200;
    double detector_theta = 5.0;
    std::size_t detector_m = 64;
    std::size_t detector_d = 64;
    std::size_t spectrum_p = 200;
    std::size_t spectrum_n = 800;
    std::size_t hist_bins = 61;
    double contour_theta = 5.0;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    ModelConfig model;
    TrainSection train;
    SpikeSection spike;
    TriggerSection trigger;
    DefenseSection defense;
    ToySection toy;
    AnalysisSection analysis;
    int source = 0;
    int target = 1;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::string config_hash;

    // Throws ConfigError naming the offending field.
    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig from_config(const ConfigFile& file);
    void validate() const;
};

}  // namespace spikelab
