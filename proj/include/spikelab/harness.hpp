#pragma once

#include <map>
#include <string>
#include <vector>

#include "spikelab/analysis.hpp"
#include "spikelab/config.hpp"
#include "spikelab/dataset.hpp"
#include "spikelab/defense.hpp"

namespace spikelab {

std::string tool_version();

// Drives the end-to-end pipeline from an ExperimentConfig. Each stage is a
// pure function of (config, seed, upstream artifacts): rerunning a stage
// with the same config reproduces its outputs byte for byte. Artifact writes
// go through a temp-file-then-rename path.
class Harness {
public:
    Harness(ExperimentConfig cfg, std::string out_dir);

    void run_train();
    void run_plant();
    void run_key();
    void run_evaluate();
    void run_defend();
    void run_analyze();
    void run_toy();
    void run_all();

    // Writes manifest.json covering the stages run by this instance.
    void write_manifest();

    std::string seed_dir(std::uint64_t seed) const;
    const ExperimentConfig& config() const { return cfg_; }

private:
    struct Splits {
        LabeledDataset train, val, test;
    };
    const Splits& data();

    void record_artifact(const std::string& path);
    void record_time(const std::string& stage, double seconds);
    std::string artifact(std::uint64_t seed, const std::string& name) const;
    void need(const std::string& path, const std::string& producing_stage) const;

    ExperimentConfig cfg_;
    std::string out_;
    bool data_ready_ = false;
    Splits splits_;
    std::vector<std::string> artifacts_;
    std::map<std::string, double> stage_seconds_;
};

// Atomic text write used for all report artifacts.
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace spikelab
