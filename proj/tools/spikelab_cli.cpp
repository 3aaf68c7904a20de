// Command-line driver for the backdoor laboratory: train desk-scale
// classifiers, plant spiked-covariance backdoors, extract secret keys,
// evaluate attacks, run post-training defenses, and emit analysis data.

#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikelab/config.hpp"
#include "spikelab/error.hpp"
#include "spikelab/harness.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDependency = 3;
constexpr int kExitNumerical = 4;

struct Options {
    std::string config_path;
    std::string out_dir = "out";
    long seed_override = -1;
    int threads = 0;
    std::vector<std::string> stages;  // for `all`
};

int run_command(const std::string& command, const Options& opt) {
#ifdef _OPENMP
    if (opt.threads > 0) omp_set_num_threads(opt.threads);
#endif
    spikelab::ExperimentConfig cfg = spikelab::ExperimentConfig::load(opt.config_path);
    if (opt.seed_override >= 0) cfg.seeds = {static_cast<std::uint64_t>(opt.seed_override)};
    spikelab::Harness harness(cfg, opt.out_dir);

    const std::map<std::string, std::function<void()>> stages{
        {"train", [&] { harness.run_train(); }},       {"plant", [&] { harness.run_plant(); }},
        {"key", [&] { harness.run_key(); }},           {"evaluate", [&] { harness.run_evaluate(); }},
        {"defend", [&] { harness.run_defend(); }},     {"analyze", [&] { harness.run_analyze(); }},
        {"toy", [&] { harness.run_toy(); }},
    };

    if (command == "all") {
        static const char* order[] = {"train", "plant", "key", "evaluate", "defend", "analyze", "toy"};
        for (const char* stage : order) {
            if (!opt.stages.empty() &&
                std::find(opt.stages.begin(), opt.stages.end(), stage) == opt.stages.end())
                continue;
            std::printf("[spikelab] running stage %s\n", stage);
            std::fflush(stdout);
            stages.at(stage)();
        }
    } else {
        stages.at(command)();
    }
    harness.write_manifest();
    std::printf("[spikelab] done; artifacts in %s (config %s)\n", opt.out_dir.c_str(), cfg.config_hash.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spikelab: spiked-covariance backdoor laboratory"};
    app.require_subcommand(1);

    Options opt;
    std::string command;
    for (const char* name : {"train", "plant", "key", "evaluate", "defend", "analyze", "toy", "all"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", opt.config_path, "experiment config file")->required();
        sub->add_option("--out", opt.out_dir, "output directory (default: out)");
        sub->add_option("--seed-override", opt.seed_override, "run a single seed instead of the config list");
        sub->add_option("--threads", opt.threads, "OpenMP thread count (default: runtime choice)");
        if (std::string(name) == "all")
            sub->add_option("--stage", opt.stages, "restrict `all` to the named stages");
        sub->callback([&command, name] { command = name; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        return run_command(command, opt);
    } catch (const spikelab::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const spikelab::DependencyError& e) {
        std::fprintf(stderr, "dependency error: %s\n", e.what());
        return kExitDependency;
    } catch (const spikelab::TrainingError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const spikelab::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
