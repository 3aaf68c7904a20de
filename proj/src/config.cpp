#include "spikelab/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spikelab/error.hpp"

namespace spikelab {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool parse_number(const std::string& raw, double& out) {
    std::string s = trim(raw);
    if (s.empty()) return false;
    // fraction form a/b
    std::size_t slash = s.find('/');
    if (slash != std::string::npos) {
        double num, den;
        char tail;
        std::string a = trim(s.substr(0, slash)), b = trim(s.substr(slash + 1));
        if (std::sscanf(a.c_str(), "%lf%c", &num, &tail) == 1 && std::sscanf(b.c_str(), "%lf%c", &den, &tail) == 1 &&
            den != 0.0) {
            out = num / den;
            return true;
        }
        return false;
    }
    char tail;
    return std::sscanf(s.c_str(), "%lf%c", &out, &tail) == 1;
}

std::string canonical_value(const std::string& raw) {
    // Numbers (and lists of numbers) re-serialize canonically so that
    // "1e-4" and "0.0001" hash identically.
    std::vector<std::string> parts;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(item);
    if (parts.empty()) parts.push_back(raw);
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        std::string p = trim(parts[i]);
        double v;
        if (parse_number(p, v)) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            p = buf;
        }
        if (i) out += ",";
        out += p;
    }
    return out;
}

}  // namespace

ConfigFile ConfigFile::parse_text(const std::string& text, const std::string& origin) {
    ConfigFile cfg;
    std::stringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        std::string full = section.empty() ? key : section + "." + key;
        cfg.entries[full] = value;
    }
    return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), path);
}

bool ConfigFile::has(const std::string& key) const { return entries.count(key) > 0; }

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
    auto it = entries.find(key);
    return it == entries.end() ? fallback : it->second;
}

double ConfigFile::get_number(const std::string& key, double fallback) const {
    auto it = entries.find(key);
    if (it == entries.end()) return fallback;
    double v;
    if (!parse_number(it->second, v)) throw ConfigError("config field '" + key + "': expected a number");
    return v;
}

long ConfigFile::get_int(const std::string& key, long fallback) const {
    double v = get_number(key, static_cast<double>(fallback));
    long l = static_cast<long>(v);
    if (static_cast<double>(l) != v) throw ConfigError("config field '" + key + "': expected an integer");
    return l;
}

std::vector<double> ConfigFile::get_list(const std::string& key, const std::vector<double>& fallback) const {
    auto it = entries.find(key);
    if (it == entries.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v;
        if (!parse_number(item, v)) throw ConfigError("config field '" + key + "': expected a number list");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("config field '" + key + "': empty list");
    return out;
}

std::string ConfigFile::canonical_hash() const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    auto mix = [&](const std::string& s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [k, v] : entries) {  // std::map iterates sorted
        mix(k);
        mix("=");
        mix(canonical_value(v));
        mix("\n");
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    return from_config(ConfigFile::parse_file(path));
}

ExperimentConfig ExperimentConfig::from_config(const ConfigFile& f) {
    ExperimentConfig c;
    auto& d = c.dataset;
    d.kind = f.get_string("dataset.kind", d.kind);
    d.classes = static_cast<int>(f.get_int("dataset.classes", d.classes));
    d.per_class = static_cast<std::size_t>(f.get_int("dataset.per_class", static_cast<long>(d.per_class)));
    d.channels = static_cast<int>(f.get_int("dataset.channels", d.channels));
    d.height = static_cast<int>(f.get_int("dataset.height", d.height));
    d.width = static_cast<int>(f.get_int("dataset.width", d.width));
    d.seed = static_cast<std::uint64_t>(f.get_int("dataset.seed", static_cast<long>(d.seed)));
    d.path = f.get_string("dataset.path", d.path);
    d.split = f.get_list("dataset.split", d.split);
    d.dimension = static_cast<std::size_t>(f.get_int("dataset.dimension", static_cast<long>(d.dimension)));
    d.variance = f.get_number("dataset.variance", d.variance);
    d.mean_scale = f.get_number("dataset.mean_scale", d.mean_scale);

    c.model.kind = f.get_string("model.kind", c.model.kind);
    c.model.m = static_cast<std::size_t>(f.get_int("model.m", static_cast<long>(c.model.m)));
    if (f.has("model.hidden")) {
        c.model.hidden.clear();
        for (double v : f.get_list("model.hidden", {}))
            c.model.hidden.push_back(static_cast<std::size_t>(v));
    }

    c.train.epochs = static_cast<int>(f.get_int("train.epochs", c.train.epochs));
    c.train.lr = f.get_number("train.lr", c.train.lr);
    c.train.batch = static_cast<std::size_t>(f.get_int("train.batch", static_cast<long>(c.train.batch)));

    c.spike.theta = f.get_number("spike.theta", c.spike.theta);
    c.spike.alpha = f.get_number("spike.alpha", c.spike.alpha);
    c.spike.exponent_mode = f.get_int("spike.exponent_mode", c.spike.exponent_mode ? 1 : 0) != 0;

    c.trigger.steps = static_cast<int>(f.get_int("trigger.steps", c.trigger.steps));
    c.trigger.lr = f.get_number("trigger.lr", c.trigger.lr);
    c.trigger.scale = static_cast<int>(f.get_int("trigger.scale", c.trigger.scale));
    c.trigger.lambda = f.get_number("trigger.lambda", c.trigger.lambda);
    c.trigger.lambda_l2 = f.get_number("trigger.lambda_l2", c.trigger.lambda_l2);
    c.trigger.epsilon = f.get_number("trigger.epsilon", c.trigger.epsilon);
    c.trigger.tau = f.get_number("trigger.tau", c.trigger.tau);
    c.trigger.batch = static_cast<std::size_t>(f.get_int("trigger.batch", static_cast<long>(c.trigger.batch)));
    c.trigger.source_budget =
        static_cast<std::size_t>(f.get_int("trigger.source_budget", static_cast<long>(c.trigger.source_budget)));
    c.trigger.cav_iterations = static_cast<int>(f.get_int("trigger.cav_iterations", c.trigger.cav_iterations));

    c.defense.cda_budget = f.get_number("defense.cda_budget", c.defense.cda_budget);
    c.defense.finetune_epochs = static_cast<int>(f.get_int("defense.finetune_epochs", c.defense.finetune_epochs));
    c.defense.finetune_lr = f.get_number("defense.finetune_lr", c.defense.finetune_lr);
    c.defense.noise_repeats = static_cast<int>(f.get_int("defense.noise_repeats", c.defense.noise_repeats));
    c.defense.noise_points = static_cast<int>(f.get_int("defense.noise_points", c.defense.noise_points));
    c.defense.nc_l1_weight = f.get_number("defense.nc_l1_weight", c.defense.nc_l1_weight);
    c.defense.nc_steps = static_cast<int>(f.get_int("defense.nc_steps", c.defense.nc_steps));
    c.defense.nc_threshold = f.get_number("defense.nc_threshold", c.defense.nc_threshold);
    c.defense.nc_lr = f.get_number("defense.nc_lr", c.defense.nc_lr);
    c.defense.nc_batch = static_cast<std::size_t>(f.get_int("defense.nc_batch", static_cast<long>(c.defense.nc_batch)));
    c.defense.nc_probe = static_cast<std::size_t>(f.get_int("defense.nc_probe", static_cast<long>(c.defense.nc_probe)));

    c.toy.d = static_cast<std::size_t>(f.get_int("toy.d", static_cast<long>(c.toy.d)));
    c.toy.m = static_cast<std::size_t>(f.get_int("toy.m", static_cast<long>(c.toy.m)));
    c.toy.theta = f.get_number("toy.theta", c.toy.theta);
    c.toy.offset = f.get_number("toy.offset", c.toy.offset);
    c.toy.variance = f.get_number("toy.variance", c.toy.variance);
    c.toy.alpha = f.get_number("toy.alpha", c.toy.alpha);
    c.toy.train_per_class =
        static_cast<std::size_t>(f.get_int("toy.train_per_class", static_cast<long>(c.toy.train_per_class)));
    c.toy.eval_per_class =
        static_cast<std::size_t>(f.get_int("toy.eval_per_class", static_cast<long>(c.toy.eval_per_class)));
    c.toy.lambda_grid = f.get_list("toy.lambda_grid", c.toy.lambda_grid);
    c.toy.pca_theta = f.get_number("toy.pca_theta", c.toy.pca_theta);
    c.toy.pca_lambda = f.get_number("toy.pca_lambda", c.toy.pca_lambda);

    c.analysis.mmd_lambda_grid = f.get_list("analysis.mmd_lambda_grid", c.analysis.mmd_lambda_grid);
    c.analysis.mmd_samples =
        static_cast<std::size_t>(f.get_int("analysis.mmd_samples", static_cast<long>(c.analysis.mmd_samples)));
    c.analysis.detector_trials =
        static_cast<std::size_t>(f.get_int("analysis.detector_trials", static_cast<long>(c.analysis.detector_trials)));
    c.analysis.detector_theta = f.get_number("analysis.detector_theta", c.analysis.detector_theta);
    c.analysis.detector_m =
        static_cast<std::size_t>(f.get_int("analysis.detector_m", static_cast<long>(c.analysis.detector_m)));
    c.analysis.detector_d =
        static_cast<std::size_t>(f.get_int("analysis.detector_d", static_cast<long>(c.analysis.detector_d)));
    c.analysis.spectrum_p =
        static_cast<std::size_t>(f.get_int("analysis.spectrum_p", static_cast<long>(c.analysis.spectrum_p)));
    c.analysis.spectrum_n =
        static_cast<std::size_t>(f.get_int("analysis.spectrum_n", static_cast<long>(c.analysis.spectrum_n)));
    c.analysis.hist_bins =
        static_cast<std::size_t>(f.get_int("analysis.hist_bins", static_cast<long>(c.analysis.hist_bins)));
    c.analysis.contour_theta = f.get_number("analysis.contour_theta", c.analysis.contour_theta);

    c.source = static_cast<int>(f.get_int("attack.source", c.source));
    c.target = static_cast<int>(f.get_int("attack.target", c.target));
    if (f.has("experiment.seeds")) {
        c.seeds.clear();
        for (double v : f.get_list("experiment.seeds", {}))
            c.seeds.push_back(static_cast<std::uint64_t>(v));
    }
    c.config_hash = f.canonical_hash();
    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    if (source == target) throw ConfigError("attack.source must differ from attack.target");
    if (seeds.empty()) throw ConfigError("experiment.seeds must be non-empty");
    if (dataset.kind != "shapes" && dataset.kind != "blobs" && dataset.kind != "sbl1")
        throw ConfigError("dataset.kind must be shapes | blobs | sbl1");
    if (dataset.kind == "sbl1") {
        if (dataset.path.empty()) throw ConfigError("dataset.path required for dataset.kind = sbl1");
        if (!std::filesystem::exists(dataset.path))
            throw ConfigError("dataset.path does not exist: " + dataset.path);
    }
    if (dataset.kind != "sbl1" && dataset.classes < 2) throw ConfigError("dataset.classes must be >= 2");
    if (source < 0 || target < 0) throw ConfigError("attack classes must be >= 0");
    if (dataset.kind != "sbl1" && (source >= dataset.classes || target >= dataset.classes))
        throw ConfigError("attack classes must be < dataset.classes");
    if (dataset.split.size() != 3) throw ConfigError("dataset.split must have three fractions");
    if (model.kind != "cnn" && model.kind != "mlp") throw ConfigError("model.kind must be cnn | mlp");
    if (train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (spike.theta < 0 || spike.alpha <= 0 || spike.alpha > 1)
        throw ConfigError("spike.theta must be >= 0 and spike.alpha in (0, 1]");
    if (trigger.steps < 1 || trigger.scale < 1) throw ConfigError("trigger.steps and trigger.scale must be >= 1");
    if (trigger.epsilon <= 0 || trigger.tau < 0) throw ConfigError("trigger.epsilon must be > 0, trigger.tau >= 0");
    if (defense.cda_budget <= 0 || defense.cda_budget >= 1)
        throw ConfigError("defense.cda_budget must be inside (0, 1)");
    if (toy.d < 1 || toy.m < 1) throw ConfigError("toy.d and toy.m must be >= 1");
}

}  // namespace spikelab
