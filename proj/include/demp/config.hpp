#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "demp/engine.hpp"
#include "demp/network.hpp"
#include "demp/optim.hpp"
#include "demp/schedule.hpp"

namespace demp {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --------------------------------------------------------------- INI parser

/// Sections of key=value pairs; '#' and ';' start comments. Line numbers are
/// kept for error messages.
struct IniFile {
    struct Entry {
        std::string value;
        int line = 0;
        mutable bool used = false;
    };
    std::map<std::string, std::map<std::string, Entry>> sections;

    static IniFile parse_text(const std::string& text, const std::string& origin) {
        IniFile ini;
        std::istringstream is(text);
        std::string line, section;
        int lineno = 0;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find_first_of("#;");
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                ini.sections[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside any [section]");
            if (ini.sections[section].count(key))
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            ini.sections[section][key] = Entry{value, lineno, false};
        }
        return ini;
    }

    static IniFile parse_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file " + path);
        std::stringstream ss;
        ss << is.rdbuf();
        return parse_text(ss.str(), path);
    }
};

namespace detail {

class SectionReader {
public:
    SectionReader(const IniFile& ini, std::string section, std::string origin)
        : ini_(ini), section_(std::move(section)), origin_(std::move(origin)) {}

    bool has(const std::string& key) const {
        auto s = ini_.sections.find(section_);
        return s != ini_.sections.end() && s->second.count(key);
    }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto s = ini_.sections.find(section_);
        if (s == ini_.sections.end()) return fallback;
        auto e = s->second.find(key);
        if (e == s->second.end()) return fallback;
        e->second.used = true;
        return e->second.value;
    }

    std::string require(const std::string& key) const {
        if (!has(key))
            throw ConfigError(origin_ + ": missing required key '" + key + "' in [" + section_ + "]");
        return get(key, "");
    }

    double get_double(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        return parse_double(key, get(key, ""));
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        return parse_u64(key, get(key, ""));
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = get(key, "");
        if (v == "true" || v == "on" || v == "1") return true;
        if (v == "false" || v == "off" || v == "0") return false;
        throw err(key, "expected true/false");
    }

    std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                            std::vector<std::uint64_t> fallback) const {
        if (!has(key)) return fallback;
        std::vector<std::uint64_t> out;
        std::istringstream is(get(key, ""));
        std::string tok;
        while (std::getline(is, tok, ',')) out.push_back(parse_u64(key, tok));
        if (out.empty()) throw err(key, "expected a comma-separated list");
        return out;
    }

    double parse_double(const std::string& key, const std::string& v) const {
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            while (pos < v.size() && std::isspace(static_cast<unsigned char>(v[pos]))) ++pos;
            if (pos != v.size()) throw std::invalid_argument("");
            return d;
        } catch (...) {
            throw err(key, "not a number: '" + v + "'");
        }
    }

    std::uint64_t parse_u64(const std::string& key, const std::string& v) const {
        try {
            std::size_t pos = 0;
            const long long d = std::stoll(v, &pos);
            while (pos < v.size() && std::isspace(static_cast<unsigned char>(v[pos]))) ++pos;
            if (pos != v.size() || d < 0) throw std::invalid_argument("");
            return static_cast<std::uint64_t>(d);
        } catch (...) {
            throw err(key, "not a non-negative integer: '" + v + "'");
        }
    }

    ConfigError err(const std::string& key, const std::string& msg) const {
        int line = 0;
        auto s = ini_.sections.find(section_);
        if (s != ini_.sections.end()) {
            auto e = s->second.find(key);
            if (e != s->second.end()) line = e->second.line;
        }
        return ConfigError(origin_ + ":" + std::to_string(line) + ": [" + section_ + "] " + key +
                           ": " + msg);
    }

private:
    const IniFile& ini_;
    std::string section_;
    std::string origin_;
};

template <typename Map>
inline std::string pick_enum(const SectionReader& r, const std::string& key,
                             const std::string& fallback, const Map& allowed) {
    const std::string v = r.get(key, fallback);
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
        std::string opts;
        for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
        throw r.err(key, "must be one of " + opts);
    }
    return v;
}

}  // namespace detail

// --------------------------------------------------------- typed experiment

struct ModelConfig {
    std::size_t input = 0;
    std::vector<std::size_t> hidden;
    std::size_t output = 0;
    ActKind activation = ActKind::ReLU;
    double activation_param = 0.0;
    bool batchnorm = true;
};

struct DataConfig {
    std::string dataset;  // "blobs" or "idx"
    std::string images, labels;
    std::uint64_t subset = 0;  // 0 = use everything
    std::size_t batch_size = 128;
    std::uint64_t eval_count = 0;
    // blobs
    int classes = 10;
    std::uint64_t per_class = 1000;
    std::size_t dim = 784;
    double separation = 6.0;
};

struct RunConfig {
    std::uint64_t steps = 1000;
    std::uint64_t metrics_every = 100;
    std::uint64_t eval_every = 0;
    std::vector<std::uint64_t> seeds{0};
    std::string out;
};

struct ExperimentConfig {
    ModelConfig model;
    OptimizerConfig optimizer;
    double lr = 0.05;
    double weight_decay = 0.0;
    bool decoupled_wd = false;
    DempConfig demp;
    DataConfig data;
    RunConfig run;
    std::map<std::string, std::map<std::string, std::string>> echo;  // verbatim config
};

inline ExperimentConfig parse_experiment_config(const IniFile& ini, const std::string& origin) {
    using detail::SectionReader;
    static const std::vector<std::string> known_sections = {"model", "optimizer", "demp", "data", "run"};
    for (const auto& [name, _] : ini.sections)
        if (std::find(known_sections.begin(), known_sections.end(), name) == known_sections.end())
            throw ConfigError(origin + ": unknown section [" + name + "]");

    ExperimentConfig cfg;

    SectionReader model(ini, "model", origin);
    cfg.model.input = model.parse_u64("input", model.require("input"));
    {
        std::istringstream is(model.require("hidden"));
        std::string tok;
        while (std::getline(is, tok, ','))
            cfg.model.hidden.push_back(model.parse_u64("hidden", tok));
        if (cfg.model.hidden.empty()) throw model.err("hidden", "expected at least one width");
    }
    cfg.model.output = model.parse_u64("output", model.require("output"));
    {
        static const std::vector<std::string> kinds = {"relu", "leaky_relu", "swish", "gelu", "identity"};
        const std::string a = detail::pick_enum(model, "activation", "relu", kinds);
        cfg.model.activation = a == "relu"         ? ActKind::ReLU
                               : a == "leaky_relu" ? ActKind::LeakyReLU
                               : a == "swish"      ? ActKind::Swish
                               : a == "gelu"       ? ActKind::GeLU
                                                   : ActKind::Identity;
        const double def = cfg.model.activation == ActKind::LeakyReLU ? 0.05
                           : cfg.model.activation == ActKind::Swish   ? 1.0
                                                                      : 0.0;
        cfg.model.activation_param = model.get_double("activation_param", def);
    }
    cfg.model.batchnorm = model.get_bool("batchnorm", true);

    SectionReader opt(ini, "optimizer", origin);
    {
        static const std::vector<std::string> kinds = {"sgd", "sgdm", "adam"};
        const std::string k = detail::pick_enum(opt, "kind", "sgd", kinds);
        cfg.optimizer.kind = k == "sgd" ? OptKind::SGD : k == "sgdm" ? OptKind::SGDM : OptKind::Adam;
    }
    cfg.lr = opt.get_double("lr", 0.05);
    if (cfg.lr <= 0.0) throw opt.err("lr", "must be > 0");
    cfg.optimizer.momentum = opt.get_double("momentum", 0.9);
    cfg.optimizer.beta1 = opt.get_double("beta1", 0.9);
    cfg.optimizer.beta2 = opt.get_double("beta2", 0.999);
    cfg.optimizer.eps_adam = opt.get_double("eps_adam", 1e-8);
    cfg.weight_decay = opt.get_double("weight_decay", 0.0);
    cfg.decoupled_wd = opt.get_bool("decoupled", false);

    SectionReader demp(ini, "demp", origin);
    SectionReader run(ini, "run", origin);
    cfg.run.steps = run.get_u64("steps", 1000);
    cfg.run.metrics_every = run.get_u64("metrics_every", 100);
    cfg.run.eval_every = run.get_u64("eval_every", 0);
    cfg.run.seeds = run.get_u64_list("seeds", {0});
    cfg.run.out = run.get("out", "");
    {
        auto sched_kind = [&](const std::string& key, const std::string& fallback) {
            static const std::vector<std::string> kinds = {"onecycle", "constant", "warmup", "decay"};
            const std::string k = detail::pick_enum(demp, key, fallback, kinds);
            return k == "onecycle" ? ScheduleKind::OneCycle
                   : k == "constant" ? ScheduleKind::Constant
                   : k == "warmup"   ? ScheduleKind::WarmupOnly
                                     : ScheduleKind::DecayOnly;
        };
        const double rho = demp.get_double("warmup_fraction", 0.1);
        cfg.demp.lambda_schedule = ScheduleSpec(sched_kind("lambda_kind", "onecycle"),
                                                demp.get_double("lambda_peak", 0.0),
                                                cfg.run.steps, rho);
        cfg.demp.sigma2_schedule = ScheduleSpec(sched_kind("sigma2_kind", "onecycle"),
                                                demp.get_double("sigma2_peak", 5e-5),
                                                cfg.run.steps, rho);
    }
    cfg.demp.prune_period = demp.get_u64("prune_period", 5000);
    cfg.demp.death_threshold = demp.get_double("death_threshold", 0.01);
    cfg.demp.probe_size = demp.get_u64("probe_size", 512);
    {
        static const std::vector<std::string> crits = {"zero_output", "eps_inactive", "negative_preact"};
        const std::string c = detail::pick_enum(demp, "criterion", "zero_output", crits);
        cfg.demp.criterion = c == "zero_output"    ? DeathCriterion::ZeroOutput
                             : c == "eps_inactive" ? DeathCriterion::EpsInactive
                                                   : DeathCriterion::NegativePreact;
        static const std::vector<std::string> regs = {"lasso_scale", "l2_scale", "lasso_all", "l2_all"};
        const std::string r = detail::pick_enum(demp, "regularizer", "lasso_scale", regs);
        cfg.demp.regularizer = r == "lasso_scale" ? Regularizer::LassoScale
                               : r == "l2_scale"  ? Regularizer::L2Scale
                               : r == "lasso_all" ? Regularizer::LassoAll
                                                  : Regularizer::L2All;
        static const std::vector<std::string> noise = {"asymmetric", "symmetric", "off"};
        const std::string n = detail::pick_enum(demp, "noise_mode", "asymmetric", noise);
        cfg.demp.noise_mode = n == "asymmetric"  ? NoiseMode::Asymmetric
                              : n == "symmetric" ? NoiseMode::Symmetric
                                                 : NoiseMode::Off;
    }
    cfg.demp.dynamic_pruning = demp.get_bool("dynamic_pruning", true);
    cfg.demp.validate();

    SectionReader data(ini, "data", origin);
    {
        static const std::vector<std::string> kinds = {"blobs", "idx"};
        cfg.data.dataset = detail::pick_enum(data, "dataset", "blobs", kinds);
    }
    cfg.data.images = data.get("images", "");
    cfg.data.labels = data.get("labels", "");
    if (cfg.data.dataset == "idx" && (cfg.data.images.empty() || cfg.data.labels.empty()))
        throw ConfigError(origin + ": [data] dataset=idx requires images= and labels=");
    cfg.data.subset = data.get_u64("subset", 0);
    cfg.data.batch_size = data.get_u64("batch_size", 128);
    if (cfg.data.batch_size < 2)
        throw data.err("batch_size", "must be >= 2");
    cfg.data.eval_count = data.get_u64("eval_count", 0);
    cfg.data.classes = static_cast<int>(data.get_u64("classes", 10));
    cfg.data.per_class = data.get_u64("per_class", 1000);
    cfg.data.dim = data.get_u64("dim", 784);
    cfg.data.separation = data.get_double("separation", 6.0);
    if (cfg.data.dataset == "blobs" && cfg.data.dim != cfg.model.input)
        throw ConfigError(origin + ": [data] dim must equal [model] input for blobs");

    // unknown keys are rejected
    for (const auto& [sname, entries] : ini.sections)
        for (const auto& [key, entry] : entries)
            if (!entry.used)
                throw ConfigError(origin + ":" + std::to_string(entry.line) + ": unknown key '" +
                                  key + "' in [" + sname + "]");

    for (const auto& [sname, entries] : ini.sections) {
        auto& dst = cfg.echo[sname];
        for (const auto& [key, entry] : entries) dst[key] = entry.value;
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(IniFile::parse_file(path), path);
}

/// FNV-1a over the canonical (sorted) section/key/value serialization.
inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [sname, entries] : cfg.echo) {
        feed("[" + sname + "]");
        for (const auto& [key, value] : entries) feed(key + "=" + value + "\n");
    }
    return h;
}

}  // namespace demp
