#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "demp/config.hpp"
#include "demp/data.hpp"
#include "demp/engine.hpp"

namespace demp {

struct RunOutcome {
    std::string run_dir;
    bool aborted = false;
    TrainResult result;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline Dataset build_dataset(const DataConfig& dc, std::uint64_t seed) {
    Dataset ds;
    if (dc.dataset == "idx") {
        ds = load_idx(dc.images, dc.labels);
    } else {
        ds = synth_blobs(dc.classes, dc.per_class, dc.dim, dc.separation, seed);
    }
    if (dc.subset > 0 && dc.subset < ds.size()) ds = subset(ds, dc.subset, seed);
    return ds;
}

/// Splits off the last `eval_count` examples of a seeded shuffle.
inline std::pair<Dataset, Dataset> split_eval(const Dataset& ds, std::uint64_t eval_count,
                                              std::uint64_t seed) {
    if (eval_count == 0 || eval_count >= ds.size()) return {ds, Dataset{}};
    Dataset shuffled = subset(ds, ds.size(), seed ^ 0xe7a1ULL);  // full-set permutation
    std::vector<std::size_t> train_idx(ds.size() - eval_count), eval_idx(eval_count);
    std::iota(train_idx.begin(), train_idx.end(), 0);
    std::iota(eval_idx.begin(), eval_idx.end(), ds.size() - eval_count);
    auto take = [&](const std::vector<std::size_t>& idx) {
        Dataset out;
        auto [x, y] = gather_batch(shuffled, idx);
        out.inputs = std::move(x);
        out.labels = std::move(y);
        out.name = shuffled.name;
        return out;
    };
    return {take(train_idx), take(eval_idx)};
}

}  // namespace detail

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                              std::uint64_t hash, std::uint64_t seed, std::size_t n_layers) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    char head[64];
    std::snprintf(head, sizeof head, "# config_hash=%016" PRIx64 " seed=%" PRIu64, hash, seed);
    os << head << "\n";
    os << "step,train_loss,eval_accuracy,neuron_sparsity,weight_sparsity,flops_estimate,"
          "lambda_t,sigma2_t";
    for (std::size_t i = 0; i < n_layers; ++i) os << ",dead_count_layer_" << i;
    os << "\n";
    for (const auto& r : rows) {
        os << r.step << ',' << detail::fmt_double(r.train_loss) << ','
           << (r.eval_accuracy ? detail::fmt_double(*r.eval_accuracy) : "") << ','
           << detail::fmt_double(r.neuron_sparsity) << ',' << detail::fmt_double(r.weight_sparsity)
           << ',' << detail::fmt_double(r.flops_estimate) << ',' << detail::fmt_double(r.lambda_t)
           << ',' << detail::fmt_double(r.sigma2_t);
        for (std::size_t i = 0; i < n_layers; ++i)
            os << ',' << (i < r.dead_per_layer.size() ? r.dead_per_layer[i] : 0);
        os << "\n";
    }
}

/// One fully seeded training run; writes metrics.csv and summary.json.
inline RunOutcome run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                                 const std::string& out_root, bool quiet = true) {
    namespace fs = std::filesystem;
    const std::uint64_t hash = config_hash(cfg);
    char run_id[64];
    std::snprintf(run_id, sizeof run_id, "%016" PRIx64 "-seed%" PRIu64, hash, seed);
    const fs::path dir = fs::path(out_root) / run_id;
    fs::create_directories(dir);

    Dataset all = detail::build_dataset(cfg.data, seed);
    auto [train_ds, eval_ds] = detail::split_eval(all, cfg.data.eval_count, seed);

    Rng init_rng = substream(seed, 0x1417ULL);
    Network net = make_mlp(cfg.model.input, cfg.model.hidden, cfg.model.output,
                           cfg.model.activation, cfg.model.activation_param,
                           cfg.model.batchnorm, init_rng);
    OptimizerState opt(cfg.optimizer, net);

    TrainOptions opts;
    opts.steps = cfg.run.steps;
    opts.batch_size = cfg.data.batch_size;
    opts.lr = cfg.lr;
    opts.seed = seed;
    opts.metrics_every = cfg.run.metrics_every;
    opts.eval_every = cfg.run.eval_every;
    opts.weight_decay = cfg.weight_decay;
    opts.decoupled_wd = cfg.decoupled_wd;
    opts.eval_data = eval_ds.size() ? &eval_ds : nullptr;

    Rng noise_rng = substream(seed, 0x401eULL);
    RunOutcome outcome;
    outcome.result = train_demp(net, train_ds, opt, cfg.demp, opts, noise_rng);
    outcome.aborted = outcome.result.aborted;
    outcome.run_dir = dir.string();

    const std::size_t n_prunable = prunable_layers(net).size();
    write_metrics_csv((dir / "metrics.csv").string(), outcome.result.metrics, hash, seed,
                      n_prunable);

    nlohmann::json summary;
    char hash_str[24];
    std::snprintf(hash_str, sizeof hash_str, "%016" PRIx64, hash);
    summary["config_hash"] = hash_str;
    summary["seed"] = seed;
    summary["aborted"] = outcome.aborted;
    summary["config"] = cfg.echo;
    if (!outcome.result.metrics.empty()) {
        const auto& last = outcome.result.metrics.back();
        summary["final"]["step"] = last.step;
        summary["final"]["train_loss"] = last.train_loss;
        summary["final"]["neuron_sparsity"] = last.neuron_sparsity;
        summary["final"]["weight_sparsity"] = last.weight_sparsity;
        summary["final"]["flops_estimate"] = last.flops_estimate;
        summary["final"]["dead_count_per_layer"] = last.dead_per_layer;
    }
    if (outcome.result.final_eval_accuracy)
        summary["final"]["eval_accuracy"] = *outcome.result.final_eval_accuracy;
    {
        std::vector<double> trace;
        for (double v : outcome.result.overlap_trace)
            trace.push_back(std::isnan(v) ? -1.0 : v);  // JSON has no NaN
        summary["overlap_ratio_trace"] = trace;
    }
    summary["prune_events"] = nlohmann::json::array();
    for (const auto& pr : outcome.result.prune_reports) {
        nlohmann::json e;
        e["step"] = pr.step;
        e["removed_per_layer"] = pr.removed_per_layer;
        e["kept_flagged_per_layer"] = pr.kept_flagged_per_layer;
        e["params_after"] = pr.params_after;
        summary["prune_events"].push_back(e);
    }
    std::ofstream js((dir / "summary.json").string());
    js << summary.dump(2) << "\n";

    if (!quiet)
        std::fprintf(stderr, "run %s: %s\n", run_id, outcome.aborted ? "ABORTED" : "done");
    return outcome;
}

}  // namespace demp
