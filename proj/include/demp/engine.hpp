#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "demp/data.hpp"
#include "demp/loss.hpp"
#include "demp/network.hpp"
#include "demp/optim.hpp"
#include "demp/schedule.hpp"

namespace demp {

enum class DeathCriterion { ZeroOutput, EpsInactive, NegativePreact };
enum class Regularizer { LassoScale, L2Scale, LassoAll, L2All };
enum class NoiseMode { Asymmetric, Symmetric, Off };

struct DempConfig {
    ScheduleSpec lambda_schedule;
    ScheduleSpec sigma2_schedule;
    std::uint64_t prune_period = 5000;
    double death_threshold = 0.01;
    std::size_t probe_size = 512;
    DeathCriterion criterion = DeathCriterion::ZeroOutput;
    Regularizer regularizer = Regularizer::LassoScale;
    NoiseMode noise_mode = NoiseMode::Asymmetric;
    bool dynamic_pruning = true;

    void validate() const {
        if (prune_period < 1) throw std::invalid_argument("demp: prune_period must be >= 1");
        if (death_threshold <= 0.0) throw std::invalid_argument("demp: death_threshold must be > 0");
        if (probe_size < 1) throw std::invalid_argument("demp: probe_size must be >= 1");
    }
};

// ---------------------------------------------------------------- liveness

/// Per-parametric-layer liveness masks, keyed to stable original unit ids so
/// dead-set checkpoints stay comparable across structural pruning.
struct LivenessState {
    struct LayerState {
        std::size_t layer_index = 0;       // index into Network::layers
        std::vector<char> live;            // false = flagged inactive
        std::vector<int> orig_id;          // id at step 0, stable under pruning
        std::vector<double> probe_stat;    // criterion statistic from the last probe
        bool prunable = false;
    };

    std::vector<LayerState> layers;                 // one per parametric layer
    std::vector<std::set<long>> checkpoints;        // dead-unit id sets per liveness refresh
    std::set<long> ever_inactive;

    static LivenessState init(const Network& net) {
        LivenessState s;
        const auto prunable = prunable_layers(net);
        for (auto li : parametric_layers(net)) {
            LayerState ls;
            ls.layer_index = li;
            const std::size_t w = layer_units(net.layers[li]);
            ls.live.assign(w, 1);
            ls.orig_id.resize(w);
            for (std::size_t u = 0; u < w; ++u) ls.orig_id[u] = static_cast<int>(u);
            ls.probe_stat.assign(w, 0.0);
            ls.prunable = std::find(prunable.begin(), prunable.end(), li) != prunable.end();
            s.layers.push_back(std::move(ls));
        }
        return s;
    }

    static long global_id(std::size_t layer_pos, int orig_id) {
        return static_cast<long>(layer_pos) * 1000000L + orig_id;
    }

    std::size_t inactive_count() const {
        std::size_t n = 0;
        for (const auto& ls : layers)
            for (char c : ls.live) n += c ? 0 : 1;
        return n;
    }
};

namespace detail {

/// For parametric layer `li`, finds the activation layer observed for
/// liveness probing (the first activation before the next parametric layer).
inline std::optional<std::size_t> observed_activation(const Network& net, std::size_t li) {
    for (std::size_t j = li + 1; j < net.layers.size(); ++j) {
        if (is_parametric(net.layers[j])) return std::nullopt;
        if (std::holds_alternative<ActivationLayer>(net.layers[j])) return j;
    }
    return std::nullopt;
}

/// Per-unit max of |value| (post) and raw value (pre) over one tensor.
inline void accumulate_unit_stats(const Tensor& t, std::vector<double>& max_abs,
                                  std::vector<double>& max_raw) {
    const std::size_t ch = t.ndim() == 2 ? t.dim(1) : t.dim(1);
    for (std::size_t q = 0; q < ch; ++q)
        for_each_channel_elem(t, q, [&](std::size_t idx) {
            max_abs[q] = std::max(max_abs[q], std::abs(t[idx]));
            max_raw[q] = std::max(max_raw[q], t[idx]);
        });
}

}  // namespace detail

/// Probes the network on fixed batches and returns, per prunable parametric
/// layer, the set of units currently inactive under the configured criterion.
/// Updates the liveness probe statistics in place (masks are not changed).
inline std::vector<std::set<std::size_t>> detect_inactive(
    Network& net, LivenessState& liveness,
    const std::vector<Tensor>& probe_batches, const DempConfig& cfg) {
    if (probe_batches.empty()) throw std::invalid_argument("detect_inactive: empty probe set");

    std::vector<std::vector<double>> max_abs(liveness.layers.size());
    std::vector<std::vector<double>> max_raw(liveness.layers.size());
    for (std::size_t p = 0; p < liveness.layers.size(); ++p) {
        const std::size_t w = liveness.layers[p].live.size();
        max_abs[p].assign(w, 0.0);
        max_raw[p].assign(w, -std::numeric_limits<double>::infinity());
    }

    for (const auto& batch : probe_batches) {
        ForwardTrace trace;
        forward(net, batch, Mode::Eval, &trace);
        for (std::size_t p = 0; p < liveness.layers.size(); ++p) {
            auto& ls = liveness.layers[p];
            if (!ls.prunable) continue;
            const auto act = detail::observed_activation(net, ls.layer_index);
            if (cfg.criterion == DeathCriterion::NegativePreact) {
                // pre-activation = input of the activation layer
                const std::size_t src = act ? *act - 1 : ls.layer_index;
                detail::accumulate_unit_stats(trace.outputs[src], max_abs[p], max_raw[p]);
            } else {
                const std::size_t src = act ? *act : ls.layer_index;
                detail::accumulate_unit_stats(trace.outputs[src], max_abs[p], max_raw[p]);
            }
        }
    }

    std::vector<std::set<std::size_t>> inactive(liveness.layers.size());
    for (std::size_t p = 0; p < liveness.layers.size(); ++p) {
        auto& ls = liveness.layers[p];
        if (!ls.prunable) continue;
        for (std::size_t u = 0; u < ls.live.size(); ++u) {
            bool dead = false;
            switch (cfg.criterion) {
                case DeathCriterion::ZeroOutput:
                    ls.probe_stat[u] = max_abs[p][u];
                    dead = max_abs[p][u] == 0.0;
                    break;
                case DeathCriterion::EpsInactive:
                    ls.probe_stat[u] = max_abs[p][u];
                    dead = max_abs[p][u] < cfg.death_threshold;
                    break;
                case DeathCriterion::NegativePreact:
                    ls.probe_stat[u] = max_raw[p][u];
                    dead = max_raw[p][u] < 0.0;
                    break;
            }
            if (dead) inactive[p].insert(u);
        }
    }
    return inactive;
}

// ----------------------------------------------------------- regularization

/// Gradient of the scheduled regularizer. Lasso uses sign(x) with
/// sign(0) = 0; offsets (biases, BN beta) are never regularized.
inline GradientSet reg_gradient(Network& net, double lambda_t, Regularizer reg) {
    if (lambda_t < 0.0) throw std::invalid_argument("reg_gradient: lambda must be >= 0");
    GradientSet g = zero_gradients(net);
    if (lambda_t == 0.0) return g;
    const bool all = reg == Regularizer::LassoAll || reg == Regularizer::L2All;
    const bool lasso = reg == Regularizer::LassoScale || reg == Regularizer::LassoAll;
    auto params = trainable_params(net);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const bool is_bn = std::holds_alternative<BatchNormLayer>(net.layers[li]);
        if (!is_bn && !(all && is_parametric(net.layers[li]))) continue;
        // slot 0 is the weight matrix / kernel / gamma; slot 1 (bias/beta) stays zero
        const Tensor& w = *params[li][0];
        Tensor& dst = g[li][0];
        for (std::size_t k = 0; k < w.size(); ++k)
            dst[k] = lasso ? lambda_t * (w[k] > 0.0 ? 1.0 : (w[k] < 0.0 ? -1.0 : 0.0))
                           : 2.0 * lambda_t * w[k];
    }
    return g;
}

/// In-place variant used by the training loop.
inline void add_reg_gradient(Network& net, GradientSet& grads, double lambda_t, Regularizer reg) {
    if (lambda_t == 0.0) return;
    const GradientSet r = reg_gradient(net, lambda_t, reg);
    for (std::size_t li = 0; li < grads.size(); ++li)
        for (std::size_t s = 0; s < grads[li].size(); ++s)
            for (std::size_t k = 0; k < grads[li][s].size(); ++k)
                grads[li][s][k] += r[li][s][k];
}

// ------------------------------------------------------------------- noise

/// Gaussian parameter perturbation applied after the optimizer update.
/// Asymmetric mode touches only the parameter slices (incoming weights,
/// bias, BN gamma/beta) of currently live units.
inline void inject_noise(Network& net, const LivenessState& liveness, double sigma2_t,
                         NoiseMode mode, Rng& rng) {
    if (sigma2_t < 0.0) throw std::invalid_argument("inject_noise: variance must be >= 0");
    if (mode == NoiseMode::Off || sigma2_t == 0.0) return;
    std::normal_distribution<double> noise(0.0, std::sqrt(sigma2_t));
    const bool all = mode == NoiseMode::Symmetric;
    for (const auto& ls : liveness.layers) {
        auto add_unit_noise = [&](Tensor& w, Tensor& b, std::size_t row) {
            double* wr = w.data() + row * (w.size() / w.dim(0));
            const std::size_t rl = w.size() / w.dim(0);
            for (std::size_t k = 0; k < rl; ++k) wr[k] += noise(rng);
            b[row] += noise(rng);
        };
        if (auto* d = std::get_if<DenseLayer>(&net.layers[ls.layer_index])) {
            for (std::size_t u = 0; u < ls.live.size(); ++u)
                if (all || ls.live[u]) add_unit_noise(d->w, d->b, u);
        } else {
            auto& c = std::get<Conv2DLayer>(net.layers[ls.layer_index]);
            for (std::size_t u = 0; u < ls.live.size(); ++u)
                if (all || ls.live[u]) add_unit_noise(c.w, c.b, u);
        }
        for (std::size_t j = ls.layer_index + 1; j < net.layers.size(); ++j) {
            if (is_parametric(net.layers[j])) break;
            if (auto* bn = std::get_if<BatchNormLayer>(&net.layers[j])) {
                for (std::size_t u = 0; u < ls.live.size(); ++u)
                    if (all || ls.live[u]) {
                        bn->gamma[u] += noise(rng);
                        bn->beta[u] += noise(rng);
                    }
            }
        }
    }
}

// ----------------------------------------------------------------- pruning

struct PruneReport {
    std::uint64_t step = 0;
    std::vector<std::size_t> removed_per_layer;       // per parametric layer
    std::vector<std::size_t> kept_flagged_per_layer;  // floor rule survivors
    std::size_t params_after = 0;
    bool floor_hit = false;
};

/// Removes every unit currently flagged inactive, shrinking the optimizer
/// buffers in lockstep; each layer keeps at least one unit.
inline PruneReport prune_step(Network& net, LivenessState& liveness, OptimizerState& opt) {
    PruneReport report;
    for (auto& ls : liveness.layers) {
        std::size_t removed = 0, kept_flagged = 0;
        if (ls.prunable) {
            std::set<std::size_t> units;
            for (std::size_t u = 0; u < ls.live.size(); ++u)
                if (!ls.live[u]) units.insert(u);
            if (units.size() == ls.live.size() && !units.empty()) {
                // one-unit floor: keep the unit with the largest probe statistic
                std::size_t keep = 0;
                for (std::size_t u = 1; u < ls.live.size(); ++u)
                    if (ls.probe_stat[u] > ls.probe_stat[keep]) keep = u;
                units.erase(keep);
                kept_flagged = 1;
                report.floor_hit = true;
            }
            if (!units.empty()) {
                opt.shrink(net, ls.layer_index, units);
                remove_units(net, ls.layer_index, units);
                removed = units.size();
                std::vector<char> live;
                std::vector<int> ids;
                std::vector<double> stats;
                for (std::size_t u = 0; u < ls.live.size(); ++u) {
                    if (units.count(u)) continue;
                    live.push_back(ls.live[u]);
                    ids.push_back(ls.orig_id[u]);
                    stats.push_back(ls.probe_stat[u]);
                }
                ls.live = std::move(live);
                ls.orig_id = std::move(ids);
                ls.probe_stat = std::move(stats);
            }
        }
        report.removed_per_layer.push_back(removed);
        report.kept_flagged_per_layer.push_back(kept_flagged);
    }
    report.params_after = param_count(net);
    return report;
}

// ----------------------------------------------------------------- metrics

/// Overlap ratio |X ∩ Y| / min(|X|, |Y|) between two unit-id sets.
inline double overlap_ratio(const std::set<long>& x, const std::set<long>& y) {
    if (x.empty() || y.empty())
        throw std::invalid_argument("overlap_ratio: undefined for empty sets");
    std::size_t inter = 0;
    for (long v : x) inter += y.count(v);
    return static_cast<double>(inter) / static_cast<double>(std::min(x.size(), y.size()));
}

/// Dense multiply-accumulate count for one forward pass of a single example.
inline double mac_count(const Network& net, std::vector<std::size_t> input_shape) {
    double macs = 0.0;
    for (const auto& layer : net.layers) {
        if (auto* d = std::get_if<DenseLayer>(&layer)) {
            macs += static_cast<double>(d->w.dim(0)) * static_cast<double>(d->w.dim(1));
            input_shape = {d->w.dim(0)};
        } else if (auto* c = std::get_if<Conv2DLayer>(&layer)) {
            const std::size_t kh = c->w.dim(2), kw = c->w.dim(3);
            const std::size_t oh = (input_shape.at(1) + 2 * c->padding - kh) / c->stride + 1;
            const std::size_t ow = (input_shape.at(2) + 2 * c->padding - kw) / c->stride + 1;
            macs += static_cast<double>(c->w.size()) * static_cast<double>(oh * ow);
            input_shape = {c->w.dim(0), oh, ow};
        }
    }
    return macs;
}

struct SparsityMetrics {
    double neuron_sparsity = 0.0;
    double weight_sparsity = 0.0;
    double flops_estimate = 0.0;
};

/// Sparsity relative to the step-0 architecture. Inactive-but-unpruned units
/// count their removable parameter slice.
inline SparsityMetrics sparsity_metrics(const Network& original, const Network& current,
                                        const LivenessState& liveness,
                                        const std::vector<std::size_t>& input_shape) {
    SparsityMetrics m;
    std::size_t orig_units = 0, cur_units = 0;
    for (auto li : prunable_layers(original)) orig_units += layer_units(original.layers[li]);
    for (auto li : prunable_layers(current)) cur_units += layer_units(current.layers[li]);

    const std::size_t orig_params = param_count(original);
    const std::size_t cur_params = param_count(current);

    std::size_t inactive_units = 0, inactive_params = 0;
    for (const auto& ls : liveness.layers) {
        if (!ls.prunable) continue;
        std::size_t n_inactive = 0;
        for (char c : ls.live) n_inactive += c ? 0 : 1;
        inactive_units += n_inactive;
        if (n_inactive > 0)
            inactive_params += n_inactive * unit_param_footprint(current, ls.layer_index);
    }

    m.neuron_sparsity = orig_units == 0 ? 0.0
                        : static_cast<double>(orig_units - cur_units + inactive_units) /
                              static_cast<double>(orig_units);
    m.weight_sparsity = static_cast<double>(orig_params - cur_params + inactive_params) /
                        static_cast<double>(orig_params);
    m.flops_estimate = mac_count(current, input_shape);
    return m;
}

struct MetricsRow {
    std::uint64_t step = 0;
    double train_loss = 0.0;
    std::optional<double> eval_accuracy;
    double neuron_sparsity = 0.0;
    double weight_sparsity = 0.0;
    double flops_estimate = 0.0;
    double lambda_t = 0.0;
    double sigma2_t = 0.0;
    std::vector<std::size_t> dead_per_layer;  // per prunable layer (removed + inactive)
};

// ----------------------------------------------------------- training loop

struct TrainOptions {
    std::uint64_t steps = 1000;
    std::size_t batch_size = 128;
    double lr = 0.05;
    std::uint64_t seed = 0;
    std::uint64_t metrics_every = 100;
    std::uint64_t eval_every = 0;  // 0: evaluate only at the end (if eval data given)
    double weight_decay = 0.0;
    bool decoupled_wd = false;
    const Dataset* eval_data = nullptr;
};

struct TrainResult {
    std::vector<MetricsRow> metrics;
    LivenessState liveness;
    std::vector<PruneReport> prune_reports;
    std::vector<double> overlap_trace;  // historical-vs-current dead-set overlap per checkpoint
    std::optional<double> final_eval_accuracy;
    bool aborted = false;
};

inline double evaluate_accuracy(Network& net, const Dataset& ds, std::size_t batch_size = 512) {
    std::size_t correct = 0;
    for (std::size_t start = 0; start < ds.size(); start += batch_size) {
        const std::size_t stop = std::min(ds.size(), start + batch_size);
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        auto [x, y] = gather_batch(ds, idx);
        const Tensor logits = forward(net, x, Mode::Eval);
        for (std::size_t i = 0; i < y.size(); ++i)
            if (argmax_row(logits, i) == static_cast<std::size_t>(y[i])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

namespace detail {

inline std::vector<Tensor> make_probe_batches(const Dataset& data, std::size_t probe_size,
                                              std::size_t batch_size, std::uint64_t seed) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = substream(seed, 0x9e0b3ULL);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t total = std::min(probe_size, data.size());
    std::vector<Tensor> batches;
    for (std::size_t start = 0; start < total; start += batch_size) {
        const std::size_t stop = std::min(total, start + batch_size);
        std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
        batches.push_back(gather_batch(data, idx).first);
    }
    return batches;
}

inline std::vector<std::size_t> current_dead_counts(const Network& original,
                                                    const LivenessState& liveness) {
    std::vector<std::size_t> counts;
    auto orig_prunable = prunable_layers(original);
    std::size_t p = 0;
    for (const auto& ls : liveness.layers) {
        if (!ls.prunable) continue;
        const std::size_t orig_w = layer_units(original.layers[orig_prunable[p++]]);
        std::size_t inactive = 0;
        for (char c : ls.live) inactive += c ? 0 : 1;
        counts.push_back(orig_w - ls.live.size() + inactive);
    }
    return counts;
}

inline std::set<long> dead_id_set(const LivenessState& liveness, const Network& original) {
    std::set<long> s;
    auto orig_prunable = prunable_layers(original);
    std::size_t p = 0;
    for (std::size_t l = 0; l < liveness.layers.size(); ++l) {
        const auto& ls = liveness.layers[l];
        if (!ls.prunable) continue;
        // structurally removed units stay dead
        std::set<int> present(ls.orig_id.begin(), ls.orig_id.end());
        const std::size_t orig_w = layer_units(original.layers[orig_prunable[p++]]);
        for (std::size_t u = 0; u < orig_w; ++u)
            if (!present.count(static_cast<int>(u)))
                s.insert(LivenessState::global_id(l, static_cast<int>(u)));
        for (std::size_t u = 0; u < ls.live.size(); ++u)
            if (!ls.live[u]) s.insert(LivenessState::global_id(l, ls.orig_id[u]));
    }
    return s;
}

}  // namespace detail

/// The DemP loop: per step, forward/backward on a minibatch, scheduled
/// regularization gradient, optimizer step, asymmetric noise injection;
/// every prune_period steps liveness is refreshed and dead units removed.
inline TrainResult train_demp(Network& net, const Dataset& data, OptimizerState& opt,
                              const DempConfig& cfg, const TrainOptions& opts, Rng& rng) {
    cfg.validate();
    if (cfg.lambda_schedule.total_steps < opts.steps || cfg.sigma2_schedule.total_steps < opts.steps)
        throw std::invalid_argument("train_demp: schedules must cover the step count");

    const Network original = net;
    const std::vector<std::size_t> ref_shape(net.layers.empty() ? std::vector<std::size_t>{}
                                             : std::vector<std::size_t>(data.inputs.shape().begin() + 1,
                                                                        data.inputs.shape().end()));
    TrainResult res;
    res.liveness = LivenessState::init(net);
    BatchPlan plan{opts.batch_size, opts.seed};
    const auto probe = detail::make_probe_batches(data, cfg.probe_size, opts.batch_size, opts.seed);

    auto refresh_liveness = [&](std::uint64_t /*step*/) {
        const auto inactive = detect_inactive(net, res.liveness, probe, cfg);
        for (std::size_t p = 0; p < res.liveness.layers.size(); ++p) {
            auto& ls = res.liveness.layers[p];
            if (!ls.prunable) continue;
            for (std::size_t u = 0; u < ls.live.size(); ++u) ls.live[u] = inactive[p].count(u) ? 0 : 1;
        }
        const auto dead = detail::dead_id_set(res.liveness, original);
        if (!res.liveness.ever_inactive.empty() && !dead.empty())
            res.overlap_trace.push_back(overlap_ratio(res.liveness.ever_inactive, dead));
        else
            res.overlap_trace.push_back(std::numeric_limits<double>::quiet_NaN());
        res.liveness.ever_inactive.insert(dead.begin(), dead.end());
        res.liveness.checkpoints.push_back(dead);
    };

    for (std::uint64_t t = 0; t < opts.steps; ++t) {
        const double lambda_t = value_at(cfg.lambda_schedule, t);
        const double sigma2_t = value_at(cfg.sigma2_schedule, t);

        auto [x, y] = gather_batch(data, plan.batch_indices(data.size(), t));
        ForwardTrace trace;
        const Tensor logits = forward(net, x, Mode::Train, &trace);
        auto [loss, dlogits] = softmax_cross_entropy(logits, y);

        if (!std::isfinite(loss)) {
            MetricsRow row;
            row.step = t;
            row.train_loss = loss;
            row.lambda_t = lambda_t;
            row.sigma2_t = sigma2_t;
            row.dead_per_layer = detail::current_dead_counts(original, res.liveness);
            res.metrics.push_back(std::move(row));
            res.aborted = true;
            break;
        }

        GradientSet grads = backward(net, trace, dlogits);
        add_reg_gradient(net, grads, lambda_t, cfg.regularizer);
        if (opts.weight_decay > 0.0 && !opts.decoupled_wd) {
            auto params = trainable_params(net);
            for (std::size_t li = 0; li < params.size(); ++li)
                for (std::size_t s = 0; s < params[li].size(); ++s)
                    for (std::size_t k = 0; k < grads[li][s].size(); ++k)
                        grads[li][s][k] += opts.weight_decay * (*params[li][s])[k];
        }
        opt.step(net, grads, opts.lr);
        if (opts.decoupled_wd) apply_decoupled_weight_decay(net, opts.lr, opts.weight_decay);
        inject_noise(net, res.liveness, sigma2_t, cfg.noise_mode, rng);

        const bool prune_now = cfg.dynamic_pruning && ((t + 1) % cfg.prune_period == 0);
        const bool metrics_now = opts.metrics_every > 0 &&
                                 (t % opts.metrics_every == 0 || t + 1 == opts.steps);
        bool pruned = false;
        if (prune_now || metrics_now) refresh_liveness(t);
        if (prune_now) {
            auto report = prune_step(net, res.liveness, opt);
            report.step = t;
            pruned = std::accumulate(report.removed_per_layer.begin(),
                                     report.removed_per_layer.end(), std::size_t{0}) > 0;
            res.prune_reports.push_back(std::move(report));
        }

        if (metrics_now || prune_now) {
            MetricsRow row;
            row.step = t;
            row.train_loss = loss;
            row.lambda_t = lambda_t;
            row.sigma2_t = sigma2_t;
            const auto sm = sparsity_metrics(original, net, res.liveness, ref_shape);
            row.neuron_sparsity = sm.neuron_sparsity;
            row.weight_sparsity = sm.weight_sparsity;
            row.flops_estimate = sm.flops_estimate;
            row.dead_per_layer = detail::current_dead_counts(original, res.liveness);
            if (opts.eval_data && opts.eval_every > 0 &&
                (t % opts.eval_every == 0 || t + 1 == opts.steps))
                row.eval_accuracy = evaluate_accuracy(net, *opts.eval_data);
            res.metrics.push_back(std::move(row));
        }
        (void)pruned;
    }

    if (opts.eval_data && !res.aborted)
        res.final_eval_accuracy = evaluate_accuracy(net, *opts.eval_data);
    return res;
}

/// Noise-isolation update: moves parameters by the negative difference
/// between the minibatch gradient and the full-data gradient.
inline void pure_noise_step(Network& net, const Tensor& batch_x, const std::vector<int>& batch_y,
                            const Dataset& full_data, double lr) {
    ForwardTrace trace;
    Tensor logits = forward(net, batch_x, Mode::Train, &trace);
    GradientSet ghat = backward(net, trace, softmax_cross_entropy(logits, batch_y).second);

    std::vector<std::size_t> idx(full_data.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto [fx, fy] = gather_batch(full_data, idx);
    ForwardTrace ftrace;
    Tensor flogits = forward(net, fx, Mode::Train, &ftrace);
    GradientSet gfull = backward(net, ftrace, softmax_cross_entropy(flogits, fy).second);

    auto params = trainable_params(net);
    for (std::size_t li = 0; li < params.size(); ++li)
        for (std::size_t s = 0; s < params[li].size(); ++s)
            for (std::size_t k = 0; k < params[li][s]->size(); ++k)
                (*params[li][s])[k] -= lr * (ghat[li][s][k] - gfull[li][s][k]);
}

}  // namespace demp
