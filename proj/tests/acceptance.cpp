// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Training criteria use a bundled synthetic-blobs stand-in for the
// digit set; point DEMP_MNIST_DIR at a directory with
// train-images-idx3-ubyte(.gz) / train-labels-idx1-ubyte(.gz) to run them on
// the real data.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "demp/engine.hpp"
#include "demp/loss.hpp"
#include "demp/theory.hpp"

using namespace demp;

namespace {

int g_failures = 0;

void report(int idx, bool ok, const std::string& detail) {
    std::printf("%s criterion %2d: %s\n", ok ? "PASS" : "FAIL", idx, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

double now_seconds() {
    static const auto t0 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------ 1: absorbing walk erf law

void criterion_1() {
    double worst_excess = -1e9;
    std::string worst_cell;
    std::uint64_t seed = 0;
    for (double w0 : {0.5, 1.0, 2.0})
        for (double eta : {0.005, 0.01, 0.05})
            for (double t : {50.0, 100.0, 400.0}) {
                WalkConfig cfg;
                cfg.w0 = w0;
                cfg.eta = eta;
                cfg.t = t;
                cfg.n_sub = 10000;
                cfg.trajectories = 100000;
                cfg.seed = ++seed;
                const double mc = simulate_absorbing(cfg);
                const double cf = survival_closed_form(w0, eta, t);
                const double tol = 3.0 * mc_stderr(cf, cfg.trajectories) + 0.005;
                const double excess = std::abs(mc - cf) - tol;
                if (excess > worst_excess) {
                    worst_excess = excess;
                    worst_cell = fmt("(w0=%g, eta=%g, t=%g): |%.4f - %.4f| vs tol %.4f", w0, eta,
                                     t, mc, cf, tol);
                }
            }
    report(1, worst_excess <= 0.0, "erf survival law on the 3x3x3 grid, worst cell " + worst_cell);
}

// ------------------------------------------- 2: Lyapunov concentration

void criterion_2() {
    GeomWalkConfig cfg;
    cfg.h = 1.0;
    cfg.eta = 0.1;
    cfg.c = 0.5;
    cfg.steps = 100000;
    cfg.trajectories = 100;
    cfg.seed = 12;
    const auto sim = simulate_geometric(cfg);
    const auto mu = mu_estimate(cfg, 10000000);
    std::size_t close = 0;
    for (double v : sim.per_trajectory)
        if (std::abs(v - mu.mean) < 0.01) ++close;

    GeomWalkConfig degen = cfg;
    degen.c = 0.0;
    degen.trajectories = 3;
    degen.steps = 1000;
    // each step contributes exactly log(1 - eta h); averaging rounds in the last ulp
    const double degen_lyap = simulate_geometric(degen).lyapunov_estimate;
    const bool exact = std::abs(degen_lyap - std::log(1.0 - 0.1 * 1.0)) <= 1e-14;

    report(2, close >= 95 && exact,
           fmt("Lyapunov vs mu=%.6f: %zu/100 trajectories within 0.01; c=0 exact: %s", mu.mean,
               close, exact ? "yes" : "no"));
}

// ------------------------------------------------- 3: Lemma 2 bound

void criterion_3() {
    const auto bound = lemma2_bound(-0.1, 1.0);
    const bool min_ok = std::abs(bound.min_value - (-0.5355)) < 1e-3;
    const bool interval_ok = bound.has_negative_interval && bound.root_lo < bound.root_hi;

    // evaluate mu at the midpoint of the interval, clipped to the stability
    // region eta < 1/(|h|+c) for uniform noise with matching variance
    GeomWalkConfig cfg;
    cfg.h = -0.1;
    cfg.c = std::sqrt(3.0);  // uniform on [-c,c], sigma^2 = 1
    cfg.seed = 13;
    const double cap = 1.0 / (0.1 + cfg.c) - 1e-9;
    cfg.eta = 0.5 * (bound.root_lo + std::min(bound.root_hi, cap));
    const auto mu = mu_estimate(cfg, 4000000);
    const bool mu_ok = mu.mean + 3.0 * mu.stderr_ < 0.0;

    report(3, min_ok && interval_ok && mu_ok,
           fmt("min P=%.6f, interval (%.4f, %.4f), mu(%.4f)=%.6f +- %.6f", bound.min_value,
               bound.root_lo, bound.root_hi, cfg.eta, mu.mean, mu.stderr_));
}

// ------------------------------------------------- 4: gradient suite

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1e-4, std::abs(a), std::abs(b)});
}

double max_grad_rel_err(const GradientSet& a, const GradientSet& b) {
    double worst = 0.0;
    for (std::size_t li = 0; li < a.size(); ++li)
        for (std::size_t s = 0; s < a[li].size(); ++s)
            for (std::size_t k = 0; k < a[li][s].size(); ++k)
                worst = std::max(worst, rel_err(a[li][s][k], b[li][s][k]));
    return worst;
}

void criterion_4() {
    const double t_start = now_seconds();
    const std::vector<std::pair<ActKind, double>> acts = {{ActKind::ReLU, 0.0},
                                                          {ActKind::LeakyReLU, 0.05},
                                                          {ActKind::Swish, 1.0},
                                                          {ActKind::GeLU, 0.0}};
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (auto [kind, param] : acts) {
            Rng rng(seed * 101 + 7);
            {
                // three-layer MLP
                Network net = make_mlp(6, {8, 5}, 3, kind, param, true, rng);
                Tensor batch({4, 6});
                std::normal_distribution<double> g(0.0, 1.0);
                for (auto& v : batch.vec()) v = g(rng);
                std::vector<int> labels(4);
                std::uniform_int_distribution<int> lab(0, 2);
                for (auto& v : labels) v = lab(rng);
                ForwardTrace trace;
                const Tensor out = forward(net, batch, Mode::Train, &trace);
                const GradientSet bp = backward(net, trace, softmax_cross_entropy(out, labels).second);
                const GradientSet fd = fd_gradient_oracle(net, batch, [&](const Tensor& o) {
                    return softmax_cross_entropy(o, labels).first;
                });
                worst = std::max(worst, max_grad_rel_err(bp, fd));
            }
            {
                // two-layer conv stack
                Network net;
                net.layers.push_back(make_conv2d(1, 3, 3, 3, 1, 1));
                net.layers.push_back(make_batchnorm(3));
                net.layers.push_back(make_activation(kind, param));
                net.layers.push_back(make_conv2d(3, 2, 3, 3, 2, 0));
                init_params(net, rng);
                Tensor batch({3, 1, 6, 6});
                std::normal_distribution<double> g(0.0, 1.0);
                for (auto& v : batch.vec()) v = g(rng);
                ForwardTrace trace;
                const Tensor out = forward(net, batch, Mode::Train, &trace);
                Tensor lg(out.shape());
                for (auto& v : lg.vec()) v = g(rng);
                const GradientSet bp = backward(net, trace, lg);
                const GradientSet fd = fd_gradient_oracle(net, batch, [&](const Tensor& o) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < o.size(); ++k) s += o[k] * lg[k];
                    return s;
                });
                worst = std::max(worst, max_grad_rel_err(bp, fd));
            }
        }
    }
    const double elapsed = now_seconds() - t_start;
    report(4, worst < 1e-4 && elapsed < 60.0,
           fmt("backward vs finite differences, worst rel err %.2e in %.1fs", worst, elapsed));
}

// --------------------------------------------- 5: prune equivalence

std::size_t brute_force_param_recount(const Network& net) {
    std::size_t n = 0;
    for (const auto& layer : net.layers) {
        if (auto* d = std::get_if<DenseLayer>(&layer))
            n += d->w.size() + d->b.size();
        else if (auto* c = std::get_if<Conv2DLayer>(&layer))
            n += c->w.size() + c->b.size();
        else if (auto* bn = std::get_if<BatchNormLayer>(&layer))
            n += bn->gamma.size() + bn->beta.size();
    }
    return n;
}

void criterion_5() {
    bool bitwise_ok = true;
    {
        Rng rng(13);
        Network net = make_mlp(6, {8, 7}, 3, ActKind::ReLU, 0.0, false, rng);
        auto& d1 = std::get<DenseLayer>(net.layers[2]);
        for (std::size_t u : {1u, 4u}) {
            for (std::size_t k = 0; k < d1.w.dim(1); ++k) d1.w.at2(u, k) = 0.0;
            d1.b[u] = -0.5;
        }
        Tensor batch({16, 6});
        std::normal_distribution<double> g(0.0, 1.0);
        for (auto& v : batch.vec()) v = g(rng);
        const Tensor before = forward(net, batch, Mode::Eval);
        remove_units(net, 2, {1, 4});
        const Tensor after = forward(net, batch, Mode::Eval);
        for (std::size_t k = 0; k < before.size(); ++k)
            if (before[k] != after[k]) bitwise_ok = false;
    }

    std::size_t delta_mismatches = 0;
    for (std::uint64_t seq = 0; seq < 20; ++seq) {
        Rng rng(900 + seq);
        const bool with_bn = seq % 2 == 0;
        Network net = make_mlp(5, {9, 8, 7}, 4, ActKind::ReLU, 0.0, with_bn, rng);
        const std::vector<std::size_t> prunable = prunable_layers(net);
        std::uniform_int_distribution<std::size_t> pick_layer(0, prunable.size() - 1);
        for (int step = 0; step < 3; ++step) {
            const std::size_t li = prunable[pick_layer(rng)];
            const std::size_t units = layer_units(net.layers[li]);
            std::uniform_int_distribution<std::size_t> pick_count(1, units / 2);
            const std::size_t n_remove = pick_count(rng);
            std::set<std::size_t> victims;
            std::uniform_int_distribution<std::size_t> pick_unit(0, units - 1);
            while (victims.size() < n_remove) victims.insert(pick_unit(rng));

            const std::size_t footprint = unit_param_footprint(net, li);
            const std::size_t before = brute_force_param_recount(net);
            remove_units(net, li, victims);
            const std::size_t after = brute_force_param_recount(net);
            if (before - after != n_remove * footprint || after != param_count(net))
                ++delta_mismatches;
        }
    }

    report(5, bitwise_ok && delta_mismatches == 0,
           fmt("dead-unit removal bitwise: %s; closed-form deltas vs recount: %zu mismatches in "
               "20 sequences",
               bitwise_ok ? "yes" : "no", delta_mismatches));
}

// ----------------------------------------------- 6: degeneration

void criterion_6() {
    const std::uint64_t steps = 1000;
    Dataset ds = synth_blobs(3, 200, 6, 6.0, 51);

    Rng rng_a(7);
    Network net_a = make_mlp(6, {10, 8}, 3, ActKind::ReLU, 0.0, true, rng_a);
    Network net_b = net_a;

    OptimizerConfig ocfg;
    ocfg.kind = OptKind::Adam;
    OptimizerState opt_a(ocfg, net_a);
    DempConfig cfg;
    cfg.lambda_schedule = ScheduleSpec(ScheduleKind::Constant, 0.0, steps);
    cfg.sigma2_schedule = ScheduleSpec(ScheduleKind::Constant, 0.0, steps);
    cfg.noise_mode = NoiseMode::Off;
    cfg.dynamic_pruning = false;
    TrainOptions opts;
    opts.steps = steps;
    opts.batch_size = 32;
    opts.lr = 0.001;
    opts.seed = 99;
    Rng noise_rng(1);
    train_demp(net_a, ds, opt_a, cfg, opts, noise_rng);

    OptimizerState opt_b(ocfg, net_b);
    BatchPlan plan{32, 99};
    for (std::uint64_t t = 0; t < steps; ++t) {
        auto [x, y] = gather_batch(ds, plan.batch_indices(ds.size(), t));
        ForwardTrace trace;
        const Tensor logits = forward(net_b, x, Mode::Train, &trace);
        opt_b.step(net_b, backward(net_b, trace, softmax_cross_entropy(logits, y).second), 0.001);
    }

    std::size_t diffs = 0;
    auto pa = trainable_params(net_a);
    auto pb = trainable_params(net_b);
    for (std::size_t li = 0; li < pa.size(); ++li)
        for (std::size_t s = 0; s < pa[li].size(); ++s)
            for (std::size_t k = 0; k < pa[li][s]->size(); ++k)
                if ((*pa[li][s])[k] != (*pb[li][s])[k]) ++diffs;
    for (std::size_t li : {1u, 4u}) {
        const auto& a = std::get<BatchNormLayer>(net_a.layers[li]);
        const auto& b = std::get<BatchNormLayer>(net_b.layers[li]);
        for (std::size_t k = 0; k < a.run_mean.size(); ++k) {
            if (a.run_mean[k] != b.run_mean[k]) ++diffs;
            if (a.run_var[k] != b.run_var[k]) ++diffs;
        }
    }
    report(6, diffs == 0,
           fmt("engine with lambda=0, sigma^2=0, pruning off vs plain loop over %llu steps: %zu "
               "differing values",
               static_cast<unsigned long long>(steps), diffs));
}

// -------------------------------------- 7-10: training-direction criteria

struct Arm {
    double lambda_peak = 1e-4;
    double sigma2_peak = 1e-3;
    NoiseMode noise = NoiseMode::Asymmetric;
    double eps_adam = 1e-8;
    bool prune = false;
    std::uint64_t steps = 1500;

    std::string key() const {
        return fmt("%g|%g|%d|%g|%d|%llu", lambda_peak, sigma2_peak, static_cast<int>(noise),
                   eps_adam, prune ? 1 : 0, static_cast<unsigned long long>(steps));
    }
};

struct ArmResult {
    double mean_dead = 0.0;
    std::vector<double> accuracies;
};

class TrainingBench {
  public:
    TrainingBench() {
        if (const char* dir = std::getenv("DEMP_MNIST_DIR")) {
            const std::string root(dir);
            Dataset full;
            try {
                full = load_idx(root + "/train-images-idx3-ubyte", root + "/train-labels-idx1-ubyte");
            } catch (const std::exception&) {
                full = load_idx(root + "/train-images-idx3-ubyte.gz",
                                root + "/train-labels-idx1-ubyte.gz");
            }
            data_ = subset(full, 10000, 17);
            source_ = "idx";
        } else {
            data_ = synth_blobs(10, 1000, 784, 12.0, 5);
            source_ = "blobs";
        }
        eval_ = subset(data_, 1000, 999);
    }

    const std::string& source() const { return source_; }

    ArmResult run(const Arm& arm) {
        auto it = cache_.find(arm.key());
        if (it != cache_.end()) return it->second;
        ArmResult res;
        std::size_t dead_total = 0;
        for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
            Rng init_rng = substream(seed, 0x1417ULL);
            Network net = make_mlp(784, {100, 300}, 10, ActKind::ReLU, 0.0, true, init_rng);
            OptimizerConfig ocfg;
            ocfg.kind = OptKind::Adam;
            ocfg.eps_adam = arm.eps_adam;
            OptimizerState opt(ocfg, net);
            DempConfig cfg;
            cfg.lambda_schedule = ScheduleSpec(ScheduleKind::OneCycle, arm.lambda_peak, arm.steps);
            cfg.sigma2_schedule = ScheduleSpec(ScheduleKind::OneCycle, arm.sigma2_peak, arm.steps);
            cfg.noise_mode = arm.noise;
            cfg.dynamic_pruning = arm.prune;
            cfg.prune_period = 500;
            cfg.criterion = DeathCriterion::EpsInactive;
            TrainOptions opts;
            opts.steps = arm.steps;
            opts.batch_size = 128;
            opts.lr = 1e-3;
            opts.seed = seed;
            opts.metrics_every = 100;  // refreshes liveness, so asymmetric noise can freeze
            opts.eval_data = &eval_;
            Rng noise_rng = substream(seed, 0x401eULL);
            const TrainResult tr = train_demp(net, data_, opt, cfg, opts, noise_rng);
            for (std::size_t c : tr.metrics.back().dead_per_layer) dead_total += c;
            res.accuracies.push_back(tr.final_eval_accuracy.value_or(0.0));
        }
        res.mean_dead = static_cast<double>(dead_total) / 3.0;
        cache_[arm.key()] = res;
        return res;
    }

  private:
    Dataset data_;
    Dataset eval_;
    std::string source_;
    std::map<std::string, ArmResult> cache_;
};

void criterion_7(TrainingBench& bench) {
    Arm asym;
    Arm sym = asym;
    sym.noise = NoiseMode::Symmetric;
    const double a = bench.run(asym).mean_dead;
    const double s = bench.run(sym).mean_dead;
    report(7, a >= s,
           fmt("mean final dead units (%s, 3 seeds): asymmetric %.1f vs symmetric %.1f",
               bench.source().c_str(), a, s));
}

void criterion_8(TrainingBench& bench) {
    std::vector<double> means;
    for (double eps : {1e-10, 1e-8, 1e-6, 1e-4}) {
        Arm arm;
        arm.eps_adam = eps;
        // regularization-driven deaths with mild noise; injected noise bypasses
        // the optimizer, so a noise-dominated arm would mask the epsilon effect
        arm.lambda_peak = 3e-4;
        arm.sigma2_peak = 1e-4;
        arm.steps = 3000;
        means.push_back(bench.run(arm).mean_dead);
    }
    bool monotone = true;
    for (std::size_t i = 1; i < means.size(); ++i)
        if (means[i] > means[i - 1]) monotone = false;
    report(8, monotone,
           fmt("mean dead units over eps_adam {1e-10, 1e-8, 1e-6, 1e-4}: %.1f, %.1f, %.1f, %.1f",
               means[0], means[1], means[2], means[3]));
}

void criterion_9(TrainingBench& bench) {
    std::vector<double> means;
    for (double lam : {0.0, 1e-4, 1e-3}) {
        Arm arm;
        arm.lambda_peak = lam;
        arm.sigma2_peak = 5e-5;  // keep noise-induced deaths out of the lambda direction
        means.push_back(bench.run(arm).mean_dead);
    }
    const bool monotone = means[0] <= means[1] && means[1] <= means[2];
    report(9, monotone,
           fmt("mean dead units over lambda peak {0, 1e-4, 1e-3}: %.1f, %.1f, %.1f", means[0],
               means[1], means[2]));
}

void criterion_10(TrainingBench& bench) {
    Arm off;
    Arm on = off;
    on.prune = true;
    const ArmResult r_off = bench.run(off);
    const ArmResult r_on = bench.run(on);
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    const double m_off = mean(r_off.accuracies);
    const double m_on = mean(r_on.accuracies);
    double var = 0.0;
    for (double x : r_off.accuracies) var += (x - m_off) * (x - m_off);
    const double sd_off = std::sqrt(var / static_cast<double>(r_off.accuracies.size() - 1));
    const bool ok = std::abs(m_on - m_off) <= 2.0 * sd_off + 1e-12;
    report(10, ok,
           fmt("eval accuracy, pruning on %.4f vs off %.4f (off-arm stddev %.4f)", m_on, m_off,
               sd_off));
}

// ----------------------------------------------- 11: schedule exactness

void criterion_11() {
    const double peak = 2.5;
    const std::uint64_t T = 1000;
    ScheduleSpec sched(ScheduleKind::OneCycle, peak, T, 0.1);
    const std::uint64_t warm = 100;
    const std::uint64_t mid = warm + (T - warm) / 2;
    const double mid_expect =
        peak * 0.5 *
        (1.0 + std::cos(M_PI * static_cast<double>(mid - warm) / static_cast<double>(T - warm)));
    bool ok = std::abs(value_at(sched, 0) - 0.0) <= 1e-12;
    ok = ok && std::abs(value_at(sched, warm) - peak) <= 1e-12;
    ok = ok && std::abs(value_at(sched, mid) - mid_expect) <= 1e-12;
    ok = ok && std::abs(value_at(sched, T) - 0.0) <= 1e-12;

    const bool ov_full = overlap_ratio({1, 2, 3}, {1, 2, 3}) == 1.0;
    const bool ov_none = overlap_ratio({1, 2}, {3, 4, 5}) == 0.0;
    const bool ov_half = overlap_ratio({1, 2}, {2, 3, 4}) == 0.5;

    report(11, ok && ov_full && ov_none && ov_half,
           fmt("one-cycle endpoints/peak/midpoint to 1e-12: %s; overlap fixtures (1, 0, 0.5): "
               "%s/%s/%s",
               ok ? "yes" : "no", ov_full ? "yes" : "no", ov_none ? "yes" : "no",
               ov_half ? "yes" : "no"));
}

}  // namespace

int main() {
    criterion_11();
    criterion_4();
    criterion_5();
    criterion_3();
    criterion_6();
    criterion_2();
    criterion_1();
    TrainingBench bench;
    criterion_7(bench);
    criterion_8(bench);
    criterion_9(bench);
    criterion_10(bench);
    std::printf("%d of 11 criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
