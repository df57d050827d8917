// Command-line experiment runner: training runs, theory simulations and
// schedule dumps, all seeded and emitting CSV/JSON.

#include <array>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "demp/config.hpp"
#include "demp/runner.hpp"
#include "demp/schedule.hpp"
#include "demp/theory.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::string default_out_root() {
    const char* env = std::getenv("DEMP_OUT_ROOT");
    return env ? env : "runs";
}

FILE* open_out(const std::string& path) {
    if (path.empty()) return stdout;
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open output file " + path);
    return f;
}

void close_out(FILE* f) {
    if (f && f != stdout) std::fclose(f);
}

int cmd_train(const std::string& config_path, const std::string& out_override,
              long long seed_override, bool quiet) {
    demp::ExperimentConfig cfg;
    try {
        cfg = demp::load_experiment_config(config_path);
    } catch (const demp::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    }
    std::string out = !out_override.empty() ? out_override
                      : !cfg.run.out.empty() ? cfg.run.out
                                             : default_out_root();
    std::vector<std::uint64_t> seeds = cfg.run.seeds;
    if (seed_override >= 0) seeds = {static_cast<std::uint64_t>(seed_override)};
    int rc = 0;
    for (auto seed : seeds) {
        try {
            auto outcome = demp::run_experiment(cfg, seed, out, quiet);
            if (outcome.aborted) {
                std::fprintf(stderr, "run seed %llu aborted (non-finite loss)\n",
                             static_cast<unsigned long long>(seed));
                rc = kExitRuntime;
            } else if (!quiet) {
                std::printf("seed %llu -> %s\n", static_cast<unsigned long long>(seed),
                            outcome.run_dir.c_str());
            }
        } catch (const std::exception& e) {
            std::fprintf(stderr, "run seed %llu failed: %s\n",
                         static_cast<unsigned long long>(seed), e.what());
            rc = kExitRuntime;
        }
    }
    return rc;
}

int cmd_theory_absorbing(double w0, double eta, double t, std::size_t trajectories,
                         std::size_t n_sub, std::uint64_t seed, bool grid,
                         const std::string& out_path) {
    FILE* out = open_out(out_path);
    std::fprintf(out, "w0,eta,t,mc_survival,closed_form,stderr\n");
    std::vector<std::array<double, 3>> cells;
    if (grid) {
        for (double gw0 : {0.5, 1.0, 2.0})
            for (double geta : {0.005, 0.01, 0.05})
                for (double gt : {50.0, 100.0, 400.0}) cells.push_back({gw0, geta, gt});
    } else {
        cells.push_back({w0, eta, t});
    }
    for (auto [cw0, ceta, ct] : cells) {
        demp::WalkConfig cfg;
        cfg.w0 = cw0;
        cfg.eta = ceta;
        cfg.t = ct;
        cfg.n_sub = n_sub;
        cfg.trajectories = trajectories;
        cfg.seed = seed;
        const double mc = demp::simulate_absorbing(cfg);
        const double cf = demp::survival_closed_form(cw0, ceta, ct);
        std::fprintf(out, "%g,%g,%g,%.6f,%.6f,%.6f\n", cw0, ceta, ct, mc, cf,
                     demp::mc_stderr(mc, trajectories));
    }
    close_out(out);
    return 0;
}

int cmd_theory_geometric(double h, double eta, double c, const std::string& law,
                         std::uint64_t steps, std::size_t trajectories, std::uint64_t seed,
                         std::size_t mu_samples, const std::string& out_path) {
    demp::GeomWalkConfig cfg;
    cfg.h = h;
    cfg.eta = eta;
    cfg.c = c;
    cfg.noise_law = law == "rademacher" ? demp::NoiseLaw::Rademacher : demp::NoiseLaw::Uniform;
    cfg.steps = steps;
    cfg.trajectories = trajectories;
    cfg.seed = seed;
    const auto sim = demp::simulate_geometric(cfg);
    const auto mu = demp::mu_estimate(cfg, mu_samples);
    FILE* out = open_out(out_path);
    std::fprintf(out, "h,sigma2,eta,lyapunov,mu_mc,mu_stderr\n");
    std::fprintf(out, "%g,%g,%g,%.10f,%.10f,%.10f\n", h, cfg.noise_variance(), eta,
                 sim.lyapunov_estimate, mu.mean, mu.stderr_);
    close_out(out);
    return 0;
}

int cmd_theory_lemma2(double h, double sigma2, const std::vector<double>& etas,
                      const std::string& out_path) {
    const auto bound = demp::lemma2_bound(h, sigma2);
    FILE* out = open_out(out_path);
    std::fprintf(out, "h,sigma2,eta,P_of_eta,min_P,root_lo,root_hi\n");
    std::vector<double> points = etas;
    if (points.empty()) points.push_back(bound.eta_min);
    for (double eta : points)
        std::fprintf(out, "%g,%g,%g,%.10f,%.10f,%.10f,%.10f\n", h, sigma2, eta, bound.eval(eta),
                     bound.min_value, bound.has_negative_interval ? bound.root_lo : 0.0,
                     bound.has_negative_interval ? bound.root_hi : 0.0);
    close_out(out);
    return 0;
}

int cmd_schedule(const std::string& kind, double peak, std::uint64_t steps, double rho,
                 const std::string& out_path) {
    demp::ScheduleKind k;
    if (kind == "onecycle")
        k = demp::ScheduleKind::OneCycle;
    else if (kind == "constant")
        k = demp::ScheduleKind::Constant;
    else if (kind == "warmup")
        k = demp::ScheduleKind::WarmupOnly;
    else if (kind == "decay")
        k = demp::ScheduleKind::DecayOnly;
    else
        throw demp::ConfigError("unknown schedule kind '" + kind + "'");
    demp::ScheduleSpec spec(k, peak, steps, rho);
    FILE* out = open_out(out_path);
    std::fprintf(out, "step,value\n");
    for (std::uint64_t t = 0; t <= steps; ++t)
        std::fprintf(out, "%llu,%.12g\n", static_cast<unsigned long long>(t),
                     demp::value_at(spec, t));
    close_out(out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"demp: dead-neuron-driven sparse training and theory checks"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags such as --quiet may follow the subcommand

    std::string out_path;
    bool quiet = false;
    app.add_flag("--quiet", quiet, "suppress progress output");

    // train
    auto* train = app.add_subcommand("train", "run a configured training experiment per seed");
    std::string config_path, train_out;
    long long seed_override = -1;
    train->add_option("config", config_path, "experiment config file")->required();
    train->add_option("--out", train_out, "output root directory");
    train->add_option("--seed-override", seed_override, "run only this seed");

    // theory
    auto* theory = app.add_subcommand("theory", "Monte-Carlo checks of the random-walk theory");
    theory->require_subcommand(1);

    auto* absorbing = theory->add_subcommand("absorbing", "absorbing-walk survival vs erf law");
    double w0 = 1.0, eta = 0.01, t_horizon = 100.0;
    std::size_t trajectories = 100000, n_sub = 10000, mu_samples = 1000000;
    std::uint64_t seed = 0;
    bool grid = false;
    absorbing->add_option("--w0", w0, "initial value");
    absorbing->add_option("--eta", eta, "diffusion coefficient");
    absorbing->add_option("--t", t_horizon, "time horizon");
    absorbing->add_option("--trajectories", trajectories, "trajectory count");
    absorbing->add_option("--nsub", n_sub, "discretization substeps");
    absorbing->add_option("--seed", seed, "master seed");
    absorbing->add_flag("--grid", grid, "emit the 3x3x3 (w0,eta,t) reference grid");
    absorbing->add_option("--out", out_path, "output CSV (default stdout)");

    auto* geometric = theory->add_subcommand("geometric", "geometric-walk Lyapunov exponent");
    geometric->set_help_flag("--help", "print help");  // frees -h for --h
    double gh = 1.0, geta = 0.1, gc = 0.5;
    std::string law = "uniform";
    std::uint64_t gsteps = 100000;
    std::size_t gtraj = 100;
    geometric->add_option("--h", gh, "curvature");
    geometric->add_option("--eta", geta, "learning rate");
    geometric->add_option("--c", gc, "noise bound");
    geometric->add_option("--law", law, "noise law: uniform|rademacher")
        ->check(CLI::IsMember({"uniform", "rademacher"}));
    geometric->add_option("--steps", gsteps, "steps per trajectory");
    geometric->add_option("--trajectories", gtraj, "trajectory count");
    geometric->add_option("--mu-samples", mu_samples, "samples for the mu estimate");
    geometric->add_option("--seed", seed, "master seed");
    geometric->add_option("--out", out_path, "output CSV (default stdout)");

    auto* lemma2 = theory->add_subcommand("lemma2", "stability bound polynomial P(eta)");
    lemma2->set_help_flag("--help", "print help");  // frees -h for --h
    double lh = -0.1, lsigma2 = 1.0;
    std::vector<double> letas;
    lemma2->add_option("--h", lh, "curvature (must be negative)");
    lemma2->add_option("--sigma2", lsigma2, "noise variance");
    lemma2->add_option("--eta", letas, "evaluation points (default: argmin)");
    lemma2->add_option("--out", out_path, "output CSV (default stdout)");

    // schedule
    auto* schedule = app.add_subcommand("schedule", "dump a schedule as CSV (step,value)");
    std::string sk = "onecycle";
    double peak = 1.0, rho = 0.1;
    std::uint64_t ssteps = 100;
    schedule->add_option("--kind", sk, "onecycle|constant|warmup|decay")
        ->check(CLI::IsMember({"onecycle", "constant", "warmup", "decay"}));
    schedule->add_option("--peak", peak, "peak value");
    schedule->add_option("--steps", ssteps, "total steps T");
    schedule->add_option("--warmup-fraction", rho, "warmup fraction");
    schedule->add_option("--out", out_path, "output CSV (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(config_path, train_out, seed_override, quiet);
        if (*absorbing)
            return cmd_theory_absorbing(w0, eta, t_horizon, trajectories, n_sub, seed, grid, out_path);
        if (*geometric)
            return cmd_theory_geometric(gh, geta, gc, law, gsteps, gtraj, seed, mu_samples, out_path);
        if (*lemma2) return cmd_theory_lemma2(lh, lsigma2, letas, out_path);
        if (*schedule) return cmd_schedule(sk, peak, ssteps, rho, out_path);
    } catch (const demp::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}
