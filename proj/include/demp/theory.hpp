#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "demp/rng.hpp"

namespace demp {

// ----------------------------------------------------- absorbing random walk

/// Brownian motion with diffusion coefficient eta, absorbed at zero.
struct WalkConfig {
    double w0 = 1.0;
    double eta = 0.01;
    double t = 100.0;              // continuous horizon
    std::size_t n_sub = 10000;     // discretization substeps
    std::size_t trajectories = 100000;
    std::uint64_t seed = 0;

    void validate() const {
        if (w0 <= 0.0) throw std::invalid_argument("walk: w0 must be > 0");
        if (eta <= 0.0) throw std::invalid_argument("walk: eta must be > 0");
        if (t <= 0.0) throw std::invalid_argument("walk: t must be > 0");
        if (n_sub < 1 || trajectories < 1)
            throw std::invalid_argument("walk: n_sub and trajectories must be >= 1");
    }
};

/// Closed-form survival probability erf(w0 / sqrt(2 eta t)).
inline double survival_closed_form(double w0, double eta, double t) {
    if (w0 <= 0.0 || eta <= 0.0 || t <= 0.0)
        throw std::invalid_argument("survival_closed_form: w0, eta, t must be > 0");
    return std::erf(w0 / std::sqrt(2.0 * eta * t));
}

/// Monte-Carlo estimate of the survival fraction at the horizon. Trajectories
/// use per-index generators, so results are independent of execution order.
inline double simulate_absorbing(const WalkConfig& cfg) {
    cfg.validate();
    const double dt = cfg.t / static_cast<double>(cfg.n_sub);
    const double step_std = std::sqrt(cfg.eta * dt);
    std::size_t alive = 0;
    for (std::size_t i = 0; i < cfg.trajectories; ++i) {
        Rng rng = substream(cfg.seed, i);
        std::normal_distribution<double> gauss(0.0, step_std);
        double w = cfg.w0;
        bool survived = true;
        for (std::size_t s = 0; s < cfg.n_sub; ++s) {
            w += gauss(rng);
            if (w <= 0.0) {
                survived = false;
                break;
            }
        }
        alive += survived ? 1 : 0;
    }
    return static_cast<double>(alive) / static_cast<double>(cfg.trajectories);
}

inline double mc_stderr(double p, std::size_t n) {
    return std::sqrt(std::max(p * (1.0 - p), 1e-12) / static_cast<double>(n));
}

// ---------------------------------------------------- geometric random walk

enum class NoiseLaw { Uniform, Rademacher };  // bounded, symmetric about 0

/// w_{t+1} = w_t - eta (h + zeta_t) w_t with bounded symmetric noise zeta.
struct GeomWalkConfig {
    double h = 1.0;                // curvature (negative = unstable direction)
    double eta = 0.1;
    NoiseLaw noise_law = NoiseLaw::Uniform;
    double c = 0.0;                // noise bound: Uniform(-c,c) or Rademacher(+-c)
    std::uint64_t steps = 100000;
    std::size_t trajectories = 100;
    std::uint64_t seed = 0;

    double noise_variance() const {
        return noise_law == NoiseLaw::Uniform ? c * c / 3.0 : c * c;
    }

    void validate() const {
        if (eta <= 0.0) throw std::invalid_argument("geom walk: eta must be > 0");
        if (c < 0.0) throw std::invalid_argument("geom walk: noise bound must be >= 0");
        if (steps < 1 || trajectories < 1)
            throw std::invalid_argument("geom walk: steps and trajectories must be >= 1");
        // stability assumption: 1 - eta (h + zeta) stays positive
        if (eta * (std::abs(h) + c) >= 1.0)
            throw std::invalid_argument("geom walk: stability assumption eta*(|h|+c) < 1 violated");
    }
};

namespace detail {

inline double draw_zeta(const GeomWalkConfig& cfg, Rng& rng) {
    if (cfg.c == 0.0) return 0.0;
    if (cfg.noise_law == NoiseLaw::Uniform) {
        std::uniform_real_distribution<double> u(-cfg.c, cfg.c);
        return u(rng);
    }
    std::uniform_int_distribution<int> coin(0, 1);
    return coin(rng) ? cfg.c : -cfg.c;
}

}  // namespace detail

struct GeomWalkResult {
    double lyapunov_estimate = 0.0;          // mean of log|w_t / w_0| / t
    std::vector<double> per_trajectory;      // log|w_t / w_0| / t per trajectory
};

/// Simulates the geometric walk in log space and estimates the Lyapunov
/// exponent; exact (no overflow) since log|w_t/w_0| = sum log(1 - eta(h+zeta)).
inline GeomWalkResult simulate_geometric(const GeomWalkConfig& cfg) {
    cfg.validate();
    GeomWalkResult res;
    res.per_trajectory.reserve(cfg.trajectories);
    double total = 0.0;
    for (std::size_t i = 0; i < cfg.trajectories; ++i) {
        Rng rng = substream(cfg.seed, i);
        double log_ratio = 0.0;
        for (std::uint64_t s = 0; s < cfg.steps; ++s)
            log_ratio += std::log(1.0 - cfg.eta * (cfg.h + detail::draw_zeta(cfg, rng)));
        const double exponent = log_ratio / static_cast<double>(cfg.steps);
        res.per_trajectory.push_back(exponent);
        total += exponent;
    }
    res.lyapunov_estimate = total / static_cast<double>(cfg.trajectories);
    return res;
}

struct MuEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

/// Monte-Carlo estimate of mu = E[log(1 - eta (h + zeta))].
inline MuEstimate mu_estimate(const GeomWalkConfig& cfg, std::size_t samples) {
    cfg.validate();
    if (samples < 1) throw std::invalid_argument("mu_estimate: need at least one sample");
    Rng rng = substream(cfg.seed, 0xabcdULL);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double z = std::log(1.0 - cfg.eta * (cfg.h + detail::draw_zeta(cfg, rng)));
        sum += z;
        sum2 += z * z;
    }
    MuEstimate est;
    est.mean = sum / static_cast<double>(samples);
    const double var = std::max(0.0, sum2 / static_cast<double>(samples) - est.mean * est.mean);
    est.stderr_ = std::sqrt(var / static_cast<double>(samples));
    return est;
}

// -------------------------------------------------------------- Lemma 2 bound

/// Sign polynomial of the cubic upper bound on mu for h < 0:
/// P(eta) = |h| - eta/2 (h^2 + s2) + eta^2/3 |h| (h^2 + 3 s2); mu <= eta P(eta).
struct Lemma2Bound {
    double a = 0.0, b = 0.0, c = 0.0;  // P(eta) = a eta^2 + b eta + c
    double eta_min = 0.0;              // argmin of P
    double min_value = 0.0;            // min_eta P(eta)
    bool has_negative_interval = false;
    double root_lo = 0.0, root_hi = 0.0;  // interval with P < 0, when it exists

    double eval(double eta) const { return a * eta * eta + b * eta + c; }
};

inline Lemma2Bound lemma2_bound(double h, double sigma2) {
    if (h >= 0.0) throw std::invalid_argument("lemma2_bound: requires h < 0");
    if (sigma2 <= 0.0) throw std::invalid_argument("lemma2_bound: requires sigma^2 > 0");
    const double ah = std::abs(h);
    Lemma2Bound out;
    out.a = ah * (h * h + 3.0 * sigma2) / 3.0;
    out.b = -(h * h + sigma2) / 2.0;
    out.c = ah;
    out.eta_min = -out.b / (2.0 * out.a);
    // closed form: |h| - 3/16 (h^2+s2)^2 / (|h| (h^2 + 3 s2))
    out.min_value = ah - 3.0 / 16.0 * (h * h + sigma2) * (h * h + sigma2) /
                             (ah * (h * h + 3.0 * sigma2));
    const double disc = out.b * out.b - 4.0 * out.a * out.c;
    if (disc > 0.0) {
        const double sq = std::sqrt(disc);
        out.root_lo = (-out.b - sq) / (2.0 * out.a);
        out.root_hi = (-out.b + sq) / (2.0 * out.a);
        out.has_negative_interval = true;
    }
    return out;
}

}  // namespace demp
