#pragma once

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "demp/network.hpp"

namespace demp {

enum class OptKind { SGD, SGDM, Adam };

struct OptimizerConfig {
    OptKind kind = OptKind::SGD;
    double momentum = 0.9;     // SGDM
    double beta1 = 0.9;        // Adam
    double beta2 = 0.999;      // Adam
    double eps_adam = 1e-8;    // Adam
};

/// Optimizer state; buffers are laid out like trainable_params and are
/// shrunk in lockstep with structural pruning.
class OptimizerState {
public:
    OptimizerState() = default;

    OptimizerState(const OptimizerConfig& cfg, Network& net) : cfg_(cfg) {
        if (cfg_.kind == OptKind::SGDM) momentum_buf_ = zero_gradients(net);
        if (cfg_.kind == OptKind::Adam) {
            m_ = zero_gradients(net);
            v_ = zero_gradients(net);
        }
    }

    const OptimizerConfig& config() const { return cfg_; }
    std::uint64_t step_count() const { return t_; }
    const GradientSet& momentum_buffer() const { return momentum_buf_; }
    const GradientSet& adam_m() const { return m_; }
    const GradientSet& adam_v() const { return v_; }

    /// One optimizer step over every trainable parameter.
    void step(Network& net, const GradientSet& grads, double lr) {
        if (lr <= 0.0) throw std::invalid_argument("optimizer step: lr must be > 0");
        auto params = trainable_params(net);
        check_shapes(params, grads);
        for (auto& lg : grads)
            for (auto& t : lg)
                if (!t.all_finite())
                    throw std::runtime_error("optimizer step refused: non-finite gradient");
        ++t_;
        for (std::size_t li = 0; li < params.size(); ++li)
            for (std::size_t s = 0; s < params[li].size(); ++s) {
                Tensor& w = *params[li][s];
                const Tensor& g = grads[li][s];
                switch (cfg_.kind) {
                    case OptKind::SGD:
                        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
                        break;
                    case OptKind::SGDM: {
                        Tensor& buf = momentum_buf_[li][s];
                        for (std::size_t k = 0; k < w.size(); ++k) {
                            buf[k] = cfg_.momentum * buf[k] + g[k];
                            w[k] -= lr * buf[k];
                        }
                        break;
                    }
                    case OptKind::Adam: {
                        Tensor& m = m_[li][s];
                        Tensor& v = v_[li][s];
                        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
                        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
                        for (std::size_t k = 0; k < w.size(); ++k) {
                            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
                            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
                            const double mhat = m[k] / bc1;
                            const double vhat = v[k] / bc2;
                            w[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps_adam);
                        }
                        break;
                    }
                }
            }
    }

    /// Shrinks buffers to match a unit removal performed on `net_before`.
    void shrink(const Network& net_before, std::size_t layer_index,
                const std::set<std::size_t>& units) {
        if (!momentum_buf_.empty()) shrink_param_table(net_before, layer_index, units, momentum_buf_);
        if (!m_.empty()) {
            shrink_param_table(net_before, layer_index, units, m_);
            shrink_param_table(net_before, layer_index, units, v_);
        }
    }

private:
    static void check_shapes(const std::vector<std::vector<Tensor*>>& params,
                             const GradientSet& grads) {
        if (params.size() != grads.size())
            throw std::invalid_argument("optimizer step: gradient layout mismatch");
        for (std::size_t li = 0; li < params.size(); ++li) {
            if (params[li].size() != grads[li].size())
                throw std::invalid_argument("optimizer step: gradient layout mismatch");
            for (std::size_t s = 0; s < params[li].size(); ++s)
                if (!params[li][s]->same_shape(grads[li][s]))
                    throw std::invalid_argument("optimizer step: gradient shape mismatch");
        }
    }

    OptimizerConfig cfg_;
    GradientSet momentum_buf_;
    GradientSet m_, v_;
    std::uint64_t t_ = 0;
};

/// Decoupled weight decay, applied after the optimizer step; does not touch
/// adaptive statistics.
inline void apply_decoupled_weight_decay(Network& net, double lr, double wd) {
    if (wd < 0.0) throw std::invalid_argument("weight decay must be >= 0");
    if (wd == 0.0) return;
    auto params = trainable_params(net);
    for (auto& lp : params)
        for (auto* t : lp)
            for (auto& w : t->vec()) w -= lr * wd * w;
}

}  // namespace demp
