#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <variant>
#include <vector>

#include "demp/rng.hpp"
#include "demp/tensor.hpp"

namespace demp {

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.9;

enum class ActKind { ReLU, LeakyReLU, Swish, GeLU, Identity };

struct DenseLayer {
    Tensor w;  // (out, in)
    Tensor b;  // (out)
};

struct Conv2DLayer {
    Tensor w;  // (out_ch, in_ch, kh, kw)
    Tensor b;  // (out_ch)
    std::size_t stride = 1;
    std::size_t padding = 0;
};

struct BatchNormLayer {
    Tensor gamma, beta;          // (channels)
    Tensor run_mean, run_var;    // eval-mode statistics
};

struct ActivationLayer {
    ActKind kind = ActKind::ReLU;
    double param = 0.0;  // alpha for LeakyReLU, beta for Swish
};

using Layer = std::variant<DenseLayer, Conv2DLayer, BatchNormLayer, ActivationLayer>;

struct Network {
    std::vector<Layer> layers;
};

// ---------------------------------------------------------------- structure

inline bool is_parametric(const Layer& l) {
    return std::holds_alternative<DenseLayer>(l) || std::holds_alternative<Conv2DLayer>(l);
}

/// Output units of a parametric layer (dense outputs / conv output channels).
inline std::size_t layer_units(const Layer& l) {
    if (auto* d = std::get_if<DenseLayer>(&l)) return d->w.dim(0);
    if (auto* c = std::get_if<Conv2DLayer>(&l)) return c->w.dim(0);
    if (auto* bn = std::get_if<BatchNormLayer>(&l)) return bn->gamma.dim(0);
    return 0;
}

inline std::vector<std::size_t> parametric_layers(const Network& net) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        if (is_parametric(net.layers[i])) out.push_back(i);
    return out;
}

/// Parametric layers whose units can be removed (all but the last one).
inline std::vector<std::size_t> prunable_layers(const Network& net) {
    auto p = parametric_layers(net);
    if (!p.empty()) p.pop_back();
    return p;
}

/// Per-layer table of trainable parameter tensors (empty for activations).
inline std::vector<std::vector<Tensor*>> trainable_params(Network& net) {
    std::vector<std::vector<Tensor*>> table(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (auto* d = std::get_if<DenseLayer>(&net.layers[i]))
            table[i] = {&d->w, &d->b};
        else if (auto* c = std::get_if<Conv2DLayer>(&net.layers[i]))
            table[i] = {&c->w, &c->b};
        else if (auto* bn = std::get_if<BatchNormLayer>(&net.layers[i]))
            table[i] = {&bn->gamma, &bn->beta};
    }
    return table;
}

inline std::size_t param_count(const Network& net) {
    std::size_t n = 0;
    auto table = trainable_params(const_cast<Network&>(net));
    for (auto& layer : table)
        for (auto* t : layer) n += t->size();
    return n;
}

// ------------------------------------------------------------- activations

inline double act_forward(ActKind k, double p, double x) {
    switch (k) {
        case ActKind::ReLU: return x > 0.0 ? x : 0.0;
        case ActKind::LeakyReLU: return x > 0.0 ? x : p * x;
        case ActKind::Swish: return x / (1.0 + std::exp(-p * x));
        case ActKind::GeLU: return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
        case ActKind::Identity: return x;
    }
    return x;
}

inline double act_deriv(ActKind k, double p, double x) {
    switch (k) {
        case ActKind::ReLU: return x > 0.0 ? 1.0 : 0.0;
        case ActKind::LeakyReLU: return x > 0.0 ? 1.0 : p;
        case ActKind::Swish: {
            const double s = 1.0 / (1.0 + std::exp(-p * x));
            return s * (1.0 + p * x * (1.0 - s));
        }
        case ActKind::GeLU: {
            const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
            return cdf + x * pdf;
        }
        case ActKind::Identity: return 1.0;
    }
    return 1.0;
}

// ----------------------------------------------------------------- forward

enum class Mode { Train, Eval };

struct ForwardTrace {
    Tensor input;
    std::vector<Tensor> outputs;              // post each layer
    std::vector<Tensor> bn_xhat;              // normalized pre-affine values (BN layers)
    std::vector<std::vector<double>> bn_inv_std;  // per channel (BN layers)
    Mode mode = Mode::Eval;
};

namespace detail {

inline bool net_has_batchnorm(const Network& net) {
    for (auto& l : net.layers)
        if (std::holds_alternative<BatchNormLayer>(l)) return true;
    return false;
}

inline std::size_t flat_features(const std::vector<std::size_t>& shape) {
    std::size_t f = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) f *= shape[i];
    return f;
}

inline Tensor dense_forward(const DenseLayer& d, const Tensor& x) {
    const std::size_t n = x.dim(0);
    const std::size_t in = flat_features(x.shape());
    if (in != d.w.dim(1))
        throw std::invalid_argument("dense: input features " + std::to_string(in) +
                                    " do not match weight shape " +
                                    Tensor::shape_str(d.w.shape()));
    Tensor y({n, d.w.dim(0)});
    matmul_nt(x.data(), d.w.data(), y.data(), n, in, d.w.dim(0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d.w.dim(0); ++j) y.at2(i, j) += d.b[j];
    return y;
}

inline void conv_out_shape(const Conv2DLayer& c, const Tensor& x,
                           std::size_t& oh, std::size_t& ow) {
    if (x.ndim() != 4)
        throw std::invalid_argument("conv2d expects a 4-d input, got " +
                                    Tensor::shape_str(x.shape()));
    if (x.dim(1) != c.w.dim(1))
        throw std::invalid_argument("conv2d: input channels mismatch");
    const std::size_t kh = c.w.dim(2), kw = c.w.dim(3);
    if (x.dim(2) + 2 * c.padding < kh || x.dim(3) + 2 * c.padding < kw)
        throw std::invalid_argument("conv2d: kernel larger than padded input");
    oh = (x.dim(2) + 2 * c.padding - kh) / c.stride + 1;
    ow = (x.dim(3) + 2 * c.padding - kw) / c.stride + 1;
}

inline Tensor conv_forward(const Conv2DLayer& c, const Tensor& x) {
    std::size_t oh, ow;
    conv_out_shape(c, x, oh, ow);
    const std::size_t n = x.dim(0), ic = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oc = c.w.dim(0), kh = c.w.dim(2), kw = c.w.dim(3);
    const long pad = static_cast<long>(c.padding);
    Tensor y({n, oc, oh, ow});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < oc; ++o)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = c.b[o];
                    for (std::size_t q = 0; q < ic; ++q)
                        for (std::size_t u = 0; u < kh; ++u) {
                            const long yy = static_cast<long>(i * c.stride + u) - pad;
                            if (yy < 0 || yy >= static_cast<long>(h)) continue;
                            for (std::size_t v = 0; v < kw; ++v) {
                                const long xx = static_cast<long>(j * c.stride + v) - pad;
                                if (xx < 0 || xx >= static_cast<long>(w)) continue;
                                acc += x.at4(b, q, yy, xx) * c.w.at4(o, q, u, v);
                            }
                        }
                    y.at4(b, o, i, j) = acc;
                }
    return y;
}

// Iterates every (sample, spatial) element of one channel.
template <typename F>
inline void for_each_channel_elem(const Tensor& x, std::size_t ch, F&& f) {
    if (x.ndim() == 2) {
        for (std::size_t i = 0; i < x.dim(0); ++i) f(i * x.dim(1) + ch);
    } else {
        const std::size_t hw = x.dim(2) * x.dim(3);
        for (std::size_t i = 0; i < x.dim(0); ++i) {
            const std::size_t base = (i * x.dim(1) + ch) * hw;
            for (std::size_t s = 0; s < hw; ++s) f(base + s);
        }
    }
}

inline std::size_t bn_channels(const Tensor& x) {
    if (x.ndim() == 2) return x.dim(1);
    if (x.ndim() == 4) return x.dim(1);
    throw std::invalid_argument("batchnorm expects 2-d or 4-d input");
}

}  // namespace detail

/// Forward pass. Train mode uses batch statistics for BatchNorm and updates
/// the running statistics; eval mode reads the running statistics.
inline Tensor forward(Network& net, const Tensor& batch, Mode mode, ForwardTrace* trace = nullptr) {
    if (batch.ndim() < 2)
        throw std::invalid_argument("forward: batch must have a leading batch dimension");
    if (mode == Mode::Train && batch.dim(0) < 2 && detail::net_has_batchnorm(net))
        throw std::invalid_argument("forward: train mode requires batch size >= 2");
    if (trace) {
        trace->input = batch;
        trace->outputs.assign(net.layers.size(), Tensor{});
        trace->bn_xhat.assign(net.layers.size(), Tensor{});
        trace->bn_inv_std.assign(net.layers.size(), {});
        trace->mode = mode;
    }
    Tensor cur = batch;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        Layer& layer = net.layers[li];
        if (auto* d = std::get_if<DenseLayer>(&layer)) {
            cur = detail::dense_forward(*d, cur);
        } else if (auto* c = std::get_if<Conv2DLayer>(&layer)) {
            cur = detail::conv_forward(*c, cur);
        } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            const std::size_t ch = detail::bn_channels(cur);
            if (ch != bn->gamma.dim(0))
                throw std::invalid_argument("batchnorm: channel count mismatch");
            Tensor y(cur.shape());
            Tensor xhat(cur.shape());
            std::vector<double> inv_std(ch);
            const std::size_t m = cur.size() / ch;
            for (std::size_t q = 0; q < ch; ++q) {
                double mean, var;
                if (mode == Mode::Train) {
                    double s = 0.0;
                    detail::for_each_channel_elem(cur, q, [&](std::size_t idx) { s += cur[idx]; });
                    mean = s / static_cast<double>(m);
                    double v = 0.0;
                    detail::for_each_channel_elem(cur, q, [&](std::size_t idx) {
                        const double d2 = cur[idx] - mean;
                        v += d2 * d2;
                    });
                    var = v / static_cast<double>(m);
                    bn->run_mean[q] = kBnMomentum * bn->run_mean[q] + (1.0 - kBnMomentum) * mean;
                    bn->run_var[q] = kBnMomentum * bn->run_var[q] + (1.0 - kBnMomentum) * var;
                } else {
                    mean = bn->run_mean[q];
                    var = bn->run_var[q];
                }
                const double is = 1.0 / std::sqrt(var + kBnEps);
                inv_std[q] = is;
                const double g = bn->gamma[q], be = bn->beta[q];
                detail::for_each_channel_elem(cur, q, [&](std::size_t idx) {
                    const double xh = (cur[idx] - mean) * is;
                    xhat[idx] = xh;
                    y[idx] = g * xh + be;
                });
            }
            if (trace) {
                trace->bn_xhat[li] = std::move(xhat);
                trace->bn_inv_std[li] = std::move(inv_std);
            }
            cur = std::move(y);
        } else {
            auto& a = std::get<ActivationLayer>(layer);
            Tensor y(cur.shape());
            for (std::size_t i = 0; i < cur.size(); ++i)
                y[i] = act_forward(a.kind, a.param, cur[i]);
            cur = std::move(y);
        }
        if (trace) trace->outputs[li] = cur;
    }
    return cur;
}

// ---------------------------------------------------------------- backward

/// Per-layer gradients laid out like trainable_params.
using GradientSet = std::vector<std::vector<Tensor>>;

inline GradientSet zero_gradients(Network& net) {
    GradientSet g(net.layers.size());
    auto table = trainable_params(net);
    for (std::size_t i = 0; i < table.size(); ++i)
        for (auto* t : table[i]) g[i].emplace_back(t->shape());
    return g;
}

/// Exact reverse-mode gradients of the traced forward pass.
inline GradientSet backward(Network& net, const ForwardTrace& trace, const Tensor& loss_grad) {
    if (trace.mode != Mode::Train)
        throw std::invalid_argument("backward: trace must come from a train-mode forward");
    if (trace.outputs.size() != net.layers.size())
        throw std::invalid_argument("backward: trace does not match network");
    if (!trace.outputs.empty() && !loss_grad.same_shape(trace.outputs.back()))
        throw std::invalid_argument("backward: loss gradient shape mismatch");

    GradientSet grads = zero_gradients(net);
    Tensor g = loss_grad;
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        const Tensor& x = (i == 0) ? trace.input : trace.outputs[i - 1];
        Layer& layer = net.layers[i];
        if (auto* d = std::get_if<DenseLayer>(&layer)) {
            const std::size_t n = x.dim(0);
            const std::size_t in = detail::flat_features(x.shape());
            const std::size_t out = d->w.dim(0);
            Tensor& dw = grads[i][0];
            Tensor& db = grads[i][1];
            matmul_tn(g.data(), x.data(), dw.data(), n, out, in);  // dw(out,in) += g^T x
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < out; ++j) db[j] += g.at2(r, j);
            Tensor dx(x.shape());
            matmul_nn(g.data(), d->w.data(), dx.data(), n, out, in);
            g = std::move(dx);
        } else if (auto* c = std::get_if<Conv2DLayer>(&layer)) {
            const std::size_t n = x.dim(0), ic = x.dim(1), h = x.dim(2), w = x.dim(3);
            const std::size_t oc = c->w.dim(0), kh = c->w.dim(2), kw = c->w.dim(3);
            const std::size_t oh = g.dim(2), ow = g.dim(3);
            const long pad = static_cast<long>(c->padding);
            Tensor& dw = grads[i][0];
            Tensor& db = grads[i][1];
            Tensor dx(x.shape());
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t o = 0; o < oc; ++o)
                    for (std::size_t r = 0; r < oh; ++r)
                        for (std::size_t s = 0; s < ow; ++s) {
                            const double gv = g.at4(b, o, r, s);
                            if (gv == 0.0) continue;
                            db[o] += gv;
                            for (std::size_t q = 0; q < ic; ++q)
                                for (std::size_t u = 0; u < kh; ++u) {
                                    const long yy = static_cast<long>(r * c->stride + u) - pad;
                                    if (yy < 0 || yy >= static_cast<long>(h)) continue;
                                    for (std::size_t v = 0; v < kw; ++v) {
                                        const long xx = static_cast<long>(s * c->stride + v) - pad;
                                        if (xx < 0 || xx >= static_cast<long>(w)) continue;
                                        dw.at4(o, q, u, v) += gv * x.at4(b, q, yy, xx);
                                        dx.at4(b, q, yy, xx) += gv * c->w.at4(o, q, u, v);
                                    }
                                }
                        }
            g = std::move(dx);
        } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            const Tensor& xhat = trace.bn_xhat[i];
            const auto& inv_std = trace.bn_inv_std[i];
            const std::size_t ch = bn->gamma.dim(0);
            const std::size_t m = g.size() / ch;
            Tensor& dgamma = grads[i][0];
            Tensor& dbeta = grads[i][1];
            Tensor dx(g.shape());
            for (std::size_t q = 0; q < ch; ++q) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                detail::for_each_channel_elem(g, q, [&](std::size_t idx) {
                    sum_dy += g[idx];
                    sum_dy_xhat += g[idx] * xhat[idx];
                });
                dgamma[q] += sum_dy_xhat;
                dbeta[q] += sum_dy;
                const double gamma_is = bn->gamma[q] * inv_std[q] / static_cast<double>(m);
                detail::for_each_channel_elem(g, q, [&](std::size_t idx) {
                    dx[idx] = gamma_is * (static_cast<double>(m) * g[idx] - sum_dy -
                                          xhat[idx] * sum_dy_xhat);
                });
            }
            g = std::move(dx);
        } else {
            auto& a = std::get<ActivationLayer>(layer);
            Tensor dx(x.shape());
            for (std::size_t k = 0; k < x.size(); ++k)
                dx[k] = g[k] * act_deriv(a.kind, a.param, x[k]);
            g = std::move(dx);
        }
    }
    return grads;
}

/// Independent gradient oracle: central finite differences, step 1e-5,
/// over every scalar parameter. Small networks only.
inline GradientSet fd_gradient_oracle(const Network& net, const Tensor& batch,
                                      const std::function<double(const Tensor&)>& loss,
                                      double step = 1e-5) {
    Network work = net;
    auto table = trainable_params(work);
    GradientSet grads = zero_gradients(work);
    for (std::size_t li = 0; li < table.size(); ++li)
        for (std::size_t s = 0; s < table[li].size(); ++s) {
            Tensor* t = table[li][s];
            for (std::size_t k = 0; k < t->size(); ++k) {
                const double orig = (*t)[k];
                (*t)[k] = orig + step;
                Network up = work;
                const double lp = loss(forward(up, batch, Mode::Train));
                (*t)[k] = orig - step;
                Network dn = work;
                const double lm = loss(forward(dn, batch, Mode::Train));
                (*t)[k] = orig;
                grads[li][s][k] = (lp - lm) / (2.0 * step);
            }
        }
    return grads;
}

// ------------------------------------------------------------ unit removal

namespace detail {

inline std::vector<std::size_t> sorted_unique(const std::set<std::size_t>& s) {
    return {s.begin(), s.end()};
}

/// Drops leading-dimension groups: rows of a matrix, entries of a vector,
/// output channels of a conv kernel.
inline void drop_dim0(Tensor& t, const std::set<std::size_t>& units) {
    const std::size_t d0 = t.dim(0);
    const std::size_t row = t.size() / d0;
    std::vector<double> out;
    out.reserve((d0 - units.size()) * row);
    for (std::size_t i = 0; i < d0; ++i) {
        if (units.count(i)) continue;
        const double* src = t.data() + i * row;
        out.insert(out.end(), src, src + row);
    }
    auto shape = t.shape();
    shape[0] = d0 - units.size();
    t = Tensor(shape, std::move(out));
}

/// Drops `block`-sized groups of dim-1 indices (dense input columns,
/// conv input channels); group u covers indices [u*block, (u+1)*block).
inline void drop_dim1_blocks(Tensor& t, const std::set<std::size_t>& units, std::size_t block) {
    const std::size_t d0 = t.dim(0);
    const std::size_t d1 = t.dim(1);
    const std::size_t rest = t.size() / (d0 * d1);
    const std::size_t groups = d1 / block;
    std::vector<double> out;
    out.reserve(d0 * (d1 - units.size() * block) * rest);
    for (std::size_t i = 0; i < d0; ++i)
        for (std::size_t g = 0; g < groups; ++g) {
            if (units.count(g)) continue;
            const double* src = t.data() + (i * d1 + g * block) * rest;
            out.insert(out.end(), src, src + block * rest);
        }
    auto shape = t.shape();
    shape[1] = d1 - units.size() * block;
    t = Tensor(shape, std::move(out));
}

struct RemovalTargets {
    std::vector<std::size_t> bn_layers;       // BN layers between li and the next parametric
    std::size_t next_parametric = 0;
    std::size_t col_block = 1;                // dim-1 group width in the next layer
};

inline RemovalTargets removal_targets(const Network& net, std::size_t li) {
    RemovalTargets t;
    bool found = false;
    for (std::size_t j = li + 1; j < net.layers.size(); ++j) {
        if (std::holds_alternative<BatchNormLayer>(net.layers[j])) {
            t.bn_layers.push_back(j);
        } else if (is_parametric(net.layers[j])) {
            t.next_parametric = j;
            found = true;
            break;
        }
    }
    if (!found)
        throw std::invalid_argument("remove_units: layer has no downstream parametric layer");
    const std::size_t units = layer_units(net.layers[li]);
    if (auto* d = std::get_if<DenseLayer>(&net.layers[t.next_parametric])) {
        if (d->w.dim(1) % units != 0)
            throw std::invalid_argument("remove_units: downstream input size not divisible by unit count");
        t.col_block = d->w.dim(1) / units;  // >1 when a conv feeds a flattened dense layer
    }
    return t;
}

}  // namespace detail

/// Structurally removes output units of the parametric layer at `layer_index`:
/// its outgoing rows/channels, interposed BatchNorm entries, and the next
/// parametric layer's matching input columns/channels.
inline void remove_units(Network& net, std::size_t layer_index,
                         const std::set<std::size_t>& unit_indices) {
    if (layer_index >= net.layers.size() || !is_parametric(net.layers[layer_index]))
        throw std::invalid_argument("remove_units: not a parametric layer");
    if (unit_indices.empty()) return;
    const std::size_t units = layer_units(net.layers[layer_index]);
    for (auto u : unit_indices)
        if (u >= units) throw std::invalid_argument("remove_units: unit index out of range");
    if (unit_indices.size() >= units)
        throw std::invalid_argument("remove_units: refusing to remove every unit of a layer");

    const auto targets = detail::removal_targets(net, layer_index);

    if (auto* d = std::get_if<DenseLayer>(&net.layers[layer_index])) {
        detail::drop_dim0(d->w, unit_indices);
        detail::drop_dim0(d->b, unit_indices);
    } else {
        auto& c = std::get<Conv2DLayer>(net.layers[layer_index]);
        detail::drop_dim0(c.w, unit_indices);
        detail::drop_dim0(c.b, unit_indices);
    }
    for (auto j : targets.bn_layers) {
        auto& bn = std::get<BatchNormLayer>(net.layers[j]);
        detail::drop_dim0(bn.gamma, unit_indices);
        detail::drop_dim0(bn.beta, unit_indices);
        detail::drop_dim0(bn.run_mean, unit_indices);
        detail::drop_dim0(bn.run_var, unit_indices);
    }
    if (auto* d = std::get_if<DenseLayer>(&net.layers[targets.next_parametric])) {
        detail::drop_dim1_blocks(d->w, unit_indices, targets.col_block);
    } else {
        auto& c = std::get<Conv2DLayer>(net.layers[targets.next_parametric]);
        detail::drop_dim1_blocks(c.w, unit_indices, 1);
    }
}

/// Applies the same structural shrink to an external per-layer tensor table
/// (optimizer buffers) laid out like trainable_params. `net_before` is the
/// network structure prior to the removal.
inline void shrink_param_table(const Network& net_before, std::size_t layer_index,
                               const std::set<std::size_t>& unit_indices,
                               std::vector<std::vector<Tensor>>& table) {
    if (unit_indices.empty()) return;
    const auto targets = detail::removal_targets(net_before, layer_index);
    for (auto& t : table[layer_index]) detail::drop_dim0(t, unit_indices);
    for (auto j : targets.bn_layers)
        for (auto& t : table[j]) detail::drop_dim0(t, unit_indices);
    auto& next = table[targets.next_parametric];
    const bool next_dense = std::holds_alternative<DenseLayer>(net_before.layers[targets.next_parametric]);
    detail::drop_dim1_blocks(next[0], unit_indices, next_dense ? targets.col_block : 1);
}

/// Trainable parameters removed when pruning one unit of `layer_index`:
/// incoming slice + bias + BatchNorm gamma/beta + outgoing slice.
inline std::size_t unit_param_footprint(const Network& net, std::size_t layer_index) {
    const auto targets = detail::removal_targets(net, layer_index);
    std::size_t n = 0;
    if (auto* d = std::get_if<DenseLayer>(&net.layers[layer_index])) {
        n += d->w.dim(1) + 1;
    } else {
        auto& c = std::get<Conv2DLayer>(net.layers[layer_index]);
        n += c.w.dim(1) * c.w.dim(2) * c.w.dim(3) + 1;
    }
    n += 2 * targets.bn_layers.size();
    if (auto* d = std::get_if<DenseLayer>(&net.layers[targets.next_parametric])) {
        n += d->w.dim(0) * targets.col_block;
    } else {
        auto& c = std::get<Conv2DLayer>(net.layers[targets.next_parametric]);
        n += c.w.dim(0) * c.w.dim(2) * c.w.dim(3);
    }
    return n;
}

// ------------------------------------------------------------ construction

/// Gaussian init with std sqrt(2/(fan_in+fan_out)); biases zero.
inline void init_params(Network& net, Rng& rng) {
    for (auto& layer : net.layers) {
        if (auto* d = std::get_if<DenseLayer>(&layer)) {
            const double std_dev = std::sqrt(2.0 / static_cast<double>(d->w.dim(0) + d->w.dim(1)));
            std::normal_distribution<double> dist(0.0, std_dev);
            for (auto& v : d->w.vec()) v = dist(rng);
            d->b.fill(0.0);
        } else if (auto* c = std::get_if<Conv2DLayer>(&layer)) {
            const std::size_t rf = c->w.dim(2) * c->w.dim(3);
            const double fan_in = static_cast<double>(c->w.dim(1) * rf);
            const double fan_out = static_cast<double>(c->w.dim(0) * rf);
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
            for (auto& v : c->w.vec()) v = dist(rng);
            c->b.fill(0.0);
        }
    }
    auto table = trainable_params(net);
    for (auto& lt : table)
        for (auto* t : lt) t->require_finite("network parameters");
}

inline Layer make_dense(std::size_t in, std::size_t out) {
    return DenseLayer{Tensor({out, in}), Tensor({out})};
}

inline Layer make_conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                         std::size_t stride = 1, std::size_t padding = 0) {
    Conv2DLayer c{Tensor({out_ch, in_ch, kh, kw}), Tensor({out_ch}), stride, padding};
    return c;
}

inline Layer make_batchnorm(std::size_t channels) {
    BatchNormLayer bn{Tensor({channels}), Tensor({channels}), Tensor({channels}), Tensor({channels})};
    bn.gamma.fill(1.0);
    bn.run_var.fill(1.0);
    return bn;
}

inline Layer make_activation(ActKind kind, double param = 0.0) {
    if (kind == ActKind::LeakyReLU && param == 0.0) param = 0.05;
    if (kind == ActKind::Swish && param == 0.0) param = 1.0;
    return ActivationLayer{kind, param};
}

/// Plain MLP: Dense [+BatchNorm] +Activation per hidden layer, Dense head.
inline Network make_mlp(std::size_t input, const std::vector<std::size_t>& hidden,
                        std::size_t output, ActKind act, double act_param,
                        bool batchnorm, Rng& rng) {
    Network net;
    std::size_t in = input;
    for (auto h : hidden) {
        net.layers.push_back(make_dense(in, h));
        if (batchnorm) net.layers.push_back(make_batchnorm(h));
        net.layers.push_back(make_activation(act, act_param));
        in = h;
    }
    net.layers.push_back(make_dense(in, output));
    init_params(net, rng);
    return net;
}

// ---------------------------------------------------------------- snapshot

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
inline void write_tensor(std::ostream& os, const Tensor& t) {
    write_u32(os, static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
}
inline Tensor read_tensor(std::istream& is) {
    const std::uint32_t nd = read_u32(is);
    std::vector<std::size_t> shape(nd);
    for (auto& d : shape) d = read_u32(is);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    return t;
}

}  // namespace detail

/// Flat binary snapshot: magic "DEMP", version, layer table, f64 blobs.
inline void save_snapshot(const Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_snapshot: cannot open " + path);
    os.write("DEMP", 4);
    detail::write_u32(os, 1);  // version
    detail::write_u32(os, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& layer : net.layers) {
        if (auto* d = std::get_if<DenseLayer>(&layer)) {
            detail::write_u32(os, 0);
            detail::write_tensor(os, d->w);
            detail::write_tensor(os, d->b);
        } else if (auto* c = std::get_if<Conv2DLayer>(&layer)) {
            detail::write_u32(os, 1);
            detail::write_u32(os, static_cast<std::uint32_t>(c->stride));
            detail::write_u32(os, static_cast<std::uint32_t>(c->padding));
            detail::write_tensor(os, c->w);
            detail::write_tensor(os, c->b);
        } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            detail::write_u32(os, 2);
            detail::write_tensor(os, bn->gamma);
            detail::write_tensor(os, bn->beta);
            detail::write_tensor(os, bn->run_mean);
            detail::write_tensor(os, bn->run_var);
        } else {
            const auto& a = std::get<ActivationLayer>(layer);
            detail::write_u32(os, 3);
            detail::write_u32(os, static_cast<std::uint32_t>(a.kind));
            os.write(reinterpret_cast<const char*>(&a.param), sizeof(double));
        }
    }
    if (!os) throw std::runtime_error("save_snapshot: write failed for " + path);
}

inline Network load_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_snapshot: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "DEMP")
        throw std::runtime_error("load_snapshot: bad magic in " + path);
    const std::uint32_t version = detail::read_u32(is);
    if (version != 1) throw std::runtime_error("load_snapshot: unsupported version");
    const std::uint32_t n = detail::read_u32(is);
    Network net;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t tag = detail::read_u32(is);
        if (tag == 0) {
            DenseLayer d;
            d.w = detail::read_tensor(is);
            d.b = detail::read_tensor(is);
            net.layers.emplace_back(std::move(d));
        } else if (tag == 1) {
            Conv2DLayer c;
            c.stride = detail::read_u32(is);
            c.padding = detail::read_u32(is);
            c.w = detail::read_tensor(is);
            c.b = detail::read_tensor(is);
            net.layers.emplace_back(std::move(c));
        } else if (tag == 2) {
            BatchNormLayer bn;
            bn.gamma = detail::read_tensor(is);
            bn.beta = detail::read_tensor(is);
            bn.run_mean = detail::read_tensor(is);
            bn.run_var = detail::read_tensor(is);
            net.layers.emplace_back(std::move(bn));
        } else if (tag == 3) {
            ActivationLayer a;
            a.kind = static_cast<ActKind>(detail::read_u32(is));
            is.read(reinterpret_cast<char*>(&a.param), sizeof(double));
            net.layers.emplace_back(a);
        } else {
            throw std::runtime_error("load_snapshot: unknown layer tag");
        }
        if (!is) throw std::runtime_error("load_snapshot: truncated file " + path);
    }
    return net;
}

}  // namespace demp
