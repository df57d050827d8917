#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "demp/tensor.hpp"

namespace demp {

/// Mean softmax cross-entropy over the batch; returns loss and d(loss)/d(logits).
inline std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits,
                                                       const std::vector<int>& labels) {
    if (logits.ndim() != 2 || logits.dim(0) != labels.size())
        throw std::invalid_argument("softmax_cross_entropy: logits/labels mismatch");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor grad(logits.shape());
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * k;
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
        const double logz = std::log(z) + mx;
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw std::invalid_argument("softmax_cross_entropy: label out of range");
        loss += (logz - row[y]) * inv_n;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(row[j] - logz);
            grad.at2(i, j) = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * inv_n;
        }
    }
    return {loss, std::move(grad)};
}

inline std::size_t argmax_row(const Tensor& logits, std::size_t i) {
    const std::size_t k = logits.dim(1);
    const double* row = logits.data() + i * k;
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

}  // namespace demp
