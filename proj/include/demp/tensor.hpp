#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace demp {

/// Dense n-dimensional array of doubles, row-major.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size())
            throw std::invalid_argument("Tensor: shape/data size mismatch");
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void require_finite(const char* what) const {
        if (!all_finite())
            throw std::invalid_argument(std::string("non-finite values in ") + what);
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    static std::string shape_str(const std::vector<std::size_t>& s) {
        std::string out = "(";
        for (std::size_t i = 0; i < s.size(); ++i)
            out += (i ? "," : "") + std::to_string(s[i]);
        return out + ")";
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// y(m,n) += x(m,k) * w(k,n) ; ikj order.
inline void matmul_nn(const double* x, const double* w, double* y,
                      std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x + i * k;
        double* yi = y + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = xi[p];
            if (a == 0.0) continue;
            const double* wp = w + p * n;
            for (std::size_t j = 0; j < n; ++j) yi[j] += a * wp[j];
        }
    }
}

// y(m,n) += x(m,k) * w(n,k)^T ; transposes w once, then runs the ikj kernel.
// Accumulation stays sequential in k per output element, so summands that are
// exactly zero can be dropped without changing any rounded result.
inline void matmul_nt(const double* x, const double* w, double* y,
                      std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> wt(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) wt[p * n + j] = w[j * k + p];
    matmul_nn(x, wt.data(), y, m, k, n);
}

// y(k,n) += x(m,k)^T * w(m,n) ; accumulates outer products row by row.
inline void matmul_tn(const double* x, const double* w, double* y,
                      std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x + i * k;
        const double* wi = w + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = xi[p];
            if (a == 0.0) continue;
            double* yp = y + p * n;
            for (std::size_t j = 0; j < n; ++j) yp[j] += a * wi[j];
        }
    }
}

}  // namespace demp
