#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mwdn {

// All numerics are 64-bit; a Tensor1 is just an owned sequence.
using Tensor1 = std::vector<double>;

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Row-major dense matrix.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    bool same_shape(const Tensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    // y = A x
    Tensor1 matvec(const Tensor1& x) const {
        require(x.size() == cols_, "matvec: vector length " + std::to_string(x.size()) +
                                       " does not match matrix cols " + std::to_string(cols_));
        Tensor1 y(rows_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r) {
            const double* row = data_.data() + r * cols_;
            double acc = 0.0;
            for (std::size_t c = 0; c < cols_; ++c) acc += row[c] * x[c];
            y[r] = acc;
        }
        return y;
    }

    // y = A^T x
    Tensor1 matvec_transposed(const Tensor1& x) const {
        require(x.size() == rows_, "matvec_transposed: vector length mismatch");
        Tensor1 y(cols_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r) {
            const double* row = data_.data() + r * cols_;
            const double xr = x[r];
            for (std::size_t c = 0; c < cols_; ++c) y[c] += row[c] * xr;
        }
        return y;
    }

    // A += scale * u v^T
    void add_outer(const Tensor1& u, const Tensor1& v, double scale = 1.0) {
        require(u.size() == rows_ && v.size() == cols_, "add_outer: shape mismatch");
        for (std::size_t r = 0; r < rows_; ++r) {
            double* row = data_.data() + r * cols_;
            const double ur = scale * u[r];
            for (std::size_t c = 0; c < cols_; ++c) row[c] += ur * v[c];
        }
    }

    void add_scaled(const Tensor2& o, double scale) {
        require(same_shape(o), "add_scaled: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * o.data_[i];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    double frobenius_sq_distance(const Tensor2& o) const {
        require(same_shape(o), "frobenius distance: shape mismatch");
        double acc = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i) {
            const double d = data_[i] - o.data_[i];
            acc += d * d;
        }
        return acc;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void axpy(Tensor1& y, const Tensor1& x, double a) {
    require(y.size() == x.size(), "axpy: length mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline bool all_finite(const Tensor1& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Tensor2& m) {
    for (double x : m.raw())
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace mwdn
