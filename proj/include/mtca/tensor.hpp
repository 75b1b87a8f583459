// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtca {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatView = Eigen::Map<RowMat>;
using ConstMatView = Eigen::Map<const RowMat>;
using VecView = Eigen::Map<Eigen::VectorXd>;
using ConstVecView = Eigen::Map<const Eigen::VectorXd>;

/// Dense row-major tensor of 64-bit floats. Rank and dimensions are dynamic;
/// training math runs entirely on this type.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_numel(shape_))
            throw std::invalid_argument("tensor data length does not match shape");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> span() { return data_; }
    std::span<const double> span() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Same data, new shape (element count must match).
    Tensor reshaped(std::vector<std::size_t> shape) const {
        Tensor out(std::move(shape), data_);
        return out;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape_.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape_[i]);
        return s + ")";
    }

private:
    static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
        if (shape.empty()) throw std::invalid_argument("tensor rank must be >= 1");
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw std::invalid_argument("tensor dimensions must be > 0");
            n *= d;
        }
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// 2-D Eigen view of a tensor's buffer with an explicit (rows, cols) split.
inline MatView mat_view(Tensor& t, std::size_t rows, std::size_t cols) {
    if (rows * cols != t.size()) throw std::invalid_argument("mat_view: size mismatch");
    return MatView(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline ConstMatView mat_view(const Tensor& t, std::size_t rows, std::size_t cols) {
    if (rows * cols != t.size()) throw std::invalid_argument("mat_view: size mismatch");
    return ConstMatView(t.data(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
}

/// Views a rank-2 tensor with its own dimensions.
inline MatView mat_view(Tensor& t) {
    if (t.rank() != 2) throw std::invalid_argument("mat_view: rank-2 tensor required");
    return mat_view(t, t.dim(0), t.dim(1));
}

inline ConstMatView mat_view(const Tensor& t) {
    if (t.rank() != 2) throw std::invalid_argument("mat_view: rank-2 tensor required");
    return mat_view(t, t.dim(0), t.dim(1));
}

/// C = A (m x k) * B (k x n).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: shape mismatch " + a.shape_str() + " x " +
                                    b.shape_str());
    Tensor c({a.dim(0), b.dim(1)});
    mat_view(c).noalias() = mat_view(a) * mat_view(b);
    return c;
}

/// Swaps the first two axes of a rank-3 tensor, e.g. (batch, seq, f) -> (seq, batch, f).
inline Tensor swap_axes01(const Tensor& t) {
    if (t.rank() != 3) throw std::invalid_argument("swap_axes01: rank-3 tensor required");
    const std::size_t d0 = t.dim(0), d1 = t.dim(1), d2 = t.dim(2);
    Tensor out({d1, d0, d2});
    for (std::size_t i = 0; i < d0; ++i)
        for (std::size_t j = 0; j < d1; ++j) {
            const double* src = t.data() + (i * d1 + j) * d2;
            double* dst = out.data() + (j * d0 + i) * d2;
            std::copy(src, src + d2, dst);
        }
    return out;
}

} // namespace mtca
