#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mllmcl/error.hpp"

namespace mllmcl {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<Vec>& rows) {
        if (rows.empty()) return {};
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_)
                fail(ErrorKind::dimension_mismatch, "ragged rows in Matrix::from_rows");
            for (std::size_t j = 0; j < m.cols_; ++j) m(i, j) = rows[i][j];
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Matrix& operator+=(const Matrix& other) {
        require_same_shape(other, "Matrix::operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    /// this += s * other
    void add_scaled(const Matrix& other, double s) {
        require_same_shape(other, "Matrix::add_scaled");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
    }

    void require_same_shape(const Matrix& other, const char* where) const {
        if (!same_shape(other))
            fail(ErrorKind::shape_mismatch,
                 std::string(where) + ": " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                     " vs " + std::to_string(other.rows_) + "x" + std::to_string(other.cols_));
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix operator*(double s, Matrix m) {
    m *= s;
    return m;
}

/// Four interleaved partial sums, combined in a fixed order.
inline double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        for (std::size_t k = 0; k < 4; ++k) acc[k] += a[i + k] * b[i + k];
    for (; i < n; ++i) acc[0] += a[i] * b[i];
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void require_finite(std::span<const double> v, const char* what) {
    if (!all_finite(v)) fail(ErrorKind::invalid_config, std::string(what) + " contains NaN or Inf");
}

/// out(i, :) = W * x(i, :) + b, where W is out_dim x in_dim.
inline Matrix affine_rows(const Matrix& x, const Matrix& weight, std::span<const double> bias) {
    if (x.cols() != weight.cols() || bias.size() != weight.rows())
        fail(ErrorKind::shape_mismatch, "affine_rows: incompatible shapes");
    Matrix out(x.rows(), weight.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        for (std::size_t o = 0; o < weight.rows(); ++o) out(r, o) = bias[o] + dot(weight.row(o), in);
    }
    return out;
}

}  // namespace mllmcl
