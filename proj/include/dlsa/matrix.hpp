#ifndef DLSA_MATRIX_HPP
#define DLSA_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dlsa/errors.hpp"

namespace dlsa {

/// Dense row-major matrix of doubles. The universal numeric carrier.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                             " != rows*cols " + std::to_string(rows_ * cols_));
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Matrix& operator*=(double s) {
        for (double& x : data_) x *= s;
        return *this;
    }

    bool operator==(const Matrix& o) const = default;

private:
    void require_same_shape(const Matrix& o, const char* where) const {
        if (!same_shape(o))
            throw ShapeError(std::string("Matrix::") + where + ": shape mismatch");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

using Vector = std::vector<double>;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

// Extended-precision accumulation keeps the mean of identical rows exact.
inline Vector column_mean(const Matrix& m) {
    if (m.rows() == 0) throw EmptyInputError("column_mean: empty matrix");
    std::vector<long double> acc(m.cols(), 0.0L);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) acc[j] += m(i, j);
    Vector mean(m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j)
        mean[j] = static_cast<double>(acc[j] / static_cast<long double>(m.rows()));
    return mean;
}

inline double frobenius_norm_sq(const Vector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Smallest column index achieving the row maximum (ties break low).
inline std::size_t argmax_row(const Matrix& m, std::size_t row) {
    if (row >= m.rows()) throw IndexError("argmax_row: row out of range");
    if (m.cols() == 0) throw IndexError("argmax_row: zero columns");
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.cols(); ++j)
        if (m(row, j) > m(row, best)) best = j;
    return best;
}

}  // namespace dlsa

#endif  // DLSA_MATRIX_HPP
