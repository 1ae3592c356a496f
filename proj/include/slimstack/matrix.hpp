#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace slimstack {

// Dense row-major matrix of 64-bit floats. The single carrier type for
// weights, calibration inputs, Hessians and everything derived from them.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("Matrix: data length does not match rows*cols");
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline bool all_finite(const Matrix& m) {
    for (double v : m.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

inline void require_finite(const Matrix& m, const std::string& what) {
    if (!all_finite(m)) {
        throw std::runtime_error("non-finite value in " + what);
    }
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions do not match");
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row_ptr(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* bk = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("matrix subtraction: shape mismatch");
    }
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] - b.data()[i];
    return c;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (double& v : c.data()) v *= s;
    return c;
}

inline double frobenius_norm_sq(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return s;
}

inline double frobenius_norm(const Matrix& m) { return std::sqrt(frobenius_norm_sq(m)); }

inline double max_abs(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s = std::max(s, std::fabs(v));
    return s;
}

// Largest elementwise deviation of `a` from reference `b`, relative to the
// entry magnitude with a floor tied to the reference's overall scale so that
// structural zeros do not blow the ratio up.
inline double max_rel_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("max_rel_diff: shape mismatch");
    }
    const double floor = 1e-12 * max_abs(b) + 1e-300;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ref = std::fabs(b.data()[i]);
        const double dev = std::fabs(a.data()[i] - b.data()[i]) / std::max(ref, floor);
        worst = std::max(worst, dev);
    }
    return worst;
}

// Deletes one row and one column; used when shrinking inverse Hessians.
inline Matrix delete_row_col(const Matrix& m, std::size_t p) {
    if (m.rows() != m.cols() || p >= m.rows()) {
        throw std::invalid_argument("delete_row_col: index out of range");
    }
    Matrix r(m.rows() - 1, m.cols() - 1);
    for (std::size_t i = 0, ri = 0; i < m.rows(); ++i) {
        if (i == p) continue;
        for (std::size_t j = 0, rj = 0; j < m.cols(); ++j) {
            if (j == p) continue;
            r(ri, rj) = m(i, j);
            ++rj;
        }
        ++ri;
    }
    return r;
}

}  // namespace slimstack
