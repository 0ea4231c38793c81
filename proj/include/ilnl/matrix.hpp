#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ilnl/errors.hpp"

namespace ilnl {

/// Dense row-major matrix of doubles. Feature batches are n rows x d columns.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) return Matrix{};
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_)
                throw data_error("row " + std::to_string(i) + " has " +
                                 std::to_string(rows[i].size()) + " columns, expected " +
                                 std::to_string(m.cols_));
            for (std::size_t j = 0; j < m.cols_; ++j) m(i, j) = rows[i][j];
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    Matrix take_rows(const std::vector<std::size_t>& idx) const {
        Matrix out(idx.size(), cols_);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < cols_; ++j) out(i, j) = (*this)(idx[i], j);
        return out;
    }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C += A * B. Plain ikj loops; the j loop vectorizes.
inline void matmul_add(const Matrix& a, const Matrix& b, Matrix& c) {
    const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.row_ptr(i);
        double* crow = c.row_ptr(i);
        for (std::size_t k = 0; k < m; ++k) {
            const double aik = arow[k];
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
        }
    }
}

// C += A^T * B, where A is n x m and B is n x p (C is m x p).
inline void matmul_at_b_add(const Matrix& a, const Matrix& b, Matrix& c) {
    const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
    for (std::size_t k = 0; k < n; ++k) {
        const double* arow = a.row_ptr(k);
        const double* brow = b.row_ptr(k);
        for (std::size_t i = 0; i < m; ++i) {
            const double aki = arow[i];
            double* crow = c.row_ptr(i);
            for (std::size_t j = 0; j < p; ++j) crow[j] += aki * brow[j];
        }
    }
}

// C += A * B^T, where A is n x m and B is p x m (C is n x p).
inline void matmul_a_bt_add(const Matrix& a, const Matrix& b, Matrix& c) {
    const std::size_t n = a.rows(), m = a.cols(), p = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.row_ptr(i);
        double* crow = c.row_ptr(i);
        for (std::size_t j = 0; j < p; ++j) {
            const double* brow = b.row_ptr(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

} // namespace ilnl
