#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ocad {

// Dense row-major matrix of doubles. The whole pipeline is 64-bit so the
// gradient checks can run at tight tolerances.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }

    bool all_finite() const;

    static Matrix from_row(std::span<const double> values);
};

// out = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// out = a^T * b
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
// out = a * b^T
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

}  // namespace ocad
