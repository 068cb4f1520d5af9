#include "ocad/matrix.hpp"

#include <cmath>

#include "ocad/errors.hpp"

namespace ocad {

bool Matrix::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix Matrix::from_row(std::span<const double> values) {
    Matrix m(1, values.size());
    for (std::size_t j = 0; j < values.size(); ++j) m.data[j] = values[j];
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols, 0.0);
    // ikj order: contiguous inner loop, and the k-accumulation order per output
    // element matches a plain dot product, keeping results bit-stable across
    // batch sizes.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* orow = out.data.data() + i * out.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw DimensionError("matmul_at_b: row counts differ");
    Matrix out(a.cols, b.cols, 0.0);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.data.data() + k * a.cols;
        const double* brow = b.data.data() + k * b.cols;
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = out.data.data() + i * out.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
        }
    }
    return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw DimensionError("matmul_a_bt: column counts differ");
    Matrix out(a.rows, b.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* orow = out.data.data() + i * out.cols;
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.data.data() + j * b.cols;
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            orow[j] = acc;
        }
    }
    return out;
}

}  // namespace ocad
