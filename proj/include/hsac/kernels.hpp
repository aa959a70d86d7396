#pragma once

#include "hsac/tensor.hpp"

#include <cmath>

namespace hsac::kernels {

// Shared by the tape ops and the plain evaluation path so both produce
// bit-identical values for the same inputs.

inline void add_bias_rows(Tensor& x, const Tensor& b) {
    const int r = x.rows(), c = x.cols();
    if (b.size() != c) throw std::invalid_argument("add_bias: bias length != columns");
    for (int i = 0; i < r; ++i) {
        double* row = x.v.data() + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j) row[j] += b.v[j];
    }
}

inline void relu_inplace(Tensor& x) {
    for (double& v : x.v) v = v > 0.0 ? v : 0.0;
}

// row-wise softmax with max subtraction; stable for logits up to ~1e308
inline void softmax_rows_inplace(Tensor& x) {
    const int r = x.rows(), c = x.cols();
    for (int i = 0; i < r; ++i) {
        double* row = x.v.data() + static_cast<size_t>(i) * c;
        double m = row[0];
        for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - m);
            z += row[j];
        }
        const double inv = 1.0 / z;
        for (int j = 0; j < c; ++j) row[j] *= inv;
    }
}

// row-wise log-softmax, computed directly (never log(softmax(x)))
inline void log_softmax_rows_inplace(Tensor& x) {
    const int r = x.rows(), c = x.cols();
    for (int i = 0; i < r; ++i) {
        double* row = x.v.data() + static_cast<size_t>(i) * c;
        double m = row[0];
        for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(row[j] - m);
        const double lse = m + std::log(z);
        for (int j = 0; j < c; ++j) row[j] -= lse;
    }
}

// x * ln(x) with the entropy convention 0 * ln 0 = 0
inline double xlogx(double x) { return x == 0.0 ? 0.0 : x * std::log(x); }

} // namespace hsac::kernels
