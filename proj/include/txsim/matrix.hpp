#pragma once

#include <cstddef>
#include <vector>

#include "txsim/common.hpp"

namespace txsim {

// Dense row-major matrix of doubles. Functional values are always computed
// in 64-bit floating point; fixed-point widths only affect cost accounting.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
  size_t size() const { return rows * cols; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

Matrix identity(size_t n);
Matrix random_matrix(size_t r, size_t c, DetRng& rng, double scale = 1.0);
double max_abs_diff(const Matrix& a, const Matrix& b);

namespace kernels {

// Serial reference implementations. Kept deliberately simple; the parallel
// variants below must agree with these bit-for-bit (tests enforce it).
Matrix matmul_serial(const Matrix& a, const Matrix& b);
void softmax_rows_serial(Matrix& m);
void layernorm_rows_serial(Matrix& m, double eps);

// OpenMP variants. Each output element is owned by exactly one thread and
// row reductions stay within a row, so results are identical to the serial
// kernels for any thread count.
Matrix matmul(const Matrix& a, const Matrix& b);
void softmax_rows(Matrix& m);
void layernorm_rows(Matrix& m, double eps);

Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);

}  // namespace kernels

}  // namespace txsim
