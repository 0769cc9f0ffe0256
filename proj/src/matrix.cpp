#include "txsim/matrix.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace txsim {

Matrix identity(size_t n) {
  Matrix m(n, n);
  for (size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Matrix random_matrix(size_t r, size_t c, DetRng& rng, double scale) {
  Matrix m(r, c);
  for (auto& v : m.data) v = rng.normal() * scale;
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, "max_abs_diff: shape mismatch");
  double d = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) d = std::max(d, std::fabs(a.data[i] - b.data[i]));
  return d;
}

namespace kernels {

static void check_mm(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw Error(ErrorCode::ShapeMismatch, "matmul: " + std::to_string(a.rows) + "x" +
                                              std::to_string(a.cols) + " * " +
                                              std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

Matrix matmul_serial(const Matrix& a, const Matrix& b) {
  check_mm(a, b);
  Matrix out(a.rows, b.cols);
  for (size_t i = 0; i < a.rows; ++i) {
    for (size_t k = 0; k < a.cols; ++k) {
      const double av = a.at(i, k);
      if (av == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      double* orow = &out.data[i * out.cols];
      for (size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_mm(a, b);
  Matrix out(a.rows, b.cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long ii = 0; ii < static_cast<long long>(a.rows); ++ii) {
    const size_t i = static_cast<size_t>(ii);
    for (size_t k = 0; k < a.cols; ++k) {
      const double av = a.at(i, k);
      if (av == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      double* orow = &out.data[i * out.cols];
      for (size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

void softmax_rows_serial(Matrix& m) {
  for (size_t i = 0; i < m.rows; ++i) {
    double* row = &m.data[i * m.cols];
    double mx = row[0];
    for (size_t j = 1; j < m.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (size_t j = 0; j < m.cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (size_t j = 0; j < m.cols; ++j) row[j] /= sum;
  }
}

void softmax_rows(Matrix& m) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long ii = 0; ii < static_cast<long long>(m.rows); ++ii) {
    const size_t i = static_cast<size_t>(ii);
    double* row = &m.data[i * m.cols];
    double mx = row[0];
    for (size_t j = 1; j < m.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (size_t j = 0; j < m.cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (size_t j = 0; j < m.cols; ++j) row[j] /= sum;
  }
}

void layernorm_rows_serial(Matrix& m, double eps) {
  for (size_t i = 0; i < m.rows; ++i) {
    double* row = &m.data[i * m.cols];
    double mean = 0.0;
    for (size_t j = 0; j < m.cols; ++j) mean += row[j];
    mean /= static_cast<double>(m.cols);
    double var = 0.0;
    for (size_t j = 0; j < m.cols; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(m.cols);
    const double r = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < m.cols; ++j) row[j] = (row[j] - mean) * r;
  }
}

void layernorm_rows(Matrix& m, double eps) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long ii = 0; ii < static_cast<long long>(m.rows); ++ii) {
    const size_t i = static_cast<size_t>(ii);
    double* row = &m.data[i * m.cols];
    double mean = 0.0;
    for (size_t j = 0; j < m.cols; ++j) mean += row[j];
    mean /= static_cast<double>(m.cols);
    double var = 0.0;
    for (size_t j = 0; j < m.cols; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(m.cols);
    const double r = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < m.cols; ++j) row[j] = (row[j] - mean) * r;
  }
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, "hadamard: shape mismatch");
  Matrix out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, "add: shape mismatch");
  Matrix out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Matrix scale(const Matrix& a, double c) {
  Matrix out = a;
  for (auto& v : out.data) v *= c;
  return out;
}

}  // namespace kernels

}  // namespace txsim
