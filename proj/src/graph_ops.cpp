#include <cmath>

#include "txsim/graph.hpp"

namespace txsim {

static constexpr double kPi = 3.14159265358979323846264338327950288;

Matrix build_transform_matrix(TransformKind kind, uint32_t n) {
  if (n < 1) throw Error(ErrorCode::InvalidConfig, "transform size must be >= 1");
  Matrix v(n, n);
  if (kind == TransformKind::DFT) {
    // Real part of the DFT matrix (roots of unity).
    for (uint32_t j = 0; j < n; ++j)
      for (uint32_t k = 0; k < n; ++k)
        v.at(j, k) = std::cos(2.0 * kPi * static_cast<double>(j) * static_cast<double>(k) /
                              static_cast<double>(n));
  } else {
    // Orthonormal DCT-II.
    const double s0 = std::sqrt(1.0 / static_cast<double>(n));
    const double s = std::sqrt(2.0 / static_cast<double>(n));
    for (uint32_t j = 0; j < n; ++j)
      for (uint32_t k = 0; k < n; ++k)
        v.at(j, k) = (j == 0 ? s0 : s) *
                     std::cos(kPi * (2.0 * k + 1.0) * static_cast<double>(j) /
                              (2.0 * static_cast<double>(n)));
  }
  return v;
}

Matrix conv_as_matmul(const std::vector<double>& kernel, uint32_t n) {
  const int k = static_cast<int>(kernel.size());
  if (k < 1 || k % 2 == 0) throw Error(ErrorCode::InvalidConfig, "kernel length must be odd");
  if (static_cast<uint32_t>(k) > n)
    throw Error(ErrorCode::KernelTooLarge, "kernel longer than sequence");
  const int half = k / 2;
  Matrix b(n, n);
  for (int r = 0; r < static_cast<int>(n); ++r) {
    for (int m = 0; m < k; ++m) {
      const int c = r + m - half;
      if (c >= 0 && c < static_cast<int>(n)) b.at(r, c) = kernel[m];
    }
  }
  return b;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_prime(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
  return cdf + x * pdf;
}

static double act_prime(ActFn f, double x) {
  switch (f) {
    case ActFn::Identity: return 1.0;
    case ActFn::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case ActFn::GeLU: return gelu_prime(x);
  }
  return 1.0;
}

Matrix backward_matmul(const Matrix& delta_next, const Matrix& w_next, const Matrix& preact,
                       ActFn fprime) {
  Matrix wt = kernels::transpose(w_next);
  Matrix delta = kernels::matmul(wt, delta_next);
  if (!delta.same_shape(preact))
    throw Error(ErrorCode::ShapeMismatch, "backward_matmul: pre-activation shape mismatch");
  for (size_t i = 0; i < delta.data.size(); ++i) delta.data[i] *= act_prime(fprime, preact.data[i]);
  return delta;
}

Matrix weight_update(const Matrix& delta, const Matrix& x_prev, double alpha, const Matrix& w) {
  Matrix grad = kernels::matmul(delta, kernels::transpose(x_prev));
  if (!grad.same_shape(w)) throw Error(ErrorCode::ShapeMismatch, "weight_update: shape mismatch");
  Matrix out = w;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= alpha * grad.data[i];
  return out;
}

std::vector<double> conv_kernel_grad(const Matrix& delta, const Matrix& x_prev, int k) {
  if (!delta.same_shape(x_prev))
    throw Error(ErrorCode::ShapeMismatch, "conv_kernel_grad: shape mismatch");
  const int n = static_cast<int>(delta.rows);
  const int half = k / 2;
  std::vector<double> grad(static_cast<size_t>(k), 0.0);
  for (int m = 0; m < k; ++m) {
    double acc = 0.0;
    for (int r = 0; r < n; ++r) {
      const int src = r + m - half;
      if (src < 0 || src >= n) continue;
      for (size_t c = 0; c < delta.cols; ++c) acc += delta.at(r, c) * x_prev.at(src, c);
    }
    grad[m] = acc;
  }
  return grad;
}

std::vector<double> backward_conv(const Matrix& delta, const Matrix& x_prev, double alpha,
                                  const std::vector<double>& kernel) {
  auto grad = conv_kernel_grad(delta, x_prev, static_cast<int>(kernel.size()));
  std::vector<double> out = kernel;
  for (size_t i = 0; i < out.size(); ++i) out[i] -= alpha * grad[i];
  return out;
}

}  // namespace txsim
