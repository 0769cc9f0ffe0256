#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "txsim/matrix.hpp"
#include "txsim/scheduler.hpp"

using namespace txsim;

TEST_CASE("parallel kernels agree exactly with the serial reference") {
  DetRng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const size_t m = 17 + rng.index(40), k = 9 + rng.index(40), n = 5 + rng.index(40);
    Matrix a = random_matrix(m, k, rng);
    Matrix b = random_matrix(k, n, rng);
    Matrix s = kernels::matmul_serial(a, b);
    Matrix p = kernels::matmul(a, b);
    CHECK(max_abs_diff(s, p) == 0.0);
  }

  Matrix m1 = random_matrix(33, 21, rng);
  Matrix m2 = m1;
  kernels::softmax_rows_serial(m1);
  kernels::softmax_rows(m2);
  CHECK(max_abs_diff(m1, m2) == 0.0);

  Matrix l1 = random_matrix(33, 21, rng);
  Matrix l2 = l1;
  kernels::layernorm_rows_serial(l1, kLayerNormEps);
  kernels::layernorm_rows(l2, kLayerNormEps);
  CHECK(max_abs_diff(l1, l2) == 0.0);
}

TEST_CASE("matmul rejects non-conformable shapes") {
  Matrix a(3, 4), b(5, 2);
  CHECK_THROWS_AS(kernels::matmul(a, b), Error);
}

TEST_CASE("transpose, hadamard, add, scale basics") {
  DetRng rng(2);
  Matrix a = random_matrix(7, 5, rng);
  Matrix t = kernels::transpose(a);
  CHECK(t.rows == 5);
  CHECK(t.at(2, 3) == a.at(3, 2));

  Matrix h = kernels::hadamard(a, a);
  CHECK(h.at(1, 1) == doctest::Approx(a.at(1, 1) * a.at(1, 1)));
  Matrix s = kernels::scale(a, -2.0);
  CHECK(s.at(0, 0) == doctest::Approx(-2.0 * a.at(0, 0)));
  Matrix sum = kernels::add(a, s);
  CHECK(sum.at(0, 0) == doctest::Approx(-a.at(0, 0)));
}

TEST_CASE("tiled matmul reproduces the dense product including ragged shapes") {
  DetRng rng(3);
  // Every spatial tile size against ragged and aligned shapes.
  for (uint32_t x : {8u, 16u, 32u}) {
    for (auto [p, q, r] : {std::tuple<size_t, size_t, size_t>{33, 17, 29},
                           {64, 64, 64},
                           {32, 33, 31},
                           {1, 1, 1}}) {
      Matrix a = random_matrix(p, q, rng);
      Matrix b = random_matrix(q, r, rng);
      Matrix dense = kernels::matmul_serial(a, b);
      Matrix tiled = execute_tiled_matmul(a, b, 1, x);
      CHECK(max_abs_diff(dense, tiled) < 1e-9);
    }
  }
}
