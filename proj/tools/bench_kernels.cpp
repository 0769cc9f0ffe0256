// Compares the serial reference kernels against the OpenMP variants and the
// brute-force space enumeration. Build and run:
//   cmake --build build --target txsim_bench && ./build/tools/txsim_bench

#include <chrono>
#include <cstdio>

#include "txsim/matrix.hpp"
#include "txsim/scheduler.hpp"
#include "txsim/spaces.hpp"

using namespace txsim;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename F>
double timed(const char* name, F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const double dt = seconds_since(t0);
  std::printf("%-28s %8.3f s\n", name, dt);
  return dt;
}

}  // namespace

int main() {
  DetRng rng(42);
  const size_t n = 512;
  Matrix a = random_matrix(n, n, rng);
  Matrix b = random_matrix(n, n, rng);

  Matrix serial_out, parallel_out;
  const double t_serial = timed("matmul serial", [&] { serial_out = kernels::matmul_serial(a, b); });
  const double t_parallel = timed("matmul openmp", [&] { parallel_out = kernels::matmul(a, b); });
  std::printf("matmul max |diff|: %.3e (speedup %.2fx)\n", max_abs_diff(serial_out, parallel_out),
              t_serial / t_parallel);

  Matrix s1 = random_matrix(2048, 512, rng), s2 = s1;
  const double t_sm_s = timed("softmax serial", [&] { kernels::softmax_rows_serial(s1); });
  const double t_sm_p = timed("softmax openmp", [&] { kernels::softmax_rows(s2); });
  std::printf("softmax max |diff|: %.3e (speedup %.2fx)\n", max_abs_diff(s1, s2), t_sm_s / t_sm_p);

  AcceleratorSpace space;
  uint64_t count_serial = 0, count_parallel = 0;
  const double t_en_s =
      timed("enumerate serial", [&] { count_serial = enumerate_accelerator_space_serial(space); });
  const double t_en_p =
      timed("enumerate openmp", [&] { count_parallel = enumerate_accelerator_space(space); });
  std::printf("enumerate: %llu vs %llu (speedup %.2fx)\n",
              static_cast<unsigned long long>(count_serial),
              static_cast<unsigned long long>(count_parallel), t_en_s / t_en_p);

  Matrix c_ref = kernels::matmul_serial(a, b);
  Matrix c_tiled;
  timed("tiled matmul (x=32)", [&] { c_tiled = execute_tiled_matmul(a, b, 1, 32); });
  std::printf("tiled vs dense max |diff|: %.3e\n", max_abs_diff(c_ref, c_tiled));
  return 0;
}
