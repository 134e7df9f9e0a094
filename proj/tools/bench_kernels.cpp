// Compares the serial reference kernels against the OpenMP variants; the two
// must agree bit-for-bit, so this is purely a throughput comparison.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sloth/kernels.hpp"
#include "sloth/rng.hpp"

using Clock = std::chrono::steady_clock;

static double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

static void bench_matmul(int m, int k, int n, int reps) {
  sloth::Rng rng(42);
  std::vector<double> a(static_cast<std::size_t>(m) * k), b(static_cast<std::size_t>(k) * n),
      c(static_cast<std::size_t>(m) * n);
  for (auto& v : a) v = rng.gaussian();
  for (auto& v : b) v = rng.gaussian();

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) sloth::kernels::matmul_serial(a.data(), b.data(), c.data(), m, k, n);
  const double ts = seconds_since(t0);

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) sloth::kernels::matmul(a.data(), b.data(), c.data(), m, k, n);
  const double tp = seconds_since(t0);

  const double gmacs = 1e-9 * reps * static_cast<double>(m) * k * n;
  std::printf("matmul %4dx%4dx%4d  serial %7.2f ms (%5.2f GMAC/s)  omp %7.2f ms (%5.2f GMAC/s)  speedup %.2fx\n",
              m, k, n, ts * 1e3, gmacs / ts, tp * 1e3, gmacs / tp, ts / tp);
}

static void bench_softmax(int m, int n, int reps) {
  sloth::Rng rng(7);
  std::vector<double> x(static_cast<std::size_t>(m) * n), y(x.size());
  for (auto& v : x) v = rng.gaussian();

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    sloth::kernels::softmax_rows_serial(x.data(), y.data(), m, n, nullptr);
  const double ts = seconds_since(t0);

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) sloth::kernels::softmax_rows(x.data(), y.data(), m, n, nullptr);
  const double tp = seconds_since(t0);

  std::printf("softmax %5dx%4d          serial %7.2f ms                 omp %7.2f ms                 speedup %.2fx\n",
              m, n, ts * 1e3, tp * 1e3, ts / tp);
}

int main() {
#ifdef _OPENMP
  std::printf("openmp enabled, max threads %d\n", omp_get_max_threads());
#else
  std::printf("openmp disabled\n");
#endif
  bench_matmul(64, 64, 64, 200);
  bench_matmul(256, 256, 256, 20);
  bench_matmul(729, 64, 576, 20);
  bench_matmul(512, 512, 512, 4);
  bench_softmax(512, 512, 200);
  bench_softmax(4096, 729, 20);
  return 0;
}
