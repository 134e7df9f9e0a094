#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "oracles.hpp"
#include "sloth/kernels.hpp"
#include "sloth/rng.hpp"

using namespace sloth;

TEST_CASE("parallel matmul is bit-identical to the serial reference") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + static_cast<int>(rng.next_u64() % 96);
    const int k = 1 + static_cast<int>(rng.next_u64() % 96);
    const int n = 1 + static_cast<int>(rng.next_u64() % 96);
    std::vector<double> a(static_cast<std::size_t>(m) * k), b(static_cast<std::size_t>(k) * n);
    for (auto& v : a) v = rng.gaussian();
    for (auto& v : b) v = rng.gaussian();
    std::vector<double> cs(static_cast<std::size_t>(m) * n), cp(cs.size());
    kernels::matmul_serial(a.data(), b.data(), cs.data(), m, k, n);
    kernels::matmul(a.data(), b.data(), cp.data(), m, k, n);
    for (std::size_t i = 0; i < cs.size(); ++i) REQUIRE(cs[i] == cp[i]);
  }
}

TEST_CASE("parallel softmax and gelu match their serial references") {
  Rng rng(12);
  const int m = 100, n = 80;
  std::vector<double> x(static_cast<std::size_t>(m) * n);
  for (auto& v : x) v = rng.gaussian(0.0, 3.0);
  std::vector<double> ys(x.size()), yp(x.size());
  kernels::softmax_rows_serial(x.data(), ys.data(), m, n, nullptr);
  kernels::softmax_rows(x.data(), yp.data(), m, n, nullptr);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(ys[i] == yp[i]);

  std::vector<int> limits(m);
  for (int i = 0; i < m; ++i) limits[i] = 1 + i % n;
  kernels::softmax_rows_serial(x.data(), ys.data(), m, n, limits.data());
  kernels::softmax_rows(x.data(), yp.data(), m, n, limits.data());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(ys[i] == yp[i]);

  kernels::gelu_serial(x.data(), ys.data(), x.size());
  kernels::gelu(x.data(), yp.data(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(ys[i] == yp[i]);
}

TEST_CASE("matmul kernel equals the naive triple-loop oracle bit-for-bit up to dim 16") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + static_cast<int>(rng.next_u64() % 16);
    const int k = 1 + static_cast<int>(rng.next_u64() % 16);
    const int n = 1 + static_cast<int>(rng.next_u64() % 16);
    oracle::Mat a(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(k)));
    oracle::Mat b(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(n)));
    std::vector<double> aflat, bflat;
    for (auto& row : a)
      for (auto& v : row) {
        v = rng.gaussian();
        aflat.push_back(v);
      }
    for (auto& row : b)
      for (auto& v : row) {
        v = rng.gaussian();
        bflat.push_back(v);
      }
    std::vector<double> c(static_cast<std::size_t>(m) * n);
    kernels::matmul(aflat.data(), bflat.data(), c.data(), m, k, n);
    const oracle::Mat expect = oracle::matmul(a, b);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        REQUIRE(c[static_cast<std::size_t>(i) * n + j] ==
                expect[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
  }
}

TEST_CASE("prefix-limited softmax zeroes everything past the limit") {
  std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> y(4);
  const int limit = 2;
  kernels::softmax_rows(x.data(), y.data(), 1, 4, &limit);
  CHECK(y[2] == 0.0);
  CHECK(y[3] == 0.0);
  CHECK(y[0] + y[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y[1] / y[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
}
