#include "sloth/kernels.hpp"

#include <cmath>

namespace sloth::kernels {

void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int t = 0; t < k; ++t) {
      const double av = arow[t];
      const double* brow = b + static_cast<std::size_t>(t) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * k * n > 16384)
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int t = 0; t < k; ++t) {
      const double av = arow[t];
      const double* brow = b + static_cast<std::size_t>(t) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

static inline void softmax_row(const double* x, double* y, int n, int limit) {
  double mx = x[0];
  for (int j = 1; j < limit; ++j) mx = x[j] > mx ? x[j] : mx;
  double sum = 0.0;
  for (int j = 0; j < limit; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < limit; ++j) y[j] *= inv;
  for (int j = limit; j < n; ++j) y[j] = 0.0;
}

void softmax_rows_serial(const double* x, double* y, int m, int n, const int* limits) {
  for (int i = 0; i < m; ++i) {
    const int limit = limits ? limits[i] : n;
    softmax_row(x + static_cast<std::size_t>(i) * n, y + static_cast<std::size_t>(i) * n, n, limit);
  }
}

void softmax_rows(const double* x, double* y, int m, int n, const int* limits) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * n > 4096)
  for (int i = 0; i < m; ++i) {
    const int limit = limits ? limits[i] : n;
    softmax_row(x + static_cast<std::size_t>(i) * n, y + static_cast<std::size_t>(i) * n, n, limit);
  }
}

namespace {
constexpr double kGeluCoef = 0.044715;
constexpr double kSqrt2OverPi = 0.7978845608028654;  // sqrt(2/pi)
}  // namespace

double gelu_scalar(double x) {
  const double u = kSqrt2OverPi * (x + kGeluCoef * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad_scalar(double x) {
  const double u = kSqrt2OverPi * (x + kGeluCoef * x * x * x);
  const double t = std::tanh(u);
  const double sech2 = 1.0 - t * t;
  const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoef * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * sech2 * du;
}

void gelu_serial(const double* x, double* y, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) y[i] = gelu_scalar(x[i]);
}

void gelu(const double* x, double* y, std::size_t len) {
#pragma omp parallel for schedule(static) if (len > 8192)
  for (long long i = 0; i < static_cast<long long>(len); ++i) y[i] = gelu_scalar(x[i]);
}

}  // namespace sloth::kernels
