#pragma once

#include <cstddef>

namespace sloth::kernels {

// Dense f64 inner loops. Each kernel has a serial reference next to the
// OpenMP variant; the parallel ones split work by output row and keep the
// per-cell accumulation order identical to the serial loop, so results are
// bit-for-bit equal. The tensor layer calls the parallel variants; the
// serial ones stay exported for tests and the kernel benchmark.

// c[m x n] = a[m x k] * b[k x n], row-major, accumulation over k ascending.
void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// Row softmax with max-subtraction. limits, when non-null, gives the prefix
// length per row that participates; entries beyond the prefix are set to 0.
void softmax_rows_serial(const double* x, double* y, int m, int n, const int* limits);
void softmax_rows(const double* x, double* y, int m, int n, const int* limits);

// y = gelu(x) (tanh approximation), elementwise over len values.
void gelu_serial(const double* x, double* y, std::size_t len);
void gelu(const double* x, double* y, std::size_t len);

double gelu_scalar(double x);
double gelu_grad_scalar(double x);

}  // namespace sloth::kernels
