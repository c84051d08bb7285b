#pragma once

#include <cstddef>

namespace scl::kernels {

/// Upper bound on OpenMP threads used by the parallel kernels. Defaults to the
/// OpenMP runtime's limit. The study runner sets this to 1 when it parallelizes
/// across whole runs instead.
void set_max_threads(int n);
int max_threads();

// Parallel kernels. Work is partitioned over output rows and every output
// element is accumulated by a single thread in a fixed order, so results are
// bitwise identical for any thread count.

/// C (m x n) = A (m x k) * B (k x n)
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);

/// C (m x n) = A (m x k) * B^T, with B stored (n x k)
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);

/// C (m x n) = A^T * B, with A stored (k x m) and B stored (k x n)
void matmul_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
               std::size_t n);

/// B (n x m) = A^T with A stored (m x n)
void transpose(const double* a, double* b, std::size_t m, std::size_t n);

/// Y (m x n) = X + rowwise broadcast of bias (n)
void add_bias_rows(const double* x, const double* bias, double* y, std::size_t m, std::size_t n);

/// bias_grad (n) = column sums of dY (m x n)
void colsum(const double* dy, double* out, std::size_t m, std::size_t n);

void relu_forward(const double* x, double* y, std::size_t n);

/// dx (accumulated) += dy where x > 0
void relu_backward_accum(const double* x, const double* dy, double* dx, std::size_t n);

void add_accum(const double* src, double* dst, std::size_t n);

// Serial reference implementations: the naive loops the parallel kernels are
// checked against in the unit tests and timed against in the benchmark.
namespace serial {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);
void matmul_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
               std::size_t n);
void transpose(const double* a, double* b, std::size_t m, std::size_t n);
void add_bias_rows(const double* x, const double* bias, double* y, std::size_t m, std::size_t n);
void colsum(const double* dy, double* out, std::size_t m, std::size_t n);
void relu_forward(const double* x, double* y, std::size_t n);
void relu_backward_accum(const double* x, const double* dy, double* dx, std::size_t n);

}  // namespace serial

}  // namespace scl::kernels
