#include "shortcutlab/kernels.hpp"

#include <atomic>

#include <omp.h>

namespace scl::kernels {

namespace {
std::atomic<int> g_max_threads{0};  // 0 = defer to the OpenMP runtime

int threads_for(std::size_t work) {
  int limit = g_max_threads.load(std::memory_order_relaxed);
  if (limit <= 0) limit = omp_get_max_threads();
  if (work < 16384) return 1;  // below this the fork/join overhead dominates
  return limit;
}
}  // namespace

void set_max_threads(int n) { g_max_threads.store(n, std::memory_order_relaxed); }

int max_threads() {
  int limit = g_max_threads.load(std::memory_order_relaxed);
  return limit > 0 ? limit : omp_get_max_threads();
}

// Row-of-C parallel, saxpy inner loops: streams contiguously and vectorizes
// without relying on float reassociation.
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  int nth = threads_for(m * k * n);
#pragma omp parallel for num_threads(nth) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      double ap = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += ap * bp[j];
    }
  }
}

namespace {
// Four stride-4 partial sums per dot product; the fixed combine order keeps
// results reproducible while still giving the vectorizer something to chew on.
inline double dot4(const double* a, const double* b, std::size_t k) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    s0 += a[p] * b[p];
    s1 += a[p + 1] * b[p + 1];
    s2 += a[p + 2] * b[p + 2];
    s3 += a[p + 3] * b[p + 3];
  }
  for (; p < k; ++p) s0 += a[p] * b[p];
  return (s0 + s1) + (s2 + s3);
}
}  // namespace

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  int nth = threads_for(m * k * n);
#pragma omp parallel for num_threads(nth) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = dot4(ai, b + j * k, k);
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
               std::size_t n) {
  int nth = threads_for(m * k * n);
#pragma omp parallel for num_threads(nth) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      double ap = a[p * m + static_cast<std::size_t>(i)];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += ap * bp[j];
    }
  }
}

void transpose(const double* a, double* b, std::size_t m, std::size_t n) {
  int nth = threads_for(m * n * 4);
#pragma omp parallel for num_threads(nth) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) b[j * m + static_cast<std::size_t>(i)] = ai[j];
  }
}

void add_bias_rows(const double* x, const double* bias, double* y, std::size_t m, std::size_t n) {
  int nth = threads_for(m * n * 2);
#pragma omp parallel for num_threads(nth) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const double* xi = x + static_cast<std::size_t>(i) * n;
    double* yi = y + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) yi[j] = xi[j] + bias[j];
  }
}

void colsum(const double* dy, double* out, std::size_t m, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) out[j] = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = dy + i * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += row[j];
  }
}

void relu_forward(const double* x, double* y, std::size_t n) {
  int nth = threads_for(n * 2);
#pragma omp parallel for num_threads(nth) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    y[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
}

void relu_backward_accum(const double* x, const double* dy, double* dx, std::size_t n) {
  int nth = threads_for(n * 2);
#pragma omp parallel for num_threads(nth) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

void add_accum(const double* src, double* dst, std::size_t n) {
  int nth = threads_for(n * 2);
#pragma omp parallel for num_threads(nth) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    dst[i] += src[i];
  }
}

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void transpose(const double* a, double* b, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) b[j * m + i] = a[i * n + j];
  }
}

void add_bias_rows(const double* x, const double* bias, double* y, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x[i * n + j] + bias[j];
  }
}

void colsum(const double* dy, double* out, std::size_t m, std::size_t n) {
  kernels::colsum(dy, out, m, n);
}

void relu_forward(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_accum(const double* x, const double* dy, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

}  // namespace serial

}  // namespace scl::kernels
