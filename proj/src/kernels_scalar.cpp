#include "farmare/kernels.hpp"

namespace farmare::kernels::scalar {

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void gemm(const GemmArgs& g) {
  for (std::size_t i = 0; i < g.m; ++i) {
    double* crow = g.c + i * g.ldc;
    if (g.beta == 0.0) {
      for (std::size_t j = 0; j < g.n; ++j) crow[j] = 0.0;
    } else if (g.beta != 1.0) {
      for (std::size_t j = 0; j < g.n; ++j) crow[j] *= g.beta;
    }
  }
  if (g.m == 0 || g.n == 0 || g.k == 0 || g.alpha == 0.0) return;

  auto a_at = [&](std::size_t i, std::size_t p) {
    return g.trans_a == Trans::no ? g.a[i * g.lda + p] : g.a[p * g.lda + i];
  };

  if (g.trans_b == Trans::no) {
    // i-p-j order keeps the inner loop contiguous over B and C rows.
    for (std::size_t i = 0; i < g.m; ++i) {
      double* crow = g.c + i * g.ldc;
      for (std::size_t p = 0; p < g.k; ++p) {
        const double av = g.alpha * a_at(i, p);
        const double* brow = g.b + p * g.ldb;
        for (std::size_t j = 0; j < g.n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < g.m; ++i) {
      double* crow = g.c + i * g.ldc;
      for (std::size_t j = 0; j < g.n; ++j) {
        const double* brow = g.b + j * g.ldb;
        double acc = 0.0;
        for (std::size_t p = 0; p < g.k; ++p) acc += a_at(i, p) * brow[p];
        crow[j] += g.alpha * acc;
      }
    }
  }
}

}  // namespace farmare::kernels::scalar
