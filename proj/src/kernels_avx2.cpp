// Compiled with -mavx2 -mfma; only reached when CPUID reports both.
#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "farmare/kernels.hpp"

namespace farmare::kernels::avx2 {
namespace {

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 8;
constexpr std::size_t kMc = 96;
constexpr std::size_t kKc = 256;
constexpr std::size_t kNc = 1024;

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

void pack_a(const GemmArgs& g, std::size_t i0, std::size_t mc, std::size_t p0, std::size_t kc,
            double* dst) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t rows = std::min(kMr, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      double* out = dst + p * kMr;
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t i = i0 + ir + r;
        const std::size_t q = p0 + p;
        out[r] = g.trans_a == Trans::no ? g.a[i * g.lda + q] : g.a[q * g.lda + i];
      }
      for (std::size_t r = rows; r < kMr; ++r) out[r] = 0.0;
    }
    dst += kMr * kc;
  }
}

void pack_b(const GemmArgs& g, std::size_t p0, std::size_t kc, std::size_t j0, std::size_t nc,
            double* dst) {
  for (std::size_t jr = 0; jr < nc; jr += kNr) {
    const std::size_t cols = std::min(kNr, nc - jr);
    for (std::size_t p = 0; p < kc; ++p) {
      double* out = dst + p * kNr;
      const std::size_t q = p0 + p;
      if (g.trans_b == Trans::no) {
        const double* src = g.b + q * g.ldb + j0 + jr;
        if (cols == kNr) {
          _mm256_storeu_pd(out, _mm256_loadu_pd(src));
          _mm256_storeu_pd(out + 4, _mm256_loadu_pd(src + 4));
          continue;
        }
        for (std::size_t c = 0; c < cols; ++c) out[c] = src[c];
      } else {
        for (std::size_t c = 0; c < cols; ++c) out[c] = g.b[(j0 + jr + c) * g.ldb + q];
      }
      for (std::size_t c = cols; c < kNr; ++c) out[c] = 0.0;
    }
    dst += kNr * kc;
  }
}

// acc(6x8) = sum_p A[:,p] B[p,:]; C += alpha * acc on the valid rows x cols.
void micro_kernel(std::size_t kc, const double* a, const double* b, double alpha, double* c,
                  std::size_t ldc, std::size_t rows, std::size_t cols) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  __m256d c40 = _mm256_setzero_pd(), c41 = _mm256_setzero_pd();
  __m256d c50 = _mm256_setzero_pd(), c51 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b);
    const __m256d b1 = _mm256_loadu_pd(b + 4);
    __m256d av = _mm256_broadcast_sd(a + 0);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + 1);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
    av = _mm256_broadcast_sd(a + 4);
    c40 = _mm256_fmadd_pd(av, b0, c40);
    c41 = _mm256_fmadd_pd(av, b1, c41);
    av = _mm256_broadcast_sd(a + 5);
    c50 = _mm256_fmadd_pd(av, b0, c50);
    c51 = _mm256_fmadd_pd(av, b1, c51);
    a += kMr;
    b += kNr;
  }
  const __m256d va = _mm256_set1_pd(alpha);
  if (rows == kMr && cols == kNr) {
    const __m256d acc[kMr][2] = {{c00, c01}, {c10, c11}, {c20, c21},
                                 {c30, c31}, {c40, c41}, {c50, c51}};
    for (std::size_t r = 0; r < kMr; ++r) {
      double* crow = c + r * ldc;
      _mm256_storeu_pd(crow, _mm256_fmadd_pd(va, acc[r][0], _mm256_loadu_pd(crow)));
      _mm256_storeu_pd(crow + 4, _mm256_fmadd_pd(va, acc[r][1], _mm256_loadu_pd(crow + 4)));
    }
    return;
  }
  alignas(32) double tile[kMr * kNr];
  _mm256_store_pd(tile + 0, c00);
  _mm256_store_pd(tile + 4, c01);
  _mm256_store_pd(tile + 8, c10);
  _mm256_store_pd(tile + 12, c11);
  _mm256_store_pd(tile + 16, c20);
  _mm256_store_pd(tile + 20, c21);
  _mm256_store_pd(tile + 24, c30);
  _mm256_store_pd(tile + 28, c31);
  _mm256_store_pd(tile + 32, c40);
  _mm256_store_pd(tile + 36, c41);
  _mm256_store_pd(tile + 40, c50);
  _mm256_store_pd(tile + 44, c51);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t cc = 0; cc < cols; ++cc) c[r * ldc + cc] += alpha * tile[r * kNr + cc];
  }
}

}  // namespace

double dot(const double* x, const double* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), a1);
    a2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8), a2);
    a3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12), _mm256_loadu_pd(y + i + 12), a3);
  }
  for (; i + 4 <= n; i += 4) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
  }
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3)));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

void gemm(const GemmArgs& g) {
  for (std::size_t i = 0; i < g.m; ++i) {
    double* crow = g.c + i * g.ldc;
    if (g.beta == 0.0) {
      std::fill(crow, crow + g.n, 0.0);
    } else if (g.beta != 1.0) {
      scale(g.beta, crow, g.n);
    }
  }
  if (g.m == 0 || g.n == 0 || g.k == 0 || g.alpha == 0.0) return;

  thread_local std::vector<double> packed_a;
  thread_local std::vector<double> packed_b;

  for (std::size_t jc = 0; jc < g.n; jc += kNc) {
    const std::size_t nc = std::min(kNc, g.n - jc);
    const std::size_t nc_pad = (nc + kNr - 1) / kNr * kNr;
    for (std::size_t pc = 0; pc < g.k; pc += kKc) {
      const std::size_t kc = std::min(kKc, g.k - pc);
      packed_b.resize(nc_pad * kc);
      pack_b(g, pc, kc, jc, nc, packed_b.data());
      for (std::size_t ic = 0; ic < g.m; ic += kMc) {
        const std::size_t mc = std::min(kMc, g.m - ic);
        const std::size_t mc_pad = (mc + kMr - 1) / kMr * kMr;
        packed_a.resize(mc_pad * kc);
        pack_a(g, ic, mc, pc, kc, packed_a.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          const std::size_t cols = std::min(kNr, nc - jr);
          const double* bp = packed_b.data() + (jr / kNr) * kNr * kc;
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const std::size_t rows = std::min(kMr, mc - ir);
            const double* ap = packed_a.data() + (ir / kMr) * kMr * kc;
            micro_kernel(kc, ap, bp, g.alpha, g.c + (ic + ir) * g.ldc + jc + jr, g.ldc, rows,
                         cols);
          }
        }
      }
    }
  }
}

}  // namespace farmare::kernels::avx2
