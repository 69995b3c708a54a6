#pragma once

// Dense double-precision kernels used by every layer. Each kernel has a
// portable scalar reference and, on x86-64, an AVX2/FMA variant. The variant
// is chosen once at startup from CPUID and can be overridden with the
// FARMARE_KERNELS environment variable ("scalar" or "avx2") or set_isa().

#include <cstddef>
#include <string_view>

namespace farmare::kernels {

enum class Isa { scalar, avx2 };

enum class Trans { no, yes };

/// Row-major C = alpha * op(A) * op(B) + beta * C, with op(A) M x K and op(B) K x N.
struct GemmArgs {
  Trans trans_a = Trans::no;
  Trans trans_b = Trans::no;
  std::size_t m = 0, n = 0, k = 0;
  double alpha = 1.0;
  const double* a = nullptr;
  std::size_t lda = 0;
  const double* b = nullptr;
  std::size_t ldb = 0;
  double beta = 0.0;
  double* c = nullptr;
  std::size_t ldc = 0;
};

struct KernelTable {
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*scale)(double alpha, double* x, std::size_t n);
  void (*gemm)(const GemmArgs& args);
};

bool isa_available(Isa isa);
Isa active_isa();
void set_isa(Isa isa);
std::string_view isa_name(Isa isa);

/// The table for a specific variant, regardless of which one is active.
const KernelTable& table(Isa isa);

double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
void gemm(const GemmArgs& args);

namespace scalar {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
void gemm(const GemmArgs& args);
}  // namespace scalar

#if defined(FARMARE_HAVE_AVX2)
namespace avx2 {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
void gemm(const GemmArgs& args);
}  // namespace avx2
#endif

}  // namespace farmare::kernels
