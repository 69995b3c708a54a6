#include "farmare/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace farmare::kernels {
namespace {

constexpr KernelTable kScalar{&scalar::dot, &scalar::axpy, &scalar::scale, &scalar::gemm};
#if defined(FARMARE_HAVE_AVX2)
constexpr KernelTable kAvx2{&avx2::dot, &avx2::axpy, &avx2::scale, &avx2::gemm};
#endif

bool cpu_has_avx2() {
#if defined(FARMARE_HAVE_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  if (const char* env = std::getenv("FARMARE_KERNELS")) {
    const std::string v = env;
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && cpu_has_avx2()) return Isa::avx2;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

Isa& current() {
  static Isa isa = detect();
  return isa;
}

}  // namespace

bool isa_available(Isa isa) { return isa == Isa::scalar || cpu_has_avx2(); }

Isa active_isa() { return current(); }

void set_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw std::runtime_error("kernel variant not available on this CPU: " +
                             std::string(isa_name(isa)));
  }
  current() = isa;
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const KernelTable& table(Isa isa) {
#if defined(FARMARE_HAVE_AVX2)
  if (isa == Isa::avx2) return kAvx2;
#endif
  (void)isa;
  return kScalar;
}

double dot(const double* x, const double* y, std::size_t n) {
  return table(current()).dot(x, y, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table(current()).axpy(alpha, x, y, n);
}
void scale(double alpha, double* x, std::size_t n) { table(current()).scale(alpha, x, n); }
void gemm(const GemmArgs& args) { table(current()).gemm(args); }

}  // namespace farmare::kernels
