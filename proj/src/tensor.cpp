#include "farmare/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace farmare {

void matmul(const Matrix& a, kernels::Trans ta, const Matrix& b, kernels::Trans tb, Matrix& out,
            double alpha, double beta) {
  using kernels::Trans;
  const std::size_t m = ta == Trans::no ? a.rows() : a.cols();
  const std::size_t k = ta == Trans::no ? a.cols() : a.rows();
  const std::size_t kb = tb == Trans::no ? b.rows() : b.cols();
  const std::size_t n = tb == Trans::no ? b.cols() : b.rows();
  if (k != kb || out.rows() != m || out.cols() != n) {
    throw std::invalid_argument("matmul: shape mismatch");
  }
  kernels::GemmArgs g;
  g.trans_a = ta;
  g.trans_b = tb;
  g.m = m;
  g.n = n;
  g.k = k;
  g.alpha = alpha;
  g.a = a.data();
  g.lda = a.cols();
  g.b = b.data();
  g.ldb = b.cols();
  g.beta = beta;
  g.c = out.data();
  g.ldc = out.cols();
  kernels::gemm(g);
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) kernels::axpy(1.0, bias.data(), m.row(r).data(), m.cols());
}

void accumulate_column_sums(const Matrix& m, Matrix& acc) {
  for (std::size_t r = 0; r < m.rows(); ++r) kernels::axpy(1.0, m.row(r).data(), acc.data(), m.cols());
}

double norm(std::span<const double> v) { return std::sqrt(kernels::dot(v.data(), v.data(), v.size())); }

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine: zero-norm vector");
  return kernels::dot(a.data(), b.data(), a.size()) / (na * nb);
}

}  // namespace farmare
