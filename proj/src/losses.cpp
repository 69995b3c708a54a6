#include "farmare/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace farmare::losses {

using kernels::Trans;

double triplet_term(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin) {
  if (margin < 0.0) throw std::invalid_argument("triplet margin must be non-negative");
  const double sp = cosine(anchor, positive);
  const double sn = cosine(anchor, negative);
  return std::max(0.0, margin + sn - sp);
}

namespace {

Matrix normalized_rows(const Matrix& m, std::vector<double>& norms, const char* what) {
  Matrix out = m;
  norms.resize(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    norms[r] = norm(m.row(r));
    if (norms[r] == 0.0) {
      throw std::domain_error(std::string("ranking loss: zero-norm ") + what + " embedding at row " + std::to_string(r));
    }
    kernels::scale(1.0 / norms[r], out.row(r).data(), out.cols());
  }
  return out;
}

// d(x/|x|) backprop: dx = (du - u (u . du)) / |x|.
void normalize_backward(const Matrix& unit, const std::vector<double>& norms, Matrix& grad) {
  for (std::size_t r = 0; r < unit.rows(); ++r) {
    double* g = grad.row(r).data();
    const double* u = unit.row(r).data();
    const double proj = kernels::dot(u, g, unit.cols());
    kernels::axpy(-proj, u, g, unit.cols());
    kernels::scale(1.0 / norms[r], g, unit.cols());
  }
}

}  // namespace

RankingResult ranking_loss(const Matrix& scenes, const Matrix& queries, double margin, bool with_grad) {
  const std::size_t n = scenes.rows();
  if (n < 2) throw std::invalid_argument("ranking loss needs a batch of at least 2 pairs");
  if (queries.rows() != n || queries.cols() != scenes.cols()) {
    throw std::invalid_argument("ranking loss: scene and query batches differ in shape");
  }
  if (margin < 0.0) throw std::invalid_argument("triplet margin must be non-negative");

  std::vector<double> ns, nq;
  const Matrix a = normalized_rows(scenes, ns, "scene");
  const Matrix d = normalized_rows(queries, nq, "query");
  Matrix sim(n, n);  // sim(i, j) = s(a_i, d_j)
  matmul(a, Trans::no, d, Trans::yes, sim);

  RankingResult res;
  res.min_hinge_distance = std::numeric_limits<double>::infinity();
  Matrix g(n, n);  // dL / dsim
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      // scene anchor a_i, positive d_i, negative d_j
      const double h1 = margin + sim(i, j) - sim(i, i);
      // query anchor d_i, positive a_i, negative a_j
      const double h2 = margin + sim(j, i) - sim(i, i);
      res.min_hinge_distance = std::min({res.min_hinge_distance, std::abs(h1), std::abs(h2)});
      if (h1 > 0.0) {
        sum += h1;
        g(i, j) += 1.0;
        g(i, i) -= 1.0;
      }
      if (h2 > 0.0) {
        sum += h2;
        g(j, i) += 1.0;
        g(i, i) -= 1.0;
      }
    }
  }
  const double scale = 1.0 / (2.0 * static_cast<double>(n) * static_cast<double>(n - 1));
  res.loss = sum * scale;
  if (!with_grad) return res;

  res.d_scenes.resize(n, scenes.cols());
  res.d_queries.resize(n, scenes.cols());
  matmul(g, Trans::no, d, Trans::no, res.d_scenes, scale);
  matmul(g, Trans::yes, a, Trans::no, res.d_queries, scale);
  normalize_backward(a, ns, res.d_scenes);
  normalize_backward(d, nq, res.d_queries);
  return res;
}

ClassificationResult classification_loss(const Matrix& probabilities, std::span<const std::uint8_t> tags,
                                         bool with_grad) {
  const std::size_t rows = probabilities.rows();
  if (rows == 0) throw std::invalid_argument("classification loss over an empty batch");
  if (tags.size() != rows) throw std::invalid_argument("classification loss: one tag per row required");
  ClassificationResult res;
  double sum = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (tags[r] >= probabilities.cols()) {
      throw std::invalid_argument("classification loss: tag index " + std::to_string(tags[r]) + " out of range");
    }
    sum -= std::log(std::max(probabilities(r, tags[r]), kProbabilityFloor));
  }
  res.loss = sum / static_cast<double>(rows);
  if (with_grad) {
    res.d_logits = probabilities;
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      res.d_logits(r, tags[r]) -= 1.0;
      kernels::scale(inv, res.d_logits.row(r).data(), res.d_logits.cols());
    }
  }
  return res;
}

LossValue combined_loss(double ranking, double classification) {
  if (ranking < 0.0 || classification < 0.0) throw std::invalid_argument("loss components must be non-negative");
  return {ranking, classification, 0.5 * (ranking + classification), true};
}

LossValue ranking_only(double ranking) {
  if (ranking < 0.0) throw std::invalid_argument("ranking loss must be non-negative");
  return {ranking, 0.0, ranking, false};
}

}  // namespace farmare::losses
