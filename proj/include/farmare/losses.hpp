#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "farmare/tensor.hpp"

namespace farmare::losses {

/// max(0, margin + s(anchor, negative) - s(anchor, positive)) with cosine s.
/// Throws std::domain_error on a zero-norm vector.
double triplet_term(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin);

struct RankingResult {
  double loss = 0.0;
  Matrix d_scenes;   // N x D, empty unless gradients were requested
  Matrix d_queries;  // N x D
  /// Smallest |hinge argument| over all terms; gradient checks resample near kinks.
  double min_hinge_distance = 0.0;
};

/// Bidirectional triplet ranking loss over all N(N-1) ordered pairs per
/// direction, normalised by 2N(N-1). scenes[i] and queries[i] are matched.
/// Throws std::invalid_argument when N < 2.
RankingResult ranking_loss(const Matrix& scenes, const Matrix& queries, double margin, bool with_grad = false);

inline constexpr double kProbabilityFloor = 1e-12;

struct ClassificationResult {
  double loss = 0.0;
  Matrix d_logits;  // rows x classes, gradient through the softmax; empty unless requested
};

/// Mean over rows of -log(max(p[row][tag[row]], 1e-12)).
ClassificationResult classification_loss(const Matrix& probabilities, std::span<const std::uint8_t> tags,
                                         bool with_grad = false);

struct LossValue {
  double ranking = 0.0;
  double classification = 0.0;
  double total = 0.0;
  bool multi_task = false;
};

/// total = (ranking + classification) / 2.
LossValue combined_loss(double ranking, double classification);
/// Single-task models train on the ranking loss alone.
LossValue ranking_only(double ranking);

}  // namespace farmare::losses
