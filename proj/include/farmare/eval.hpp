#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "farmare/tensor.hpp"

namespace farmare::eval {

enum class Direction { t2a, a2t };

/// S(q, a) = cosine(query q, apartment a).
struct SimilarityMatrix {
  Matrix scores;
  std::vector<std::string> query_ids;
  std::vector<std::string> apartment_ids;

  std::size_t size() const { return scores.rows(); }
};

/// Throws std::domain_error naming the id of any zero-norm embedding.
SimilarityMatrix similarity_matrix(const Matrix& queries, const Matrix& scenes, std::vector<std::string> ids = {});

/// 1-based rank of the ground truth for every query (t2a) or apartment (a2t).
/// Candidates sort by descending score; equal scores order by ascending index.
std::vector<std::size_t> ranks(const Matrix& s, Direction dir);

/// 100 * hits / N. Throws std::invalid_argument unless 1 <= k <= N.
double recall_at_k(const Matrix& s, std::size_t k, Direction dir);
/// Median of ranks; for even N the central pair's mean, rounded half-up.
std::size_t median_rank(const Matrix& s, Direction dir);

struct RetrievalReport {
  std::string method;
  std::size_t num_queries = 0;
  double t2a_r1 = 0, t2a_r5 = 0, t2a_r10 = 0, t2a_medr = 0;
  double a2t_r1 = 0, a2t_r5 = 0, a2t_r10 = 0, a2t_medr = 0;
  double rsum_value = 0;
};

double rsum(const RetrievalReport& r);

/// Full report; k values above N are clipped to N.
RetrievalReport evaluate_similarity(const Matrix& s, std::string method = {});

std::string to_json(const RetrievalReport& r);
RetrievalReport report_from_json(const std::string& text);
void save_report(const RetrievalReport& r, const std::filesystem::path& path);
RetrievalReport load_report(const std::filesystem::path& path);

/// Mean and population standard deviation per metric.
struct AggregatedReport {
  std::string method;
  std::size_t runs = 0;
  RetrievalReport mean;
  RetrievalReport stddev;
};
AggregatedReport aggregate(const std::vector<RetrievalReport>& runs);
std::string to_json(const AggregatedReport& r);

/// Text grid with columns Method | T2A R@1 R@5 R@10 MedR | A2T R@1 R@5 R@10 MedR | Rsum.
std::string comparison_grid(const std::vector<RetrievalReport>& reports);

/// Recall bar chart (six bars: t2a R@1/5/10 then a2t R@1/5/10) written as PNG.
void plot_recalls(const RetrievalReport& r, const std::filesystem::path& png_path, int width = 480, int height = 320);

}  // namespace farmare::eval
