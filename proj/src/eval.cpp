#include "farmare/eval.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace farmare::eval {

using nlohmann::json;

SimilarityMatrix similarity_matrix(const Matrix& queries, const Matrix& scenes, std::vector<std::string> ids) {
  if (queries.rows() != scenes.rows()) throw std::invalid_argument("similarity matrix: query/scene counts differ");
  if (queries.cols() != scenes.cols()) throw std::invalid_argument("similarity matrix: embedding widths differ");
  const std::size_t n = queries.rows();
  if (ids.empty()) {
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  }
  if (ids.size() != n) throw std::invalid_argument("similarity matrix: id count mismatch");

  auto unit = [&](const Matrix& m, const char* what) {
    Matrix u = m;
    for (std::size_t r = 0; r < n; ++r) {
      const double nr = norm(m.row(r));
      if (nr == 0.0) throw std::domain_error(std::string("zero-norm ") + what + " embedding for id " + ids[r]);
      kernels::scale(1.0 / nr, u.row(r).data(), u.cols());
    }
    return u;
  };
  const Matrix q = unit(queries, "query");
  const Matrix a = unit(scenes, "apartment");
  SimilarityMatrix out;
  out.scores.resize(n, n);
  matmul(q, kernels::Trans::no, a, kernels::Trans::yes, out.scores);
  for (double& v : out.scores.values()) v = std::clamp(v, -1.0, 1.0);
  out.query_ids = ids;
  out.apartment_ids = std::move(ids);
  return out;
}

std::vector<std::size_t> ranks(const Matrix& s, Direction dir) {
  const std::size_t n = s.rows();
  if (s.cols() != n) throw std::invalid_argument("ranking needs a square similarity matrix");
  auto at = [&](std::size_t query, std::size_t cand) { return dir == Direction::t2a ? s(query, cand) : s(cand, query); };
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double truth = at(i, i);
    std::size_t rank = 1;
    for (std::size_t c = 0; c < n; ++c) {
      const double v = at(i, c);
      if (v > truth || (v == truth && c < i)) ++rank;
    }
    out[i] = rank;
  }
  return out;
}

double recall_at_k(const Matrix& s, std::size_t k, Direction dir) {
  const std::size_t n = s.rows();
  if (k < 1 || k > n) {
    throw std::invalid_argument("recall@k needs 1 <= k <= N (k=" + std::to_string(k) + ", N=" + std::to_string(n) + ")");
  }
  const auto r = ranks(s, dir);
  const auto hits = std::count_if(r.begin(), r.end(), [&](std::size_t x) { return x <= k; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

std::size_t median_rank(const Matrix& s, Direction dir) {
  auto r = ranks(s, dir);
  if (r.empty()) throw std::invalid_argument("median rank of an empty matrix");
  std::sort(r.begin(), r.end());
  const std::size_t n = r.size();
  if (n % 2 == 1) return r[n / 2];
  return (r[n / 2 - 1] + r[n / 2] + 1) / 2;
}

double rsum(const RetrievalReport& r) {
  return r.t2a_r1 + r.t2a_r5 + r.t2a_r10 + r.a2t_r1 + r.a2t_r5 + r.a2t_r10;
}

RetrievalReport evaluate_similarity(const Matrix& s, std::string method) {
  const std::size_t n = s.rows();
  RetrievalReport rep;
  rep.method = std::move(method);
  rep.num_queries = n;
  auto k = [&](std::size_t v) { return std::min(v, n); };
  rep.t2a_r1 = recall_at_k(s, k(1), Direction::t2a);
  rep.t2a_r5 = recall_at_k(s, k(5), Direction::t2a);
  rep.t2a_r10 = recall_at_k(s, k(10), Direction::t2a);
  rep.t2a_medr = static_cast<double>(median_rank(s, Direction::t2a));
  rep.a2t_r1 = recall_at_k(s, k(1), Direction::a2t);
  rep.a2t_r5 = recall_at_k(s, k(5), Direction::a2t);
  rep.a2t_r10 = recall_at_k(s, k(10), Direction::a2t);
  rep.a2t_medr = static_cast<double>(median_rank(s, Direction::a2t));
  rep.rsum_value = rsum(rep);
  return rep;
}

namespace {

json report_json(const RetrievalReport& r) {
  return json{{"method", r.method},     {"num_queries", r.num_queries}, {"t2a_r1", r.t2a_r1},
              {"t2a_r5", r.t2a_r5},     {"t2a_r10", r.t2a_r10},         {"t2a_medr", r.t2a_medr},
              {"a2t_r1", r.a2t_r1},     {"a2t_r5", r.a2t_r5},           {"a2t_r10", r.a2t_r10},
              {"a2t_medr", r.a2t_medr}, {"rsum", r.rsum_value}};
}

RetrievalReport report_from(const json& j) {
  RetrievalReport r;
  r.method = j.value("method", std::string{});
  r.num_queries = j.value("num_queries", std::size_t{0});
  r.t2a_r1 = j.at("t2a_r1").get<double>();
  r.t2a_r5 = j.at("t2a_r5").get<double>();
  r.t2a_r10 = j.at("t2a_r10").get<double>();
  r.t2a_medr = j.at("t2a_medr").get<double>();
  r.a2t_r1 = j.at("a2t_r1").get<double>();
  r.a2t_r5 = j.at("a2t_r5").get<double>();
  r.a2t_r10 = j.at("a2t_r10").get<double>();
  r.a2t_medr = j.at("a2t_medr").get<double>();
  r.rsum_value = j.contains("rsum") ? j.at("rsum").get<double>() : rsum(r);
  return r;
}

}  // namespace

std::string to_json(const RetrievalReport& r) { return report_json(r).dump(2); }

RetrievalReport report_from_json(const std::string& text) {
  try {
    return report_from(json::parse(text));
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed report: ") + e.what());
  }
}

void save_report(const RetrievalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << to_json(r) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

RetrievalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

AggregatedReport aggregate(const std::vector<RetrievalReport>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate over zero runs");
  AggregatedReport agg;
  agg.method = runs.front().method;
  agg.runs = runs.size();
  agg.mean.method = agg.stddev.method = agg.method;
  agg.mean.num_queries = agg.stddev.num_queries = runs.front().num_queries;
  using Field = double RetrievalReport::*;
  constexpr Field fields[] = {&RetrievalReport::t2a_r1,  &RetrievalReport::t2a_r5,  &RetrievalReport::t2a_r10,
                              &RetrievalReport::t2a_medr, &RetrievalReport::a2t_r1, &RetrievalReport::a2t_r5,
                              &RetrievalReport::a2t_r10, &RetrievalReport::a2t_medr, &RetrievalReport::rsum_value};
  const auto n = static_cast<double>(runs.size());
  for (Field f : fields) {
    double mean = 0.0;
    for (const auto& r : runs) mean += r.*f;
    mean /= n;
    double var = 0.0;
    for (const auto& r : runs) var += (r.*f - mean) * (r.*f - mean);
    agg.mean.*f = mean;
    agg.stddev.*f = std::sqrt(var / n);
  }
  return agg;
}

std::string to_json(const AggregatedReport& r) {
  return json{{"method", r.method}, {"runs", r.runs}, {"mean", report_json(r.mean)}, {"std", report_json(r.stddev)}}
      .dump(2);
}

std::string comparison_grid(const std::vector<RetrievalReport>& reports) {
  std::size_t name_w = 6;
  for (const auto& r : reports) name_w = std::max(name_w, r.method.size());
  std::ostringstream os;
  os << std::fixed;
  auto cell = [&](double v, int prec) { os << " | " << std::setw(6) << std::setprecision(prec) << v; };
  const std::string bar(name_w + 9 * 9 + 2, '-');
  os << std::left << std::setw(static_cast<int>(name_w)) << "" << " | " << std::setw(33) << "Text-to-Apartment"
     << " | " << std::setw(33) << "Apartment-to-Text" << " | " << "Rsum\n";
  os << std::setw(static_cast<int>(name_w)) << "Method" << std::right;
  for (int dir = 0; dir < 2; ++dir) {
    for (const char* h : {"R@1", "R@5", "R@10", "MedR"}) os << " | " << std::setw(6) << h;
  }
  os << " | " << std::setw(6) << "" << '\n' << bar << '\n';
  for (const auto& r : reports) {
    os << std::left << std::setw(static_cast<int>(name_w)) << r.method << std::right;
    cell(r.t2a_r1, 1);
    cell(r.t2a_r5, 1);
    cell(r.t2a_r10, 1);
    cell(r.t2a_medr, 0);
    cell(r.a2t_r1, 1);
    cell(r.a2t_r5, 1);
    cell(r.a2t_r10, 1);
    cell(r.a2t_medr, 0);
    cell(rsum(r), 1);
    os << '\n';
  }
  return os.str();
}

void plot_recalls(const RetrievalReport& r, const std::filesystem::path& png_path, int width, int height) {
  if (width < 64 || height < 64) throw std::invalid_argument("plot too small");
  std::vector<unsigned char> px(static_cast<std::size_t>(width) * height * 3, 255);
  auto put = [&](int x, int y, unsigned char cr, unsigned char cg, unsigned char cb) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    auto* p = &px[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = cr;
    p[1] = cg;
    p[2] = cb;
  };
  const int left = 32, right = width - 16, top = 16, bottom = height - 24;
  // Gridlines every 25%.
  for (int g = 0; g <= 4; ++g) {
    const int y = bottom - (bottom - top) * g / 4;
    for (int x = left; x <= right; ++x) put(x, y, 210, 210, 210);
  }
  for (int y = top; y <= bottom; ++y) put(left, y, 0, 0, 0);
  for (int x = left; x <= right; ++x) put(x, bottom, 0, 0, 0);

  const double values[6] = {r.t2a_r1, r.t2a_r5, r.t2a_r10, r.a2t_r1, r.a2t_r5, r.a2t_r10};
  const int slot = (right - left) / 7;  // six bars plus one gap between directions
  for (int b = 0; b < 6; ++b) {
    const int s = b < 3 ? b : b + 1;
    const int x0 = left + s * slot + slot / 6;
    const int x1 = left + (s + 1) * slot - slot / 6;
    const double v = std::clamp(values[b], 0.0, 100.0);
    const int y0 = bottom - static_cast<int>(std::lround((bottom - top) * v / 100.0));
    const unsigned char shade = static_cast<unsigned char>(90 + 50 * (b % 3));
    for (int x = x0; x < x1; ++x) {
      for (int y = y0; y < bottom; ++y) {
        if (b < 3) put(x, y, 30, shade, 200);
        else put(x, y, 220, shade, 40);
      }
    }
  }

  FILE* fp = std::fopen(png_path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write " + png_path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("PNG encoding failed for " + png_path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) png_write_row(png, &px[static_cast<std::size_t>(y) * width * 3]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace farmare::eval
