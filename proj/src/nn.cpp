#include "farmare/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace farmare::nn {

using kernels::Trans;

std::uint64_t init_seed(std::uint64_t model_seed, std::string_view group) {
  return derive_seed(model_seed, group, 0);
}

void init_uniform(Matrix& m, double bound, Rng& rng) {
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
}

Matrix stack_rows(std::span<const Matrix* const> parts, Segments& offsets) {
  offsets.assign(1, 0);
  std::size_t cols = parts.empty() ? 0 : parts.front()->cols();
  for (const Matrix* p : parts) {
    if (p->cols() != cols) throw std::invalid_argument("stack_rows: column mismatch");
    offsets.push_back(offsets.back() + p->rows());
  }
  Matrix out(offsets.back(), cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::copy(parts[i]->values().begin(), parts[i]->values().end(), out.data() + offsets[i] * cols);
  }
  return out;
}

Matrix segment_mean(const Matrix& x, const Segments& seg) {
  const std::size_t n = seg.size() - 1;
  Matrix y(n, x.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = seg[i + 1] - seg[i];
    if (len == 0) throw std::invalid_argument("segment_mean: empty segment");
    for (std::size_t r = seg[i]; r < seg[i + 1]; ++r) kernels::axpy(1.0, x.row(r).data(), y.row(i).data(), x.cols());
    kernels::scale(1.0 / static_cast<double>(len), y.row(i).data(), x.cols());
  }
  return y;
}

void segment_mean_backward(const Matrix& dy, const Segments& seg, Matrix& dx) {
  for (std::size_t i = 0; i + 1 < seg.size(); ++i) {
    const double w = 1.0 / static_cast<double>(seg[i + 1] - seg[i]);
    for (std::size_t r = seg[i]; r < seg[i + 1]; ++r) kernels::axpy(w, dy.row(i).data(), dx.row(r).data(), dy.cols());
  }
}

void relu_inplace(Matrix& x) {
  for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(const Matrix& y, Matrix& dy) {
  const double* yv = y.data();
  double* d = dy.data();
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (!(yv[i] > 0.0)) d[i] = 0.0;
  }
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto out = p.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    for (double& v : out) v /= sum;
  }
  return p;
}

// ---------------------------------------------------------------------------

Linear::Linear(std::string group, std::string prefix, std::size_t in, std::size_t out)
    : weight(group, prefix + ".weight", in, out), bias(group, prefix + ".bias", 1, out) {}

void Linear::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features()));
  init_uniform(weight.value, bound, rng);
  init_uniform(bias.value, bound, rng);
}

Matrix Linear::forward(const Matrix& x) const {
  if (x.cols() != in_features()) {
    throw std::invalid_argument("Linear(" + weight.name + "): expected " + std::to_string(in_features()) +
                                " input features, got " + std::to_string(x.cols()));
  }
  Matrix y(x.rows(), out_features());
  matmul(x, Trans::no, weight.value, Trans::no, y);
  add_row_bias(y, bias.value);
  return y;
}

void Linear::backward(const Matrix& x, const Matrix& dy, Matrix* dx) {
  matmul(x, Trans::yes, dy, Trans::no, weight.grad, 1.0, 1.0);
  accumulate_column_sums(dy, bias.grad);
  if (dx) {
    dx->resize(x.rows(), x.cols());
    matmul(dy, Trans::no, weight.value, Trans::yes, *dx);
  }
}

// ---------------------------------------------------------------------------

void dropout_forward(Matrix& x, double p, Mode mode, Rng* rng, DropoutMask& mask) {
  if (mode == Mode::eval || p <= 0.0) {
    mask.scale = Matrix();
    return;
  }
  if (!rng) throw std::invalid_argument("dropout in training mode needs a random stream");
  mask.scale.resize(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = rng->uniform() < p ? 0.0 : keep;
    mask.scale.data()[i] = s;
    x.data()[i] *= s;
  }
}

void dropout_backward(const DropoutMask& mask, Matrix& dy) {
  if (mask.scale.empty()) return;
  for (std::size_t i = 0; i < dy.size(); ++i) dy.data()[i] *= mask.scale.data()[i];
}

// ---------------------------------------------------------------------------

BatchNorm1d::BatchNorm1d(std::string group, std::string prefix, std::size_t features, double eps_, double momentum_)
    : gamma(group, prefix + ".gamma", 1, features),
      beta(group, prefix + ".beta", 1, features),
      running_mean(group, prefix + ".running_mean", 1, features, false),
      running_var(group, prefix + ".running_var", 1, features, false),
      eps(eps_),
      momentum(momentum_) {
  gamma.value.fill(1.0);
  running_var.value.fill(1.0);
}

Matrix BatchNorm1d::forward(const Matrix& x, Mode mode, Cache& cache) {
  const std::size_t n = x.rows();
  const std::size_t f = x.cols();
  if (f != gamma.value.cols()) throw std::invalid_argument("BatchNorm1d: feature mismatch");
  std::vector<double> mean(f, 0.0), var(f, 0.0);
  if (mode == Mode::train) {
    if (n < 2) throw std::invalid_argument("BatchNorm1d: training batch needs at least 2 rows");
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c) mean[c] += x(r, c);
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c) {
        const double d = x(r, c) - mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < f; ++c) {
      const double biased = var[c] / static_cast<double>(n);
      const double unbiased = var[c] / static_cast<double>(n - 1);
      running_mean.value(0, c) = (1.0 - momentum) * running_mean.value(0, c) + momentum * mean[c];
      running_var.value(0, c) = (1.0 - momentum) * running_var.value(0, c) + momentum * unbiased;
      var[c] = biased;
    }
  } else {
    for (std::size_t c = 0; c < f; ++c) {
      mean[c] = running_mean.value(0, c);
      var[c] = running_var.value(0, c);
    }
  }
  cache.inv_std.resize(f);
  for (std::size_t c = 0; c < f; ++c) cache.inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  cache.normalized.resize(n, f);
  Matrix y(n, f);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      const double xh = (x(r, c) - mean[c]) * cache.inv_std[c];
      cache.normalized(r, c) = xh;
      y(r, c) = gamma.value(0, c) * xh + beta.value(0, c);
    }
  }
  return y;
}

// Training-mode backward (batch statistics depend on the input).
void BatchNorm1d::backward(const Cache& cache, const Matrix& dy, Matrix& dx) {
  const std::size_t n = dy.rows();
  const std::size_t f = dy.cols();
  dx.resize(n, f);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t c = 0; c < f; ++c) {
    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double g = dy(r, c);
      gamma.grad(0, c) += g * cache.normalized(r, c);
      beta.grad(0, c) += g;
      const double dxh = g * gamma.value(0, c);
      sum_dxh += dxh;
      sum_dxh_xh += dxh * cache.normalized(r, c);
    }
    for (std::size_t r = 0; r < n; ++r) {
      const double dxh = dy(r, c) * gamma.value(0, c);
      dx(r, c) = cache.inv_std[c] * (dxh - inv_n * sum_dxh - cache.normalized(r, c) * inv_n * sum_dxh_xh);
    }
  }
}

// ---------------------------------------------------------------------------

Conv1dSame::Conv1dSame(std::string group, std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
    : weight(group, "conv.weight", kernel * in_channels, out_channels),
      bias(group, "conv.bias", 1, out_channels),
      in_(in_channels),
      kernel_(kernel) {
  if (kernel % 2 == 0) throw std::invalid_argument("Conv1dSame: kernel size must be odd");
}

void Conv1dSame::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ * kernel_));
  init_uniform(weight.value, bound, rng);
  init_uniform(bias.value, bound, rng);
}

Matrix Conv1dSame::forward(const Matrix& x, const Segments& seg, Cache& cache) const {
  if (x.cols() != in_) {
    throw std::invalid_argument("Conv1d: expected " + std::to_string(in_) + " input channels, got " +
                                std::to_string(x.cols()));
  }
  const std::size_t rows = x.rows();
  const auto pad = static_cast<std::ptrdiff_t>(kernel_ / 2);
  cache.columns.resize(rows, kernel_ * in_);
  for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
    const auto lo = static_cast<std::ptrdiff_t>(seg[s]);
    const auto hi = static_cast<std::ptrdiff_t>(seg[s + 1]);
    for (std::ptrdiff_t t = lo; t < hi; ++t) {
      double* dst = cache.columns.row(static_cast<std::size_t>(t)).data();
      for (std::size_t k = 0; k < kernel_; ++k) {
        const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(k) - pad;
        if (src < lo || src >= hi) continue;
        const auto row = x.row(static_cast<std::size_t>(src));
        std::copy(row.begin(), row.end(), dst + k * in_);
      }
    }
  }
  Matrix y(rows, out_channels());
  matmul(cache.columns, Trans::no, weight.value, Trans::no, y);
  add_row_bias(y, bias.value);
  return y;
}

void Conv1dSame::backward(const Cache& cache, const Segments& seg, const Matrix& dy, Matrix* dx) {
  matmul(cache.columns, Trans::yes, dy, Trans::no, weight.grad, 1.0, 1.0);
  accumulate_column_sums(dy, bias.grad);
  if (!dx) return;
  Matrix dcols(dy.rows(), kernel_ * in_);
  matmul(dy, Trans::no, weight.value, Trans::yes, dcols);
  dx->resize(dy.rows(), in_);
  const auto pad = static_cast<std::ptrdiff_t>(kernel_ / 2);
  for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
    const auto lo = static_cast<std::ptrdiff_t>(seg[s]);
    const auto hi = static_cast<std::ptrdiff_t>(seg[s + 1]);
    for (std::ptrdiff_t t = lo; t < hi; ++t) {
      const double* src = dcols.row(static_cast<std::size_t>(t)).data();
      for (std::size_t k = 0; k < kernel_; ++k) {
        const std::ptrdiff_t tgt = t + static_cast<std::ptrdiff_t>(k) - pad;
        if (tgt < lo || tgt >= hi) continue;
        kernels::axpy(1.0, src + k * in_, dx->row(static_cast<std::size_t>(tgt)).data(), in_);
      }
    }
  }
}

}  // namespace farmare::nn
