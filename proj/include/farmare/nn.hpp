#pragma once

// Layers with explicit forward caches and hand-written backward passes.
// Forward calls never mutate trainable parameters, so evaluation-mode
// forwards over shared parameters are safe to run concurrently; the only
// state a training forward touches is BatchNorm's running statistics.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "farmare/rng.hpp"
#include "farmare/tensor.hpp"

namespace farmare::nn {

struct Parameter {
  std::string group;
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter(std::string group_, std::string name_, std::size_t rows, std::size_t cols, bool trainable_ = true)
      : group(std::move(group_)), name(std::move(name_)), value(rows, cols), grad(rows, cols), trainable(trainable_) {}

  void zero_grad() { grad.fill(0.0); }
};

enum class Mode { train, eval };

/// Seed of the initialisation stream for a parameter group; keyed by name so
/// that building an optional head never shifts another group's weights.
std::uint64_t init_seed(std::uint64_t model_seed, std::string_view group);

void init_uniform(Matrix& m, double bound, Rng& rng);

/// Row offsets of variable-length segments stacked into one matrix;
/// segment i occupies rows [offsets[i], offsets[i+1]).
using Segments = std::vector<std::size_t>;

Matrix stack_rows(std::span<const Matrix* const> parts, Segments& offsets);

/// y (N x C) = per-segment mean of x (sum V x C).
Matrix segment_mean(const Matrix& x, const Segments& seg);
/// dx rows += dy[segment] / len(segment).
void segment_mean_backward(const Matrix& dy, const Segments& seg, Matrix& dx);

void relu_inplace(Matrix& x);
/// dy *= 1[y > 0], using the post-activation output.
void relu_backward_inplace(const Matrix& y, Matrix& dy);

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

class Linear {
 public:
  Linear(std::string group, std::string prefix, std::size_t in, std::size_t out);

  void init(Rng& rng);
  std::size_t in_features() const { return weight.value.rows(); }
  std::size_t out_features() const { return weight.value.cols(); }

  Matrix forward(const Matrix& x) const;
  /// Accumulates parameter gradients; writes dx when non-null.
  void backward(const Matrix& x, const Matrix& dy, Matrix* dx);

  std::vector<Parameter*> parameters() { return {&weight, &bias}; }

  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
};

/// Inverted dropout. The mask holds 0 or 1/(1-p).
struct DropoutMask {
  Matrix scale;
};
void dropout_forward(Matrix& x, double p, Mode mode, Rng* rng, DropoutMask& mask);
void dropout_backward(const DropoutMask& mask, Matrix& dy);

class BatchNorm1d {
 public:
  BatchNorm1d(std::string group, std::string prefix, std::size_t features, double eps = 1e-5, double momentum = 0.1);

  struct Cache {
    Matrix normalized;
    std::vector<double> inv_std;
  };

  /// Training mode normalises with batch statistics and updates the running estimates.
  Matrix forward(const Matrix& x, Mode mode, Cache& cache);
  void backward(const Cache& cache, const Matrix& dy, Matrix& dx);

  std::vector<Parameter*> parameters() { return {&gamma, &beta, &running_mean, &running_var}; }

  Parameter gamma;
  Parameter beta;
  Parameter running_mean;
  Parameter running_var;
  double eps;
  double momentum;
};

/// 1-D convolution over the viewpoint axis of each segment, "same" zero
/// padding, stride 1; channels are the feature dimension.
class Conv1dSame {
 public:
  Conv1dSame(std::string group, std::size_t in_channels, std::size_t out_channels, std::size_t kernel);

  struct Cache {
    Matrix columns;  // sum V x (kernel * in_channels)
  };

  void init(Rng& rng);
  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return weight.value.cols(); }
  std::size_t kernel() const { return kernel_; }

  Matrix forward(const Matrix& x, const Segments& seg, Cache& cache) const;
  void backward(const Cache& cache, const Segments& seg, const Matrix& dy, Matrix* dx);

  std::vector<Parameter*> parameters() { return {&weight, &bias}; }

  Parameter weight;  // (kernel * in) x out; tap k occupies rows [k*in, (k+1)*in)
  Parameter bias;    // 1 x out

 private:
  std::size_t in_;
  std::size_t kernel_;
};

}  // namespace farmare::nn
