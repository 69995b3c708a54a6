#pragma once

#include <span>
#include <vector>

#include "farmare/nn.hpp"

namespace farmare::text_branch {

struct TextBranchConfig {
  std::size_t input_dim = 512;   // F_T
  std::size_t hidden_dim = 512;  // H = D_joint
};

/// One GRU direction, PyTorch gate layout [reset | update | new]:
///   r = sigma(x W_ir + b_ir + h W_hr + b_hr)
///   z = sigma(x W_iz + b_iz + h W_hz + b_hz)
///   n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
///   h' = (1 - z) * n + z * h
class GruDirection {
 public:
  GruDirection(const std::string& group, const std::string& prefix, std::size_t input, std::size_t hidden);

  void init(Rng& rng);
  std::size_t hidden() const { return hidden_; }

  struct Step {
    std::size_t active = 0;  // sequences still running, a prefix of the length-sorted order
    Matrix h_prev, r, z, n, hn;
  };
  struct Cache {
    std::vector<Step> steps;
    Matrix final_h;  // batch x H, in caller order
  };

  /// Runs every sequence to its end; `reverse` walks each sequence back to front.
  void forward(const Matrix& inputs, const nn::Segments& seg, bool reverse, Cache& cache) const;
  /// d_final: batch x H gradient on the final hidden states. Adds to parameter
  /// gradients and, when d_inputs is non-null, to d_inputs.
  void backward(const Cache& cache, const Matrix& inputs, const nn::Segments& seg, bool reverse,
                const Matrix& d_final, Matrix* d_inputs);

  std::vector<nn::Parameter*> parameters() { return {&w_ih, &w_hh, &b_ih, &b_hh}; }

  nn::Parameter w_ih;  // F_T x 3H
  nn::Parameter w_hh;  // H x 3H
  nn::Parameter b_ih;  // 1 x 3H
  nn::Parameter b_hh;  // 1 x 3H

 private:
  std::size_t hidden_;
};

/// Query encoder g(d): bidirectional single-layer GRU over the sentence (or
/// token) features; the embedding is the mean of the two directions' final
/// hidden states.
class TextBranch {
 public:
  explicit TextBranch(TextBranchConfig cfg);

  void init(std::uint64_t model_seed);
  const TextBranchConfig& config() const { return cfg_; }
  std::size_t output_dim() const { return cfg_.hidden_dim; }

  struct Cache {
    nn::Segments seg;
    Matrix inputs;  // stacked sequences, sum S x F_T
    GruDirection::Cache fwd, bwd;
  };

  /// Embeds each sequence (S_i x F_T) into a row of the returned batch x H matrix.
  Matrix forward(std::span<const Matrix* const> sequences, Cache& cache) const;
  Matrix encode(std::span<const Matrix* const> sequences) const;
  void backward(const Cache& cache, const Matrix& d_queries, Matrix* d_inputs);

  std::vector<nn::Parameter*> parameters();

 private:
  TextBranchConfig cfg_;
  GruDirection forward_dir_;
  GruDirection backward_dir_;
};

}  // namespace farmare::text_branch
