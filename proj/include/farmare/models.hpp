#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "farmare/encoders.hpp"
#include "farmare/losses.hpp"
#include "farmare/nn.hpp"
#include "farmare/text_branch.hpp"

namespace farmare::models {

enum class ModelKind { nlb, afn, cnv, farmare };

std::string_view to_string(ModelKind k);
/// "nlb" | "afn" | "cnv" | "farmare".
ModelKind model_kind_from_string(std::string_view s);

/// How the conv trunk output becomes one scene vector.
enum class ConvHead {
  pooled_fc,      // ReLU, mean over viewpoints, fully connected layer
  per_viewpoint,  // ReLU(x W + b) per viewpoint, then mean over viewpoints
};

struct ModelConfig {
  ModelKind kind = ModelKind::farmare;
  std::size_t feature_dim = 512;  // F_V
  std::size_t text_dim = 512;     // F_T
  std::size_t joint_dim = 512;    // D_joint, also the GRU hidden width
  std::size_t conv_channels = 512;
  std::size_t conv_kernel = 5;
  std::size_t afn_hidden1 = 1024;
  std::size_t afn_hidden2 = 512;
  double afn_dropout1 = 0.20;
  double afn_dropout2 = 0.10;
  double classifier_dropout = 0.10;
  /// CNV defaults to pooled_fc; FArMARe always uses per_viewpoint.
  ConvHead cnv_head = ConvHead::pooled_fc;
  /// FArMARe only: false drops the classification task entirely.
  bool use_classifier = true;
  std::uint64_t init_seed = 0;

  /// Classifier hidden widths: halve from conv_channels three times, then
  /// repeat the last width (512 -> 256 -> 128 -> 64 -> 64).
  std::vector<std::size_t> classifier_widths() const;
  bool multi_task() const { return kind == ModelKind::farmare && use_classifier; }
};

/// Pooled encoders of the non-learning baseline: mean of viewpoint features
/// and mean of text features. Refuses separately trained backbones.
struct NlbEmbedding {
  std::vector<double> scene;
  std::vector<double> query;
};
NlbEmbedding nlb_encode(const encoders::VisualFeatureSet& visual, const encoders::TextFeatureSequence& text);

/// Per-viewpoint furniture classifier over the shared trunk representation.
class FurnitureClassifier {
 public:
  FurnitureClassifier(std::size_t in, const std::vector<std::size_t>& widths, double dropout);

  struct Cache {
    std::vector<Matrix> activations;  // input to each layer
    nn::DropoutMask mask;
  };

  void init(std::uint64_t model_seed);
  /// Softmax probabilities, one row of 26 per viewpoint.
  Matrix forward(const Matrix& shared, nn::Mode mode, Rng* rng, Cache& cache) const;
  Matrix logits(const Matrix& shared, nn::Mode mode, Rng* rng, Cache& cache) const;
  void backward(const Cache& cache, const Matrix& d_logits, Matrix& d_shared);

  std::vector<nn::Parameter*> parameters();
  std::size_t num_layers() const { return layers_.size(); }

 private:
  std::vector<nn::Linear> layers_;
  double dropout_;
};

struct SceneBatch {
  std::vector<const Matrix*> viewpoints;  // each V_i x F_V
};

struct QueryBatch {
  std::vector<const Matrix*> sequences;  // each S_i x F_T
};

/// Everything a training step needs from one batch.
struct TrainBatch {
  SceneBatch scenes;
  QueryBatch queries;
  std::vector<const std::vector<std::uint8_t>*> tags;  // per apartment, one per viewpoint
  encoders::Provenance provenance = encoders::Provenance::synthetic;
};

struct StepResult {
  losses::LossValue loss;
  double min_hinge_distance = 0.0;
};

/// A scene encoder f and query encoder g in one joint space.
class RetrievalModel {
 public:
  explicit RetrievalModel(ModelConfig cfg);
  ~RetrievalModel();
  RetrievalModel(RetrievalModel&&) noexcept;
  RetrievalModel& operator=(RetrievalModel&&) noexcept;

  const ModelConfig& config() const { return cfg_; }
  bool trainable() const { return cfg_.kind != ModelKind::nlb; }
  std::size_t joint_dim() const;

  /// Evaluation-mode embeddings, one row per apartment / description.
  Matrix encode_scenes(const SceneBatch& batch, encoders::Provenance provenance) const;
  Matrix encode_queries(const QueryBatch& batch) const;

  /// Evaluation-mode per-viewpoint class probabilities (FArMARe only).
  Matrix classify(const Matrix& viewpoints) const;
  /// Evaluation-mode shared trunk output x_hat (conv models only).
  Matrix shared_representation(const Matrix& viewpoints) const;

  /// Training-mode loss; accumulates gradients into the parameters when requested.
  StepResult train_step(const TrainBatch& batch, double margin, Rng* dropout_rng, bool accumulate_grads);

  std::vector<nn::Parameter*> parameters();
  void zero_grad();

 private:
  struct Impl;
  ModelConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace farmare::models
