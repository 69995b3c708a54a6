#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "farmare/dataset.hpp"
#include "farmare/tensor.hpp"
#include "farmare/text.hpp"

namespace farmare::encoders {

class AdapterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Provenance { joint, separate, synthetic };
enum class Granularity { token, sentence };

std::string_view to_string(Provenance p);
std::string_view to_string(Granularity g);
Granularity granularity_from_string(std::string_view s);

struct VisualFeatureSet {
  Matrix features;  // V x F_V
  Provenance provenance = Provenance::synthetic;
};

struct TextFeatureSequence {
  Matrix features;  // S x F_T
  Granularity granularity = Granularity::sentence;
};

// ---------------------------------------------------------------------------
// Furniture tagger

struct RawDetection {
  int class_index = 0;  // 0..24
  double confidence = 0.0;
};

struct TaggerOutput {
  dataset::FurnitureTag tag;
  double confidence = 0.0;
};

inline constexpr double kTagConfidenceThreshold = 0.10;

/// Keeps the class when confidence >= 0.10, otherwise "unknown".
/// Throws std::invalid_argument for a class outside [0, 24] or confidence outside [0, 1].
TaggerOutput tag_viewpoint(RawDetection detection);

/// Tag of the highest-confidence detection; "unknown" when there are none.
TaggerOutput tag_viewpoint(std::span<const RawDetection> detections);

/// Source of raw detections for one viewpoint image.
class FurnitureDetector {
 public:
  virtual ~FurnitureDetector() = default;
  virtual std::vector<RawDetection> detect(const dataset::ApartmentRecord& record, std::size_t viewpoint) const = 0;
};

/// Replays the corpus tags as full-confidence detections ("unknown" becomes no detection).
class CorpusTagDetector final : public FurnitureDetector {
 public:
  std::vector<RawDetection> detect(const dataset::ApartmentRecord& record, std::size_t viewpoint) const override;
};

// ---------------------------------------------------------------------------
// Adapters

class VisionAdapter {
 public:
  virtual ~VisionAdapter() = default;
  virtual std::string name() const = 0;
  virtual Provenance provenance() const = 0;
  virtual std::size_t feature_dim() const = 0;
  /// Throws AdapterError on a width mismatch or a non-finite feature.
  virtual VisualFeatureSet encode_images(const dataset::ApartmentRecord& record) const = 0;
};

class TextAdapter {
 public:
  virtual ~TextAdapter() = default;
  virtual std::string name() const = 0;
  virtual Provenance provenance() const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual TextFeatureSequence encode_text(std::span<const std::string> sentences, Granularity granularity) const = 0;
};

/// Feature-level corpora: the stored descriptors are the backbone output.
class PassThroughVisionAdapter final : public VisionAdapter {
 public:
  PassThroughVisionAdapter(std::string name, Provenance provenance, std::size_t dim);
  std::string name() const override { return name_; }
  Provenance provenance() const override { return provenance_; }
  std::size_t feature_dim() const override { return dim_; }
  VisualFeatureSet encode_images(const dataset::ApartmentRecord& record) const override;

 private:
  std::string name_;
  Provenance provenance_;
  std::size_t dim_;
};

/// Deterministic word-vector encoder over the generator's concept space.
/// Content tokens map to alignment * prototype + sqrt(1 - alignment^2) * own
/// noise direction; every other token maps to its noise direction. A sentence
/// vector is the mean of its token vectors.
class SyntheticTextAdapter final : public TextAdapter {
 public:
  SyntheticTextAdapter(std::size_t dim, std::string vocab_version, double alignment = kDefaultAlignment,
                       const dataset::VocabTables& vocab = dataset::VocabTables::defaults());

  static constexpr double kDefaultAlignment = 0.5;

  std::string name() const override { return "synthetic"; }
  Provenance provenance() const override { return Provenance::synthetic; }
  std::size_t feature_dim() const override { return dim_; }
  TextFeatureSequence encode_text(std::span<const std::string> sentences, Granularity granularity) const override;

  /// Unit-free vector of a single lower-case token.
  std::vector<double> token_vector(const std::string& token) const;

 private:
  std::size_t dim_;
  std::string vocab_version_;
  double alignment_;
  dataset::ConceptSpace space_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, std::vector<double>, std::less<>> cache_;
};

/// Pretrained text encoders are plug-ins backed by a feature cache in the
/// container format: `<weights_dir>/<adapter>/text_features.bin`, one f32 row
/// per entry keyed by the hex FNV-1a hash of the sentence (or token) text.
class CachedTextAdapter final : public TextAdapter {
 public:
  CachedTextAdapter(std::string name, Provenance provenance, const std::filesystem::path& cache_file);
  std::string name() const override { return name_; }
  Provenance provenance() const override { return provenance_; }
  std::size_t feature_dim() const override { return dim_; }
  TextFeatureSequence encode_text(std::span<const std::string> sentences, Granularity granularity) const override;

  static std::string key(std::string_view text);

 private:
  std::string name_;
  Provenance provenance_;
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>, std::less<>> rows_;
};

inline constexpr std::size_t kJointFeatureDim = 512;      // ViT-B-32 embedding width
inline constexpr std::size_t kSeparateVisionDim = 2048;   // ResNet-152 pooled width

struct AdapterOptions {
  std::size_t feature_dim = 0;  // synthetic adapters: width of the corpus features
  std::string vocab_version = "farmare-synth-v1";
  double text_alignment = SyntheticTextAdapter::kDefaultAlignment;
  /// Defaults to $FARMARE_WEIGHTS_DIR.
  std::optional<std::filesystem::path> weights_dir;
};

/// Registry names: "synthetic", "joint", "separate-vision", "separate-text".
std::vector<std::string> adapter_names();
std::unique_ptr<VisionAdapter> make_vision_adapter(const std::string& name, const AdapterOptions& opts);
std::unique_ptr<TextAdapter> make_text_adapter(const std::string& name, const AdapterOptions& opts);

/// An adapter pair as selected on the command line: "synthetic", "joint" or "separate".
struct AdapterPair {
  std::unique_ptr<VisionAdapter> vision;
  std::unique_ptr<TextAdapter> text;
};
AdapterPair make_adapter_pair(const std::string& name, const dataset::CorpusManifest& manifest,
                              AdapterOptions opts = {});

/// Sentence or token features for one description.
TextFeatureSequence encode_description(const TextAdapter& adapter, std::string_view description,
                                       Granularity granularity);

}  // namespace farmare::encoders
