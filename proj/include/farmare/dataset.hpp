#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace farmare::dataset {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kNumNamedClasses = 25;
inline constexpr std::uint8_t kUnknownClass = 25;
inline constexpr std::size_t kNumClasses = 26;

/// Index -> name; index 25 is "unknown" (detections below 10% confidence).
inline constexpr std::array<std::string_view, kNumClasses> kFurnitureClassNames = {
    "bed",         "cabinet",      "carpet",      "ceramic floor",      "chair",
    "closet",      "cupboard",     "curtains",    "dining table",       "door",
    "frame",       "futec frame",  "futec tiles", "gypsum board",       "lamp",
    "nightstand",  "shelf",        "sideboard",   "sofa",               "tv stand",
    "table",       "transparent closet", "wall panel", "window",        "wooden floor",
    "unknown",
};

class FurnitureTag {
 public:
  constexpr FurnitureTag() = default;
  /// Throws ConfigError when index > 25.
  static FurnitureTag from_index(int index);
  static FurnitureTag from_name(std::string_view name);
  static constexpr FurnitureTag unknown() { return FurnitureTag(kUnknownClass); }

  constexpr std::uint8_t index() const { return index_; }
  constexpr std::string_view name() const { return kFurnitureClassNames[index_]; }
  constexpr bool is_unknown() const { return index_ == kUnknownClass; }

  constexpr bool operator==(const FurnitureTag&) const = default;

 private:
  constexpr explicit FurnitureTag(std::uint8_t index) : index_(index) {}
  std::uint8_t index_ = 0;
};

/// V x F_V single-precision feature matrix, row-major.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::span<float> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  bool operator==(const FeatureMatrix&) const = default;
};

struct ApartmentRecord {
  std::string id;
  FeatureMatrix viewpoint_features;
  std::vector<FurnitureTag> viewpoint_tags;
  std::string description;

  std::size_t num_viewpoints() const { return viewpoint_features.rows; }
  /// Throws ConfigError naming the id when a record invariant is broken.
  void validate() const;
  bool operator==(const ApartmentRecord&) const = default;
};

enum class FeatureSource { synthetic, joint_backbone, separate_backbone };
enum class Split { train, val, test };

std::string_view to_string(FeatureSource s);
FeatureSource feature_source_from_string(std::string_view s);
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct CorpusManifest {
  std::size_t num_apartments = 0;
  std::map<std::string, Split> split_assignments;
  std::uint64_t generator_seed = 0;
  std::string vocab_version;
  std::size_t feature_dim = 0;
  FeatureSource feature_source = FeatureSource::synthetic;

  bool operator==(const CorpusManifest&) const = default;
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<ApartmentRecord> records;

  std::vector<const ApartmentRecord*> split(Split s) const;
  bool operator==(const Corpus&) const = default;
};

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

/// Attribute vocabularies the description grammar draws from.
struct VocabTables {
  std::vector<std::string> categories;  // must be the 25 furniture class names, in index order
  std::vector<std::string> styles;
  std::vector<std::string> themes;
  std::vector<std::string> materials;
  std::vector<std::string> connectives;

  static VocabTables defaults();
};

struct GeneratorConfig {
  /// Separability lambda in [0, 1]: weight of the content signal against noise.
  double separability = 1.0;
  /// Probability that a viewpoint tag is substituted by a different class.
  double tag_noise = 0.0;
  std::size_t feature_dim = 512;
  double mean_description_words = 319.0;
  /// Log-space standard deviation of description length.
  double description_sigma = 0.6;
  std::size_t min_description_words = 19;
  std::size_t max_description_words = 1905;
  /// Weight of the item-attribute component relative to the category prototype.
  double attribute_weight = 0.5;
  std::size_t min_viewpoints = 3;
  std::size_t max_viewpoints = 15;
  SplitRatios split;
  std::string vocab_version = "farmare-synth-v1";
  VocabTables vocab = VocabTables::defaults();

  /// Throws ConfigError on out-of-range values or empty vocabularies.
  void validate() const;
};

/// Orthonormal (when the dimension allows) prototype vectors for every content
/// token of the vocabulary. Both the generator and the synthetic encoder derive
/// their joint space from it, keyed by vocab_version.
class ConceptSpace {
 public:
  ConceptSpace(const VocabTables& vocab, std::string_view vocab_version, std::size_t dim);

  std::size_t dim() const { return dim_; }
  /// Unit prototype for a token; nullptr when the token is not a content token.
  const std::vector<double>* token(std::string_view tok) const;
  /// Unit prototype of a furniture class (normalized sum of its token prototypes).
  const std::vector<double>& category(std::size_t class_index) const { return categories_.at(class_index); }
  bool orthonormal() const { return orthonormal_; }

 private:
  std::size_t dim_;
  bool orthonormal_ = false;
  std::map<std::string, std::vector<double>, std::less<>> tokens_;
  std::vector<std::vector<double>> categories_;
};

/// Viewpoint count for a scene with `distinct_categories` furniture classes.
std::size_t viewpoint_count(std::size_t distinct_categories, std::size_t lo = 3, std::size_t hi = 15);

struct GeneratedCorpus {
  Corpus corpus;
  /// Noise-free per-viewpoint classes, parallel to corpus.records.
  std::vector<std::vector<std::uint8_t>> true_categories;
  /// Full furniture multiset (class index per item), parallel to corpus.records.
  std::vector<std::vector<std::uint8_t>> furniture;
};

GeneratedCorpus generate_corpus_detailed(std::size_t n, std::uint64_t seed, const GeneratorConfig& config);
Corpus generate_corpus(std::size_t n, std::uint64_t seed, const GeneratorConfig& config);

/// Deterministic shuffled split. Throws ConfigError when ratios do not sum to 1
/// or the test share is zero.
CorpusManifest split_corpus(const Corpus& corpus, SplitRatios ratios, std::uint64_t seed);

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

struct LengthStats {
  double mean = 0.0;
  std::size_t min = 0;
  std::size_t max = 0;
};

struct TokenFrequency {
  std::string token;
  std::size_t count = 0;
  double frequency = 0.0;  // count / total non-stop tokens
};

struct CorpusStatistics {
  std::size_t num_apartments = 0;
  std::size_t num_sentences = 0;
  LengthStats description_words;
  LengthStats sentence_words;
  double mean_viewpoints = 0.0;
  std::vector<TokenFrequency> top_tokens;
};

CorpusStatistics corpus_statistics(const Corpus& corpus, std::size_t top_k = 30);

}  // namespace farmare::dataset
