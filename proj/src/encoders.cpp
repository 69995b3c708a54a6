#include "farmare/encoders.hpp"

#include <cmath>
#include <cstdlib>
#include <cstdio>

#include "farmare/container.hpp"
#include "farmare/rng.hpp"

namespace farmare::encoders {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::joint: return "joint";
    case Provenance::separate: return "separate";
    case Provenance::synthetic: return "synthetic";
  }
  return "synthetic";
}

std::string_view to_string(Granularity g) { return g == Granularity::token ? "token" : "sentence"; }

Granularity granularity_from_string(std::string_view s) {
  if (s == "token") return Granularity::token;
  if (s == "sentence") return Granularity::sentence;
  throw std::invalid_argument("unknown granularity: " + std::string(s) + " (expected token|sentence)");
}

TaggerOutput tag_viewpoint(RawDetection d) {
  if (d.class_index < 0 || d.class_index >= static_cast<int>(dataset::kNumNamedClasses)) {
    throw std::invalid_argument("raw detection class must lie in [0, 24], got " + std::to_string(d.class_index));
  }
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
    throw std::invalid_argument("detection confidence must lie in [0, 1]");
  }
  const auto tag = d.confidence < kTagConfidenceThreshold ? dataset::FurnitureTag::unknown()
                                                          : dataset::FurnitureTag::from_index(d.class_index);
  return {tag, d.confidence};
}

TaggerOutput tag_viewpoint(std::span<const RawDetection> detections) {
  if (detections.empty()) return {dataset::FurnitureTag::unknown(), 0.0};
  const RawDetection* best = &detections.front();
  for (const auto& d : detections) {
    if (d.confidence > best->confidence) best = &d;
  }
  return tag_viewpoint(*best);
}

std::vector<RawDetection> CorpusTagDetector::detect(const dataset::ApartmentRecord& record, std::size_t viewpoint) const {
  const auto tag = record.viewpoint_tags.at(viewpoint);
  if (tag.is_unknown()) return {};
  return {{tag.index(), 1.0}};
}

// ---------------------------------------------------------------------------

PassThroughVisionAdapter::PassThroughVisionAdapter(std::string name, Provenance provenance, std::size_t dim)
    : name_(std::move(name)), provenance_(provenance), dim_(dim) {}

VisualFeatureSet PassThroughVisionAdapter::encode_images(const dataset::ApartmentRecord& record) const {
  const auto& f = record.viewpoint_features;
  if (f.cols != dim_) {
    throw AdapterError(record.id + ": adapter '" + name_ + "' expects F_V=" + std::to_string(dim_) + ", record has " +
                       std::to_string(f.cols));
  }
  if (f.rows == 0) throw AdapterError(record.id + ": no viewpoints");
  VisualFeatureSet out;
  out.provenance = provenance_;
  out.features.resize(f.rows, f.cols);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const float v = f.values[i];
    if (!std::isfinite(v)) throw AdapterError(record.id + ": non-finite visual feature");
    out.features.data()[i] = v;
  }
  return out;
}

// ---------------------------------------------------------------------------

SyntheticTextAdapter::SyntheticTextAdapter(std::size_t dim, std::string vocab_version, double alignment,
                                           const dataset::VocabTables& vocab)
    : dim_(dim), vocab_version_(std::move(vocab_version)), alignment_(alignment), space_(vocab, vocab_version_, dim) {
  if (dim == 0) throw AdapterError("synthetic text adapter needs a positive feature dimension");
  if (!(alignment >= 0.0 && alignment <= 1.0)) throw AdapterError("text alignment must lie in [0, 1]");
}

std::vector<double> SyntheticTextAdapter::token_vector(const std::string& token) const {
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(token); it != cache_.end()) return it->second;
  }
  Rng rng(derive_seed(fnv1a(vocab_version_), "token-noise", fnv1a(token)));
  std::vector<double> v(dim_);
  double n2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    n2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
  if (const auto* proto = space_.token(token)) {
    const double noise_w = std::sqrt(1.0 - alignment_ * alignment_);
    for (std::size_t i = 0; i < dim_; ++i) v[i] = alignment_ * (*proto)[i] + noise_w * v[i];
  }
  std::lock_guard lock(cache_mutex_);
  return cache_.emplace(token, std::move(v)).first->second;
}

TextFeatureSequence SyntheticTextAdapter::encode_text(std::span<const std::string> sentences,
                                                      Granularity granularity) const {
  TextFeatureSequence out;
  out.granularity = granularity;
  std::vector<std::vector<double>> rows;
  for (const auto& s : sentences) {
    auto tokens = tokenize(s);
    if (tokens.empty()) continue;
    if (granularity == Granularity::token) {
      for (const auto& t : tokens) rows.push_back(token_vector(t));
    } else {
      std::vector<double> acc(dim_, 0.0);
      for (const auto& t : tokens) {
        const auto v = token_vector(t);
        for (std::size_t i = 0; i < dim_; ++i) acc[i] += v[i];
      }
      for (double& x : acc) x /= static_cast<double>(tokens.size());
      rows.push_back(std::move(acc));
    }
  }
  if (rows.empty()) throw AdapterError("text has no tokens to encode");
  out.features.resize(rows.size(), dim_);
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), out.features.row(r).begin());
  return out;
}

// ---------------------------------------------------------------------------

std::string CachedTextAdapter::key(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

CachedTextAdapter::CachedTextAdapter(std::string name, Provenance provenance, const std::filesystem::path& cache_file)
    : name_(std::move(name)), provenance_(provenance) {
  if (!std::filesystem::exists(cache_file)) {
    throw AdapterError("adapter '" + name_ + "': no pretrained feature cache at " + cache_file.string() +
                       "; use --adapter synthetic");
  }
  try {
    for (auto& e : io::read_container(cache_file)) {
      if (e.rows != 1) throw AdapterError("feature cache entry '" + e.name + "' must be a single row");
      if (dim_ == 0) dim_ = e.cols;
      if (e.cols != dim_) throw AdapterError("feature cache rows differ in width");
      rows_.emplace(e.name, std::move(e.values));
    }
  } catch (const io::FormatError& e) {
    throw AdapterError("adapter '" + name_ + "': " + e.what());
  }
  if (rows_.empty()) throw AdapterError("adapter '" + name_ + "': empty feature cache");
}

TextFeatureSequence CachedTextAdapter::encode_text(std::span<const std::string> sentences, Granularity granularity) const {
  std::vector<std::string> units;
  if (granularity == Granularity::sentence) {
    units.assign(sentences.begin(), sentences.end());
  } else {
    for (const auto& s : sentences)
      for (auto& t : tokenize(s)) units.push_back(std::move(t));
  }
  TextFeatureSequence out;
  out.granularity = granularity;
  out.features.resize(units.size(), dim_);
  for (std::size_t r = 0; r < units.size(); ++r) {
    auto it = rows_.find(key(units[r]));
    if (it == rows_.end()) throw AdapterError("adapter '" + name_ + "': no cached features for \"" + units[r] + "\"");
    std::copy(it->second.begin(), it->second.end(), out.features.row(r).begin());
  }
  if (units.empty()) throw AdapterError("text has nothing to encode");
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::filesystem::path weights_dir(const AdapterOptions& opts) {
  if (opts.weights_dir) return *opts.weights_dir;
  if (const char* env = std::getenv("FARMARE_WEIGHTS_DIR")) return env;
  return {};
}

}  // namespace

std::vector<std::string> adapter_names() { return {"synthetic", "joint", "separate-vision", "separate-text"}; }

std::unique_ptr<VisionAdapter> make_vision_adapter(const std::string& name, const AdapterOptions& opts) {
  if (name == "synthetic") {
    if (opts.feature_dim == 0) throw AdapterError("synthetic vision adapter needs the corpus feature dimension");
    return std::make_unique<PassThroughVisionAdapter>("synthetic", Provenance::synthetic, opts.feature_dim);
  }
  if (name == "joint") return std::make_unique<PassThroughVisionAdapter>("joint", Provenance::joint, kJointFeatureDim);
  if (name == "separate-vision") {
    return std::make_unique<PassThroughVisionAdapter>("separate-vision", Provenance::separate, kSeparateVisionDim);
  }
  throw AdapterError("unknown vision adapter '" + name + "'");
}

std::unique_ptr<TextAdapter> make_text_adapter(const std::string& name, const AdapterOptions& opts) {
  if (name == "synthetic") {
    if (opts.feature_dim == 0) throw AdapterError("synthetic text adapter needs a feature dimension");
    return std::make_unique<SyntheticTextAdapter>(opts.feature_dim, opts.vocab_version, opts.text_alignment);
  }
  if (name == "joint" || name == "separate-text") {
    const auto dir = weights_dir(opts);
    if (dir.empty()) {
      throw AdapterError("adapter '" + name +
                         "' needs pretrained weights (set FARMARE_WEIGHTS_DIR); use --adapter synthetic");
    }
    return std::make_unique<CachedTextAdapter>(name, name == "joint" ? Provenance::joint : Provenance::separate,
                                               dir / name / "text_features.bin");
  }
  throw AdapterError("unknown text adapter '" + name + "'");
}

AdapterPair make_adapter_pair(const std::string& name, const dataset::CorpusManifest& manifest, AdapterOptions opts) {
  using dataset::FeatureSource;
  AdapterPair pair;
  if (opts.feature_dim == 0) opts.feature_dim = manifest.feature_dim;
  if (opts.vocab_version.empty() || opts.vocab_version == AdapterOptions{}.vocab_version) {
    opts.vocab_version = manifest.vocab_version;
  }
  if (name == "synthetic") {
    if (manifest.feature_source != FeatureSource::synthetic) {
      throw AdapterError("synthetic adapter requires a synthetic corpus (corpus features are " +
                         std::string(dataset::to_string(manifest.feature_source)) + ")");
    }
    pair.vision = make_vision_adapter("synthetic", opts);
    pair.text = make_text_adapter("synthetic", opts);
  } else if (name == "joint") {
    if (manifest.feature_source != FeatureSource::joint_backbone) {
      throw AdapterError("joint adapter requires a corpus extracted with the joint backbone");
    }
    pair.vision = make_vision_adapter("joint", opts);
    pair.text = make_text_adapter("joint", opts);
  } else if (name == "separate") {
    if (manifest.feature_source != FeatureSource::separate_backbone) {
      throw AdapterError("separate adapter requires a corpus extracted with the separate backbones");
    }
    pair.vision = make_vision_adapter("separate-vision", opts);
    pair.text = make_text_adapter("separate-text", opts);
  } else {
    throw AdapterError("unknown adapter '" + name + "' (expected synthetic|joint|separate)");
  }
  if (pair.vision->feature_dim() != manifest.feature_dim) {
    throw AdapterError("adapter '" + name + "' expects F_V=" + std::to_string(pair.vision->feature_dim()) +
                       " but the corpus manifest declares " + std::to_string(manifest.feature_dim));
  }
  return pair;
}

TextFeatureSequence encode_description(const TextAdapter& adapter, std::string_view description,
                                       Granularity granularity) {
  const auto sentences = split_sentences(description);
  return adapter.encode_text(sentences, granularity);
}

}  // namespace farmare::encoders
