#include "farmare/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <limits>

#include "farmare/container.hpp"
#include "farmare/rng.hpp"
#include "farmare/text.hpp"
#include "json.hpp"

namespace farmare::dataset {

using nlohmann::json;

FurnitureTag FurnitureTag::from_index(int index) {
  if (index < 0 || index >= static_cast<int>(kNumClasses)) {
    throw ConfigError("furniture tag index out of range [0, 25]: " + std::to_string(index));
  }
  return FurnitureTag(static_cast<std::uint8_t>(index));
}

FurnitureTag FurnitureTag::from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kFurnitureClassNames[i] == name) return FurnitureTag(static_cast<std::uint8_t>(i));
  }
  throw ConfigError("unknown furniture class name: " + std::string(name));
}

void ApartmentRecord::validate() const {
  const FeatureMatrix& f = viewpoint_features;
  if (f.rows == 0) throw ConfigError(id + ": apartment has no viewpoints");
  if (f.values.size() != f.rows * f.cols) throw ConfigError(id + ": feature matrix shape mismatch");
  if (viewpoint_tags.size() != f.rows) {
    throw ConfigError(id + ": " + std::to_string(viewpoint_tags.size()) + " tags for " +
                      std::to_string(f.rows) + " viewpoints");
  }
  if (description.find('.') == std::string::npos || encoders::word_count(description) == 0) {
    throw ConfigError(id + ": description has no period-terminated sentence");
  }
  if (description.find_first_of("\n\r\t") != std::string::npos) {
    throw ConfigError(id + ": description contains a line break or tab");
  }
}

std::string_view to_string(FeatureSource s) {
  switch (s) {
    case FeatureSource::synthetic: return "synthetic";
    case FeatureSource::joint_backbone: return "joint-backbone";
    case FeatureSource::separate_backbone: return "separate-backbone";
  }
  return "synthetic";
}

FeatureSource feature_source_from_string(std::string_view s) {
  if (s == "synthetic") return FeatureSource::synthetic;
  if (s == "joint-backbone") return FeatureSource::joint_backbone;
  if (s == "separate-backbone") return FeatureSource::separate_backbone;
  throw ConfigError("unknown feature source: " + std::string(s));
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split: " + std::string(s));
}

std::vector<const ApartmentRecord*> Corpus::split(Split s) const {
  std::vector<const ApartmentRecord*> out;
  for (const auto& rec : records) {
    auto it = manifest.split_assignments.find(rec.id);
    if (it != manifest.split_assignments.end() && it->second == s) out.push_back(&rec);
  }
  return out;
}

VocabTables VocabTables::defaults() {
  VocabTables v;
  for (std::size_t i = 0; i < kNumNamedClasses; ++i) v.categories.emplace_back(kFurnitureClassNames[i]);
  v.styles = {"japanese", "minimalist", "modern",  "nordic",   "industrial",    "vintage",
              "classic",  "rustic",     "chinese", "european", "mediterranean", "bohemian"};
  v.themes = {"smooth", "net",    "striped", "floral", "geometric", "plain",
              "checked", "wavy",  "dotted",  "glossy", "matte",     "textured"};
  v.materials = {"wooden", "composite", "metal",  "glass", "leather", "fabric",
                 "marble", "stone",     "plastic", "velvet", "rattan", "bamboo"};
  v.connectives = {"Moreover,", "Additionally,", "Furthermore,", "Also,", "In addition,", "Besides,"};
  return v;
}

void GeneratorConfig::validate() const {
  if (!(separability >= 0.0 && separability <= 1.0)) {
    throw ConfigError("separability must lie in [0, 1]");
  }
  if (!(tag_noise >= 0.0 && tag_noise <= 1.0)) throw ConfigError("tag noise rate must lie in [0, 1]");
  if (feature_dim == 0) throw ConfigError("feature dimension must be positive");
  if (vocab.categories.size() != kNumNamedClasses) {
    throw ConfigError("vocabulary must list the 25 furniture categories");
  }
  for (std::size_t i = 0; i < kNumNamedClasses; ++i) {
    if (vocab.categories[i] != kFurnitureClassNames[i]) {
      throw ConfigError("vocabulary category " + std::to_string(i) + " must be '" +
                        std::string(kFurnitureClassNames[i]) + "'");
    }
  }
  if (vocab.styles.empty() || vocab.themes.empty() || vocab.materials.empty()) {
    throw ConfigError("style, theme and material vocabularies must be non-empty");
  }
  if (!(mean_description_words > 0.0) || !(description_sigma >= 0.0)) {
    throw ConfigError("description length parameters must be positive");
  }
  if (min_description_words == 0 || min_description_words > max_description_words) {
    throw ConfigError("invalid description length bounds");
  }
  if (min_viewpoints == 0 || min_viewpoints > max_viewpoints) throw ConfigError("invalid viewpoint bounds");
  if (attribute_weight < 0.0) throw ConfigError("attribute weight must be non-negative");
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    n2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
  return v;
}

}  // namespace

ConceptSpace::ConceptSpace(const VocabTables& vocab, std::string_view vocab_version, std::size_t dim)
    : dim_(dim) {
  std::set<std::string> content;
  auto add = [&](const std::string& phrase) {
    for (auto& t : encoders::tokenize(phrase)) content.insert(t);
  };
  for (const auto& c : vocab.categories) add(c);
  for (const auto& s : vocab.styles) add(s);
  for (const auto& s : vocab.themes) add(s);
  for (const auto& s : vocab.materials) add(s);

  const std::uint64_t base = fnv1a(vocab_version);
  orthonormal_ = content.size() <= dim;
  std::vector<std::vector<double>> basis;
  for (const auto& tok : content) {
    Rng rng(derive_seed(base, "concept", fnv1a(tok)));
    std::vector<double> v = random_unit(rng, dim);
    if (orthonormal_) {
      // Modified Gram-Schmidt against the tokens already placed.
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) {
          const double d = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
          for (std::size_t i = 0; i < dim; ++i) v[i] -= d * b[i];
        }
      }
      const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
      for (double& x : v) x /= n;
      basis.push_back(v);
    }
    tokens_.emplace(tok, std::move(v));
  }

  for (const auto& c : vocab.categories) {
    std::vector<double> p(dim, 0.0);
    for (const auto& t : encoders::tokenize(c)) {
      const auto& q = tokens_.at(t);
      for (std::size_t i = 0; i < dim; ++i) p[i] += q[i];
    }
    const double n = std::sqrt(std::inner_product(p.begin(), p.end(), p.begin(), 0.0));
    for (double& x : p) x /= n;
    categories_.push_back(std::move(p));
  }
}

const std::vector<double>* ConceptSpace::token(std::string_view tok) const {
  auto it = tokens_.find(tok);
  return it == tokens_.end() ? nullptr : &it->second;
}

std::size_t viewpoint_count(std::size_t distinct_categories, std::size_t lo, std::size_t hi) {
  return std::clamp(distinct_categories, lo, hi);
}

// ---------------------------------------------------------------------------

namespace {

// Relative frequency of each furniture class in generated scenes.
constexpr std::array<double, kNumNamedClasses> kCategoryWeights = {
    4, 5, 3, 3, 6, 3, 3, 3, 3, 4, 4, 1, 1, 2, 6, 3, 4, 2, 4, 2, 4, 1, 2, 4, 3};

constexpr std::array<std::string_view, 6> kRooms = {"living room", "bedroom", "kitchen",
                                                    "hallway",     "study",   "guest room"};
constexpr std::array<std::string_view, 6> kMoods = {"cozy", "elegant", "warm", "bright", "refined", "pleasant"};
constexpr std::array<std::string_view, 4> kPlaces = {"entrance", "corner", "stairs", "balcony"};

struct Item {
  std::uint8_t category;
  std::uint16_t style;
  std::uint16_t theme;
  std::uint16_t material;
};

std::size_t pick_category(Rng& rng) {
  static const double total = std::accumulate(kCategoryWeights.begin(), kCategoryWeights.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < kNumNamedClasses; ++i) {
    u -= kCategoryWeights[i];
    if (u < 0.0) return i;
  }
  return kNumNamedClasses - 1;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[rng.below(v.size())];
}
template <typename T, std::size_t N>
const T& pick(Rng& rng, const std::array<T, N>& v) {
  return v[rng.below(N)];
}

std::string item_phrase(const Item& it, const VocabTables& vocab) {
  return "one " + vocab.styles[it.style] + " " + vocab.themes[it.theme] + " " + vocab.materials[it.material] +
         " " + vocab.categories[it.category];
}

Item random_item(Rng& rng, const VocabTables& vocab) {
  Item it{};
  it.category = static_cast<std::uint8_t>(pick_category(rng));
  it.style = static_cast<std::uint16_t>(rng.below(vocab.styles.size()));
  it.theme = static_cast<std::uint16_t>(rng.below(vocab.themes.size()));
  it.material = static_cast<std::uint16_t>(rng.below(vocab.materials.size()));
  return it;
}

// One sentence (without the final period) mentioning `items`.
std::string make_sentence(Rng& rng, const std::vector<Item>& items, const VocabTables& vocab) {
  std::string conn;
  if (!vocab.connectives.empty() && rng.bernoulli(0.5)) conn = pick(rng, vocab.connectives) + " ";

  if (items.size() == 1 && rng.bernoulli(0.04)) {
    std::string cat = vocab.categories[items[0].category];
    cat[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(cat[0])));
    return cat + " included";
  }

  std::string list;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) list += i + 1 == items.size() ? " and " : ", ";
    list += item_phrase(items[i], vocab);
  }

  std::string body;
  switch (rng.below(5)) {
    case 0: body = "the apartment has " + list; break;
    case 1: body = "there is " + list + " which gives the room a " + std::string(pick(rng, kMoods)) + " look"; break;
    case 2: body = "you can find " + list + " placed near the " + std::string(pick(rng, kPlaces)); break;
    case 3: body = "in the " + std::string(pick(rng, kRooms)) + " there is " + list; break;
    default: body = "the " + std::string(pick(rng, kRooms)) + " is furnished with " + list; break;
  }
  std::string s = conn + body;
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

constexpr double kItemContinue = 0.45;   // geometric tail for items per sentence
constexpr double kMeanSentenceWords = 16.4;

struct Scene {
  std::vector<Item> items;
  std::string description;
};

Scene make_scene(Rng& rng, const GeneratorConfig& cfg) {
  const double sigma = cfg.description_sigma;
  const double mu = std::log(cfg.mean_description_words) - 0.5 * sigma * sigma;
  const double drawn = std::exp(mu + sigma * rng.normal());
  const auto target = static_cast<double>(std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(drawn)), cfg.min_description_words, cfg.max_description_words));

  Scene scene;
  std::size_t words = 0;
  while (scene.items.empty() || static_cast<double>(words) + 0.8 * kMeanSentenceWords < target) {
    std::vector<Item> group{random_item(rng, cfg.vocab)};
    while (rng.bernoulli(kItemContinue)) group.push_back(random_item(rng, cfg.vocab));
    std::string s = make_sentence(rng, group, cfg.vocab);
    words += encoders::word_count(s);
    if (!scene.description.empty()) scene.description += ' ';
    scene.description += s;
    scene.description += '.';
    scene.items.insert(scene.items.end(), group.begin(), group.end());
  }
  return scene;
}

// Categories shown by the viewpoints: the most frequent distinct classes
// (first-appearance order breaks ties), cycled when fewer than the minimum.
std::vector<std::uint8_t> viewpoint_categories(const std::vector<Item>& items, const GeneratorConfig& cfg) {
  std::vector<std::uint8_t> order;
  std::array<std::size_t, kNumNamedClasses> counts{};
  for (const Item& it : items) {
    if (counts[it.category]++ == 0) order.push_back(it.category);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint8_t a, std::uint8_t b) { return counts[a] > counts[b]; });
  const std::size_t v = viewpoint_count(order.size(), cfg.min_viewpoints, cfg.max_viewpoints);
  std::vector<std::uint8_t> shown;
  for (std::size_t i = 0; i < v; ++i) shown.push_back(order[i % order.size()]);
  return shown;
}

}  // namespace

GeneratedCorpus generate_corpus_detailed(std::size_t n, std::uint64_t seed, const GeneratorConfig& cfg) {
  if (n == 0) throw ConfigError("corpus size must be at least 1");
  cfg.validate();
  const ConceptSpace space(cfg.vocab, cfg.vocab_version, cfg.feature_dim);
  const std::size_t dim = cfg.feature_dim;
  const double lambda = cfg.separability;
  const double noise_sd = 1.0 / std::sqrt(static_cast<double>(dim));

  GeneratedCorpus out;
  out.corpus.records.resize(n);
  out.true_categories.resize(n);
  out.furniture.resize(n);
  const std::size_t width = std::max<std::size_t>(6, std::to_string(n - 1).size());

  for (std::size_t i = 0; i < n; ++i) {
    Rng scene_rng(derive_seed(seed, "scene", i));
    Rng feature_rng(derive_seed(seed, "feature-noise", i));
    Rng tag_rng(derive_seed(seed, "tag-noise", i));

    Scene scene = make_scene(scene_rng, cfg);
    const std::vector<std::uint8_t> shown = viewpoint_categories(scene.items, cfg);

    ApartmentRecord& rec = out.corpus.records[i];
    const std::string num = std::to_string(i);
    rec.id = "apt-" + std::string(width > num.size() ? width - num.size() : 0, '0') + num;
    rec.description = std::move(scene.description);
    rec.viewpoint_features.rows = shown.size();
    rec.viewpoint_features.cols = dim;
    rec.viewpoint_features.values.resize(shown.size() * dim);

    std::vector<double> signal(dim);
    std::vector<double> attrs(dim);
    for (std::size_t v = 0; v < shown.size(); ++v) {
      const std::uint8_t c = shown[v];
      std::fill(attrs.begin(), attrs.end(), 0.0);
      for (const Item& it : scene.items) {
        if (it.category != c) continue;
        for (const std::string* w : {&cfg.vocab.styles[it.style], &cfg.vocab.themes[it.theme],
                                     &cfg.vocab.materials[it.material]}) {
          for (const auto& tok : encoders::tokenize(*w)) {
            const auto& q = *space.token(tok);
            for (std::size_t d = 0; d < dim; ++d) attrs[d] += q[d];
          }
        }
      }
      const double an = std::sqrt(std::inner_product(attrs.begin(), attrs.end(), attrs.begin(), 0.0));
      const auto& proto = space.category(c);
      for (std::size_t d = 0; d < dim; ++d) {
        signal[d] = proto[d] + (an > 0.0 ? cfg.attribute_weight * attrs[d] / an : 0.0);
      }
      auto row = rec.viewpoint_features.row(v);
      for (std::size_t d = 0; d < dim; ++d) {
        const double noise = lambda < 1.0 ? feature_rng.normal(0.0, noise_sd) : 0.0;
        row[d] = static_cast<float>(lambda * signal[d] + (1.0 - lambda) * noise);
      }

      std::uint8_t tag = c;
      if (tag_rng.bernoulli(cfg.tag_noise)) {
        // Uniform substitution by one of the 25 other classes (including "unknown").
        auto alt = static_cast<std::uint8_t>(tag_rng.below(kNumClasses - 1));
        tag = alt >= c ? static_cast<std::uint8_t>(alt + 1) : alt;
      }
      rec.viewpoint_tags.push_back(FurnitureTag::from_index(tag));
    }
    out.true_categories[i] = shown;
    for (const Item& it : scene.items) out.furniture[i].push_back(it.category);
    rec.validate();
  }

  CorpusManifest& m = out.corpus.manifest;
  m.num_apartments = n;
  m.generator_seed = seed;
  m.vocab_version = cfg.vocab_version;
  m.feature_dim = dim;
  m.feature_source = FeatureSource::synthetic;
  m.split_assignments = split_corpus(out.corpus, cfg.split, seed).split_assignments;
  return out;
}

Corpus generate_corpus(std::size_t n, std::uint64_t seed, const GeneratorConfig& config) {
  return std::move(generate_corpus_detailed(n, seed, config).corpus);
}

CorpusManifest split_corpus(const Corpus& corpus, SplitRatios r, std::uint64_t seed) {
  if (r.train < 0.0 || r.val < 0.0 || r.test < 0.0) throw ConfigError("split ratios must be non-negative");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (r.test <= 0.0) throw ConfigError("split has a zero test share; evaluation would be impossible");
  const std::size_t n = corpus.records.size();
  if (n == 0) throw ConfigError("cannot split an empty corpus");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  const auto n_test = std::min<std::size_t>(n, std::max<std::size_t>(1, std::llround(r.test * static_cast<double>(n))));
  const auto n_val = std::min<std::size_t>(n - n_test, std::llround(r.val * static_cast<double>(n)));

  CorpusManifest m = corpus.manifest;
  m.num_apartments = n;
  m.split_assignments.clear();
  for (std::size_t k = 0; k < n; ++k) {
    const Split s = k < n_test ? Split::test : (k < n_test + n_val ? Split::val : Split::train);
    m.split_assignments[corpus.records[order[k]].id] = s;
  }
  return m;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kTagsVersion = 1;
constexpr int kManifestVersion = 1;

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const CorpusManifest& m = corpus.manifest;

  json manifest;
  manifest["format_version"] = kManifestVersion;
  manifest["num_apartments"] = corpus.records.size();
  manifest["generator_seed"] = m.generator_seed;
  manifest["vocab_version"] = m.vocab_version;
  manifest["feature_dim"] = m.feature_dim;
  manifest["feature_source"] = std::string(to_string(m.feature_source));
  json ids = json::array();
  json splits = json::object();
  for (const auto& rec : corpus.records) {
    rec.validate();
    if (rec.viewpoint_features.cols != m.feature_dim) {
      throw ConfigError(rec.id + ": feature dimension differs from the manifest");
    }
    ids.push_back(rec.id);
    auto it = m.split_assignments.find(rec.id);
    if (it == m.split_assignments.end()) throw ConfigError(rec.id + ": no split assignment");
    splits[rec.id] = std::string(to_string(it->second));
  }
  manifest["records"] = std::move(ids);
  manifest["splits"] = std::move(splits);
  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  }

  {
    // Streamed straight into the container layout; a corpus can be large.
    io::ByteWriter w;
    w.raw("FMC1", 4);
    w.u32(io::kContainerVersion);
    w.u32(static_cast<std::uint32_t>(corpus.records.size()));
    for (const auto& rec : corpus.records) {
      w.str(rec.id);
      w.u8(static_cast<std::uint8_t>(io::DType::f32));
      w.u32(static_cast<std::uint32_t>(rec.viewpoint_features.rows));
      w.u32(static_cast<std::uint32_t>(rec.viewpoint_features.cols));
      for (float v : rec.viewpoint_features.values) w.f32(v);
    }
    io::write_with_crc(dir / "features.bin", w);
  }

  {
    io::ByteWriter w;
    w.raw("FTG1", 4);
    w.u32(kTagsVersion);
    w.u32(static_cast<std::uint32_t>(corpus.records.size()));
    for (const auto& rec : corpus.records) {
      w.str(rec.id);
      w.u32(static_cast<std::uint32_t>(rec.viewpoint_tags.size()));
      for (const auto& t : rec.viewpoint_tags) w.u8(t.index());
    }
    io::write_with_crc(dir / "tags.bin", w);
  }

  {
    std::ofstream out(dir / "descriptions.txt", std::ios::trunc | std::ios::binary);
    for (const auto& rec : corpus.records) out << rec.id << '\t' << rec.description << '\n';
    if (!out) throw std::runtime_error("cannot write " + (dir / "descriptions.txt").string());
  }
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  CorpusManifest& m = corpus.manifest;
  std::vector<std::string> ids;
  try {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw LoadError("cannot open " + (dir / "manifest.json").string());
    const json j = json::parse(in);
    if (j.at("format_version").get<int>() != kManifestVersion) throw LoadError("unsupported manifest version");
    m.num_apartments = j.at("num_apartments").get<std::size_t>();
    m.generator_seed = j.at("generator_seed").get<std::uint64_t>();
    m.vocab_version = j.at("vocab_version").get<std::string>();
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    m.feature_source = feature_source_from_string(j.at("feature_source").get<std::string>());
    ids = j.at("records").get<std::vector<std::string>>();
    for (const auto& [id, s] : j.at("splits").items()) {
      m.split_assignments[id] = split_from_string(s.get<std::string>());
    }
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError("malformed manifest: " + std::string(e.what()));
  }
  if (ids.size() != m.num_apartments) throw LoadError("manifest record count mismatch");

  std::map<std::string, std::size_t, std::less<>> index;
  corpus.records.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!index.emplace(ids[i], i).second) throw LoadError(ids[i] + ": duplicate record id");
    if (!m.split_assignments.contains(ids[i])) throw LoadError(ids[i] + ": no split assignment");
    corpus.records[i].id = ids[i];
  }
  if (m.split_assignments.size() != ids.size()) throw LoadError("split assignments name unknown records");
  auto lookup = [&](const std::string& id) -> ApartmentRecord& {
    auto it = index.find(id);
    if (it == index.end()) throw LoadError(id + ": record not listed in the manifest");
    return corpus.records[it->second];
  };

  try {
    std::vector<std::uint8_t> bytes;
    const std::size_t payload = io::read_with_crc(dir / "features.bin", bytes);
    io::ByteReader r(bytes, payload);
    r.expect_magic("FMC1");
    if (r.u32() != io::kContainerVersion) throw LoadError("features.bin: unsupported version");
    const std::uint32_t count = r.u32();
    if (count != ids.size()) throw LoadError("features.bin: record count mismatch");
    for (std::uint32_t k = 0; k < count; ++k) {
      const std::string id = r.str();
      ApartmentRecord& rec = lookup(id);
      if (r.u8() != static_cast<std::uint8_t>(io::DType::f32)) throw LoadError(id + ": features must be f32");
      FeatureMatrix& f = rec.viewpoint_features;
      f.rows = r.u32();
      f.cols = r.u32();
      if (f.cols != m.feature_dim) {
        throw LoadError(id + ": feature dimension " + std::to_string(f.cols) + " does not match manifest F_V " +
                        std::to_string(m.feature_dim));
      }
      f.values.resize(f.rows * f.cols);
      for (float& v : f.values) {
        v = r.f32();
        if (!std::isfinite(v)) throw LoadError(id + ": non-finite feature value");
      }
    }
    if (!r.at_end()) throw LoadError("features.bin: trailing bytes");
  } catch (const io::FormatError& e) {
    throw LoadError(std::string("features.bin: ") + e.what());
  }

  try {
    std::vector<std::uint8_t> bytes;
    const std::size_t payload = io::read_with_crc(dir / "tags.bin", bytes);
    io::ByteReader r(bytes, payload);
    r.expect_magic("FTG1");
    if (r.u32() != kTagsVersion) throw LoadError("tags.bin: unsupported version");
    const std::uint32_t count = r.u32();
    if (count != ids.size()) throw LoadError("tags.bin: record count mismatch");
    for (std::uint32_t k = 0; k < count; ++k) {
      const std::string id = r.str();
      ApartmentRecord& rec = lookup(id);
      const std::uint32_t v = r.u32();
      for (std::uint32_t t = 0; t < v; ++t) {
        const std::uint8_t idx = r.u8();
        if (idx >= kNumClasses) throw LoadError(id + ": unknown tag index " + std::to_string(idx));
        rec.viewpoint_tags.push_back(FurnitureTag::from_index(idx));
      }
    }
    if (!r.at_end()) throw LoadError("tags.bin: trailing bytes");
  } catch (const io::FormatError& e) {
    throw LoadError(std::string("tags.bin: ") + e.what());
  }

  {
    std::ifstream in(dir / "descriptions.txt", std::ios::binary);
    if (!in) throw LoadError("cannot open " + (dir / "descriptions.txt").string());
    std::string line;
    std::size_t seen = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw LoadError("descriptions.txt: line without id prefix");
      ApartmentRecord& rec = lookup(line.substr(0, tab));
      rec.description = line.substr(tab + 1);
      ++seen;
    }
    if (seen != ids.size()) throw LoadError("descriptions.txt: record count mismatch");
  }

  for (const auto& rec : corpus.records) {
    try {
      rec.validate();
    } catch (const ConfigError& e) {
      throw LoadError(e.what());
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------

CorpusStatistics corpus_statistics(const Corpus& corpus, std::size_t top_k) {
  if (corpus.records.empty()) throw ConfigError("statistics of an empty corpus");
  CorpusStatistics st;
  st.num_apartments = corpus.records.size();
  st.description_words.min = std::numeric_limits<std::size_t>::max();
  st.sentence_words.min = std::numeric_limits<std::size_t>::max();
  double desc_total = 0.0;
  double sent_total = 0.0;
  double vp_total = 0.0;
  std::map<std::string, std::size_t> counts;
  std::size_t token_total = 0;

  for (const auto& rec : corpus.records) {
    const auto tokens = encoders::tokenize(rec.description);
    const std::size_t w = tokens.size();
    desc_total += static_cast<double>(w);
    st.description_words.min = std::min(st.description_words.min, w);
    st.description_words.max = std::max(st.description_words.max, w);
    for (const auto& s : encoders::split_sentences(rec.description)) {
      const std::size_t sw = encoders::word_count(s);
      if (sw == 0) continue;
      ++st.num_sentences;
      sent_total += static_cast<double>(sw);
      st.sentence_words.min = std::min(st.sentence_words.min, sw);
      st.sentence_words.max = std::max(st.sentence_words.max, sw);
    }
    for (const auto& t : tokens) {
      if (encoders::is_stop_word(t)) continue;
      ++counts[t];
      ++token_total;
    }
    vp_total += static_cast<double>(rec.num_viewpoints());
  }
  const auto n = static_cast<double>(st.num_apartments);
  st.description_words.mean = desc_total / n;
  st.sentence_words.mean = st.num_sentences ? sent_total / static_cast<double>(st.num_sentences) : 0.0;
  if (st.num_sentences == 0) st.sentence_words.min = 0;
  st.mean_viewpoints = vp_total / n;

  std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (std::size_t i = 0; i < std::min(top_k, sorted.size()); ++i) {
    st.top_tokens.push_back({sorted[i].first, sorted[i].second,
                             static_cast<double>(sorted[i].second) / static_cast<double>(token_total)});
  }
  return st;
}

}  // namespace farmare::dataset
