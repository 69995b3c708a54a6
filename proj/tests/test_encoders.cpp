#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "farmare/container.hpp"
#include "farmare/dataset.hpp"
#include "farmare/encoders.hpp"
#include "farmare/models.hpp"
#include "farmare/text.hpp"

using namespace farmare;
using namespace farmare::encoders;
namespace fs = std::filesystem;

TEST(Text, SplitsSentencesAndDropsEmpties) {
  const auto s = split_sentences("One bed.  Two chairs . . Also, a lamp");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], "One bed");
  EXPECT_EQ(s[1], "Two chairs");
  EXPECT_EQ(s[2], "Also, a lamp");
}

TEST(Text, TokenizeLowercasesAndStripsPunctuation) {
  const auto t = tokenize("Moreover, one NORDIC sofa!");
  const std::vector<std::string> expect = {"moreover", "one", "nordic", "sofa"};
  EXPECT_EQ(t, expect);
  EXPECT_EQ(word_count("a b  c"), 3u);
  EXPECT_TRUE(is_stop_word("the"));
  EXPECT_TRUE(is_stop_word("moreover"));
  EXPECT_FALSE(is_stop_word("sofa"));
}

TEST(Tagger, ConfidenceThreshold) {
  EXPECT_TRUE(tag_viewpoint(RawDetection{4, 0.09}).tag.is_unknown());
  const auto kept = tag_viewpoint(RawDetection{4, 0.10});
  EXPECT_EQ(kept.tag.index(), 4);
  EXPECT_EQ(kept.tag.name(), "chair");
  EXPECT_EQ(tag_viewpoint(RawDetection{24, 1.0}).tag.name(), "wooden floor");
}

TEST(Tagger, RejectsInvalidDetections) {
  EXPECT_THROW(tag_viewpoint(RawDetection{25, 0.5}), std::invalid_argument);
  EXPECT_THROW(tag_viewpoint(RawDetection{-1, 0.5}), std::invalid_argument);
  EXPECT_THROW(tag_viewpoint(RawDetection{3, 1.5}), std::invalid_argument);
  EXPECT_THROW(tag_viewpoint(RawDetection{3, -0.1}), std::invalid_argument);
}

TEST(Tagger, PicksTopConfidenceDetection) {
  std::vector<RawDetection> d = {{1, 0.3}, {7, 0.8}, {2, 0.5}};
  EXPECT_EQ(tag_viewpoint(d).tag.index(), 7);
  EXPECT_TRUE(tag_viewpoint(std::span<const RawDetection>{}).tag.is_unknown());
  std::vector<RawDetection> weak = {{1, 0.05}, {7, 0.08}};
  EXPECT_TRUE(tag_viewpoint(weak).tag.is_unknown());
}

TEST(Tagger, CorpusDetectorReplaysTags) {
  dataset::GeneratorConfig g;
  g.feature_dim = 32;
  const auto c = dataset::generate_corpus(3, 1, g);
  CorpusTagDetector det;
  for (const auto& r : c.records) {
    for (std::size_t v = 0; v < r.num_viewpoints(); ++v) {
      EXPECT_EQ(tag_viewpoint(det.detect(r, v)).tag, r.viewpoint_tags[v]);
    }
  }
}

TEST(VisionAdapter, PassThroughShapesAndValidation) {
  dataset::GeneratorConfig g;
  g.feature_dim = 32;
  auto c = dataset::generate_corpus(2, 1, g);
  PassThroughVisionAdapter a("synthetic", Provenance::synthetic, 32);
  const auto set = a.encode_images(c.records[0]);
  EXPECT_EQ(set.features.rows(), c.records[0].num_viewpoints());
  EXPECT_EQ(set.features.cols(), 32u);
  EXPECT_EQ(set.features(0, 0), static_cast<double>(c.records[0].viewpoint_features.values[0]));

  PassThroughVisionAdapter wide("joint", Provenance::joint, 512);
  EXPECT_THROW(wide.encode_images(c.records[0]), AdapterError);

  c.records[1].viewpoint_features.values[3] = std::nanf("");
  EXPECT_THROW(a.encode_images(c.records[1]), AdapterError);
}

TEST(TextAdapter, SyntheticShapesPerGranularity) {
  SyntheticTextAdapter a(48, "farmare-synth-v1");
  const std::string d = "One modern sofa. Also, one wooden bed and one lamp.";
  const auto sent = encode_description(a, d, Granularity::sentence);
  EXPECT_EQ(sent.features.rows(), 2u);
  EXPECT_EQ(sent.features.cols(), 48u);
  const auto tok = encode_description(a, d, Granularity::token);
  EXPECT_EQ(tok.features.rows(), tokenize(d).size());
  // The sentence vector is the mean of its token vectors.
  const auto first = tokenize("One modern sofa");
  for (std::size_t k = 0; k < 48; ++k) {
    double m = 0.0;
    for (std::size_t t = 0; t < first.size(); ++t) m += tok.features(t, k);
    EXPECT_NEAR(sent.features(0, k), m / static_cast<double>(first.size()), 1e-12);
  }
}

TEST(TextAdapter, SyntheticIsDeterministic) {
  SyntheticTextAdapter a(32, "farmare-synth-v1"), b(32, "farmare-synth-v1");
  EXPECT_EQ(a.token_vector("sofa"), b.token_vector("sofa"));
  EXPECT_EQ(a.token_vector("zebra"), b.token_vector("zebra"));
  EXPECT_NE(a.token_vector("sofa"), a.token_vector("bed"));
}

TEST(TextAdapter, ContentTokensAlignWithConceptSpace) {
  const double rho = 0.5;
  SyntheticTextAdapter a(128, "farmare-synth-v1", rho);
  const dataset::ConceptSpace space(dataset::VocabTables::defaults(), "farmare-synth-v1", 128);
  const auto v = a.token_vector("sofa");
  const auto* p = space.token("sofa");
  ASSERT_NE(p, nullptr);
  double dot = 0.0;
  for (std::size_t k = 0; k < 128; ++k) dot += v[k] * (*p)[k];
  EXPECT_NEAR(dot, rho, 0.3);
}

TEST(TextAdapter, EmptyTextIsAnError) {
  SyntheticTextAdapter a(16, "farmare-synth-v1");
  EXPECT_THROW(encode_description(a, " . . ", Granularity::sentence), AdapterError);
}

TEST(AdapterRegistry, PairRespectsCorpusProvenance) {
  dataset::CorpusManifest m;
  m.feature_dim = 64;
  m.vocab_version = "farmare-synth-v1";
  m.feature_source = dataset::FeatureSource::synthetic;
  const auto pair = make_adapter_pair("synthetic", m);
  EXPECT_EQ(pair.vision->feature_dim(), 64u);
  EXPECT_EQ(pair.text->feature_dim(), 64u);
  EXPECT_THROW(make_adapter_pair("joint", m), AdapterError);
  EXPECT_THROW(make_adapter_pair("separate", m), AdapterError);
  EXPECT_THROW(make_adapter_pair("bogus", m), AdapterError);
}

TEST(AdapterRegistry, PretrainedTextNeedsFeatureCache) {
  dataset::CorpusManifest m;
  m.feature_dim = 512;
  m.feature_source = dataset::FeatureSource::joint_backbone;
  AdapterOptions opts;
  opts.weights_dir = fs::temp_directory_path() / "farmare_no_weights_here";
  try {
    make_adapter_pair("joint", m, opts);
    FAIL() << "expected an adapter error";
  } catch (const AdapterError& e) {
    EXPECT_NE(std::string(e.what()).find("synthetic"), std::string::npos);
  }
}

TEST(AdapterRegistry, CachedTextAdapterReadsFeatureRows) {
  const auto dir = fs::temp_directory_path() / "farmare_cache_test" / "joint";
  fs::create_directories(dir);
  std::vector<io::Entry> rows = {
      {CachedTextAdapter::key("one sofa"), io::DType::f32, 1, 3, {1, 2, 3}},
      {CachedTextAdapter::key("one bed"), io::DType::f32, 1, 3, {4, 5, 6}},
  };
  io::write_container(dir / "text_features.bin", rows);
  CachedTextAdapter a("joint", Provenance::joint, dir / "text_features.bin");
  EXPECT_EQ(a.feature_dim(), 3u);
  const auto out = encode_description(a, "one sofa. one bed.", Granularity::sentence);
  ASSERT_EQ(out.features.rows(), 2u);
  EXPECT_EQ(out.features(1, 2), 6.0);
  EXPECT_THROW(encode_description(a, "one lamp.", Granularity::sentence), AdapterError);
}

TEST(Nlb, RefusesSeparatelyTrainedBackbones) {
  VisualFeatureSet v{Matrix(3, 4, 1.0), Provenance::separate};
  TextFeatureSequence t{Matrix(2, 4, 1.0), Granularity::sentence};
  EXPECT_THROW(models::nlb_encode(v, t), std::invalid_argument);
  v.provenance = Provenance::joint;
  const auto e = models::nlb_encode(v, t);
  EXPECT_EQ(e.scene.size(), 4u);
  EXPECT_EQ(e.query.size(), 4u);
}
