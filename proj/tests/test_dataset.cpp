#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "farmare/container.hpp"
#include "farmare/dataset.hpp"
#include "farmare/text.hpp"

using namespace farmare;
using namespace farmare::dataset;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "farmare_dataset_test" / name;
  fs::remove_all(dir);
  return dir;
}

GeneratorConfig small_config(double lambda = 1.0, double noise = 0.0) {
  GeneratorConfig g;
  g.separability = lambda;
  g.tag_noise = noise;
  g.feature_dim = 64;
  return g;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) { return io::read_file(p); }

}  // namespace

TEST(FurnitureTag, IndexAndNameRoundTrip) {
  for (int i = 0; i < 26; ++i) {
    const auto t = FurnitureTag::from_index(i);
    EXPECT_EQ(t.index(), i);
    EXPECT_EQ(FurnitureTag::from_name(t.name()), t);
  }
  EXPECT_EQ(FurnitureTag::from_index(25), FurnitureTag::unknown());
  EXPECT_THROW(FurnitureTag::from_index(26), ConfigError);
  EXPECT_THROW(FurnitureTag::from_index(-1), ConfigError);
}

TEST(FurnitureTag, FixedClassOrder) {
  EXPECT_EQ(kFurnitureClassNames[0], "bed");
  EXPECT_EQ(kFurnitureClassNames[3], "ceramic floor");
  EXPECT_EQ(kFurnitureClassNames[11], "futec frame");
  EXPECT_EQ(kFurnitureClassNames[21], "transparent closet");
  EXPECT_EQ(kFurnitureClassNames[24], "wooden floor");
  EXPECT_EQ(kFurnitureClassNames[25], "unknown");
}

TEST(Generator, SameSeedGivesIdenticalCorpus) {
  const auto a = generate_corpus(40, 7, small_config(0.6, 0.1));
  const auto b = generate_corpus(40, 7, small_config(0.6, 0.1));
  EXPECT_EQ(a, b);
  const auto c = generate_corpus(40, 8, small_config(0.6, 0.1));
  EXPECT_NE(a.records, c.records);
}

TEST(Generator, PrefixStableAcrossCorpusSize) {
  const auto a = generate_corpus(20, 3, small_config());
  const auto b = generate_corpus(30, 3, small_config());
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(a.records[i], b.records[i]);
}

TEST(Generator, RecordsSatisfyInvariants) {
  const auto c = generate_corpus(60, 1, small_config(0.5, 0.2));
  std::set<std::string> ids;
  for (const auto& r : c.records) {
    EXPECT_NO_THROW(r.validate());
    EXPECT_GE(r.num_viewpoints(), 3u);
    EXPECT_LE(r.num_viewpoints(), 15u);
    EXPECT_EQ(r.viewpoint_features.cols, 64u);
    EXPECT_EQ(r.viewpoint_tags.size(), r.num_viewpoints());
    const auto words = encoders::word_count(r.description);
    EXPECT_GE(words, 19u);
    EXPECT_LE(words, 1905u + 100u);
    EXPECT_TRUE(ids.insert(r.id).second);
  }
}

TEST(Generator, RejectsInvalidConfig) {
  auto g = small_config();
  g.separability = 1.5;
  EXPECT_THROW(g.validate(), ConfigError);
  g = small_config();
  g.tag_noise = -0.1;
  EXPECT_THROW(g.validate(), ConfigError);
  g = small_config();
  g.feature_dim = 0;
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(Generator, SeparableFeaturesAreNearestToTheirCategoryPrototype) {
  const auto g = small_config(1.0, 0.0);
  const auto gen = generate_corpus_detailed(40, 5, g);
  const ConceptSpace space(g.vocab, g.vocab_version, g.feature_dim);
  std::size_t total = 0, hits = 0;
  for (std::size_t i = 0; i < gen.corpus.records.size(); ++i) {
    const auto& r = gen.corpus.records[i];
    for (std::size_t v = 0; v < r.num_viewpoints(); ++v) {
      const auto row = r.viewpoint_features.row(v);
      std::size_t best = 0;
      double best_s = -1e300;
      for (std::size_t c = 0; c < kNumNamedClasses; ++c) {
        const auto& p = space.category(c);
        double s = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) s += row[k] * p[k];
        if (s > best_s) {
          best_s = s;
          best = c;
        }
      }
      ++total;
      hits += best == gen.true_categories[i][v];
      EXPECT_EQ(r.viewpoint_tags[v].index(), gen.true_categories[i][v]);
    }
  }
  EXPECT_EQ(hits, total);
}

TEST(Generator, TagNoiseRateMatchesConfiguredProbability) {
  const double p = 0.1;
  const auto gen = generate_corpus_detailed(400, 9, small_config(0.6, p));
  std::size_t total = 0, flipped = 0;
  for (std::size_t i = 0; i < gen.corpus.records.size(); ++i) {
    for (std::size_t v = 0; v < gen.true_categories[i].size(); ++v) {
      ++total;
      flipped += gen.corpus.records[i].viewpoint_tags[v].index() != gen.true_categories[i][v];
    }
  }
  const double n = static_cast<double>(total);
  const double sd = std::sqrt(n * p * (1 - p));
  EXPECT_NEAR(static_cast<double>(flipped), n * p, 4.0 * sd);
}

TEST(Generator, ViewpointCountClamp) {
  EXPECT_EQ(viewpoint_count(0), 3u);
  EXPECT_EQ(viewpoint_count(2), 3u);
  EXPECT_EQ(viewpoint_count(9), 9u);
  EXPECT_EQ(viewpoint_count(22), 15u);
}

TEST(Split, DeterministicAndDisjoint) {
  const auto c = generate_corpus(100, 2, small_config());
  const auto m1 = split_corpus(c, {}, 4);
  const auto m2 = split_corpus(c, {}, 4);
  EXPECT_EQ(m1.split_assignments, m2.split_assignments);
  std::map<Split, std::size_t> counts;
  for (const auto& [id, s] : m1.split_assignments) ++counts[s];
  EXPECT_EQ(m1.split_assignments.size(), 100u);
  EXPECT_EQ(counts[Split::train] + counts[Split::val] + counts[Split::test], 100u);
  EXPECT_EQ(counts[Split::test], 15u);
  EXPECT_EQ(counts[Split::val], 15u);
}

TEST(Split, RejectsBadRatios) {
  const auto c = generate_corpus(10, 2, small_config());
  EXPECT_THROW(split_corpus(c, {0.8, 0.2, 0.0}, 1), ConfigError);
  EXPECT_THROW(split_corpus(c, {0.5, 0.2, 0.2}, 1), ConfigError);
}

TEST(Split, TinyCorpusStillHasATestApartment) {
  const auto c = generate_corpus(3, 2, small_config());
  const auto m = split_corpus(c, {}, 1);
  std::size_t test = 0;
  for (const auto& [id, s] : m.split_assignments) test += s == Split::test;
  EXPECT_GE(test, 1u);
}

TEST(Storage, SaveLoadRoundTrip) {
  const auto c = generate_corpus(25, 3, small_config(0.7, 0.1));
  const auto dir = temp_dir("roundtrip");
  save_corpus(c, dir);
  const auto back = load_corpus(dir);
  EXPECT_EQ(back.manifest, c.manifest);
  ASSERT_EQ(back.records.size(), c.records.size());
  for (std::size_t i = 0; i < c.records.size(); ++i) EXPECT_EQ(back.records[i], c.records[i]) << c.records[i].id;
}

TEST(Storage, SameSeedWritesIdenticalFiles) {
  const auto d1 = temp_dir("same1"), d2 = temp_dir("same2");
  save_corpus(generate_corpus(15, 11, small_config()), d1);
  save_corpus(generate_corpus(15, 11, small_config()), d2);
  for (const char* f : {"manifest.json", "features.bin", "tags.bin", "descriptions.txt"}) {
    EXPECT_EQ(file_bytes(d1 / f), file_bytes(d2 / f)) << f;
  }
}

TEST(Storage, CorruptFeatureFileIsRejected) {
  const auto dir = temp_dir("corrupt");
  save_corpus(generate_corpus(5, 1, small_config()), dir);
  auto bytes = file_bytes(dir / "features.bin");
  bytes[bytes.size() / 2] ^= 0xFF;
  io::write_file(dir / "features.bin", bytes);
  EXPECT_ANY_THROW(load_corpus(dir));
}

TEST(Storage, OutOfRangeTagNamesTheRecord) {
  const auto dir = temp_dir("badtag");
  auto c = generate_corpus(4, 1, small_config());
  save_corpus(c, dir);
  // Rewrite tags.bin with one out-of-range tag on the third record.
  io::ByteWriter w;
  w.raw("FTG1", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(c.records.size()));
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto& r = c.records[i];
    w.str(r.id);
    w.u32(static_cast<std::uint32_t>(r.viewpoint_tags.size()));
    for (std::size_t v = 0; v < r.viewpoint_tags.size(); ++v) w.u8(i == 2 && v == 0 ? 30 : r.viewpoint_tags[v].index());
  }
  io::write_with_crc(dir / "tags.bin", w);
  try {
    load_corpus(dir);
    FAIL() << "expected a load error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find(c.records[2].id), std::string::npos) << e.what();
  }
}

TEST(Storage, FeatureWidthMismatchNamesTheRecord) {
  const auto dir = temp_dir("width");
  auto c = generate_corpus(3, 1, small_config());
  save_corpus(c, dir);
  auto entries = io::read_container(dir / "features.bin");
  entries[1].cols = 32;
  entries[1].values.resize(entries[1].rows * 32);
  io::write_container(dir / "features.bin", entries);
  try {
    load_corpus(dir);
    FAIL() << "expected a load error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find(c.records[1].id), std::string::npos) << e.what();
  }
}

TEST(Storage, MissingDirectoryFails) { EXPECT_ANY_THROW(load_corpus(temp_dir("does-not-exist"))); }

TEST(Statistics, ReportsLengthsAndTopTokens) {
  const auto c = generate_corpus(200, 4, small_config());
  const auto s = corpus_statistics(c, 10);
  EXPECT_EQ(s.num_apartments, 200u);
  EXPECT_GT(s.num_sentences, 200u);
  EXPECT_LE(s.description_words.min, s.description_words.mean);
  EXPECT_LE(s.description_words.mean, s.description_words.max);
  EXPECT_LE(s.sentence_words.min, s.sentence_words.mean);
  ASSERT_EQ(s.top_tokens.size(), 10u);
  for (std::size_t i = 1; i < s.top_tokens.size(); ++i) EXPECT_GE(s.top_tokens[i - 1].count, s.top_tokens[i].count);
  for (const auto& t : s.top_tokens) EXPECT_FALSE(encoders::is_stop_word(t.token)) << t.token;
  // The mean of per-description word counts matches a direct recount.
  double sum = 0.0;
  for (const auto& r : c.records) sum += static_cast<double>(encoders::word_count(r.description));
  EXPECT_NEAR(s.description_words.mean, sum / 200.0, 1e-9);
}

TEST(Statistics, DescriptionLengthIsCalibrated) {
  const auto c = generate_corpus(1500, 1, small_config());
  const auto s = corpus_statistics(c);
  EXPECT_NEAR(s.description_words.mean, 319.0, 0.08 * 319.0);
  EXPECT_NEAR(s.sentence_words.mean, 16.4, 0.12 * 16.4);
}
