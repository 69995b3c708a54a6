#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "farmare/container.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;  // stdout and stderr
};

Result run(const std::string& args) {
  const std::string cmd = std::string(FARMARE_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path work(const std::string& name) {
  auto d = fs::temp_directory_path() / "farmare_cli_test" / name;
  fs::remove_all(d);
  fs::create_directories(d.parent_path());
  return d;
}

std::string last_line(const std::string& s) {
  auto t = s;
  while (!t.empty() && t.back() == '\n') t.pop_back();
  const auto pos = t.rfind('\n');
  return pos == std::string::npos ? t : t.substr(pos + 1);
}

const fs::path& small_corpus() {
  static const fs::path dir = [] {
    auto d = work("corpus");
    const auto r = run("gen-data --n 40 --seed 3 --feature-dim 16 --out " + d.string());
    EXPECT_EQ(r.code, 0) << r.out;
    return d;
  }();
  return dir;
}

const std::string kTinyModel =
    " --epochs 2 --decay-epoch 1 --batch-size 8 --joint-dim 8 --conv-channels 8 --afn-hidden1 8 --afn-hidden2 8";

}  // namespace

TEST(Cli, GenDataIsDeterministic) {
  const auto a = work("gen-a"), b = work("gen-b");
  ASSERT_EQ(run("gen-data --n 100 --seed 7 --feature-dim 32 --out " + a.string()).code, 0);
  ASSERT_EQ(run("gen-data --n 100 --seed 7 --feature-dim 32 --out " + b.string()).code, 0);
  for (const char* f : {"manifest.json", "features.bin", "tags.bin", "descriptions.txt"}) {
    const auto ba = farmare::io::read_file(a / f), bb = farmare::io::read_file(b / f);
    EXPECT_EQ(farmare::io::crc32(ba.data(), ba.size()), farmare::io::crc32(bb.data(), bb.size())) << f;
  }
  EXPECT_TRUE(fs::exists(a / "resolved_config.json"));
}

TEST(Cli, ExistingOutputNeedsForce) {
  const auto d = work("force");
  ASSERT_EQ(run("gen-data --n 5 --feature-dim 8 --out " + d.string()).code, 0);
  const auto r = run("gen-data --n 5 --feature-dim 8 --out " + d.string());
  EXPECT_NE(r.code, 0);
  const auto err = json::parse(last_line(r.out));
  EXPECT_EQ(err["status"], "error");
  EXPECT_EQ(err["kind"], "exists");
  EXPECT_EQ(run("gen-data --n 5 --feature-dim 8 --force --out " + d.string()).code, 0);
}

TEST(Cli, TrainRefusesNlb) {
  const auto r = run("train --model nlb --corpus " + small_corpus().string() + " --out " + work("nlb").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("non-learning baseline: use eval"), std::string::npos) << r.out;
}

TEST(Cli, UnknownFlagAndMissingFile) {
  auto r = run("stats --corpus " + small_corpus().string() + " --bogus 1");
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(json::parse(last_line(r.out))["kind"], "usage");
  r = run("stats --corpus /nonexistent/corpus");
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(json::parse(last_line(r.out))["kind"], "missing-file");
  r = run("frobnicate");
  EXPECT_NE(r.code, 0);
}

TEST(Cli, NlbWithSeparateBackboneIsRefused) {
  const auto r = run("eval --model nlb --adapter separate --corpus " + small_corpus().string());
  EXPECT_NE(r.code, 0);
  EXPECT_NO_THROW(json::parse(last_line(r.out)));
}

TEST(Cli, TrainEvalCompareAndPlot) {
  const auto out = work("train");
  auto r = run("train --quiet --model farmare --corpus " + small_corpus().string() + " --out " + out.string() + kTinyModel);
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* f : {"checkpoint.bin", "config.json", "report.json", "run.json", "steps.jsonl", "resolved_config.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto trained = json::parse(std::ifstream(out / "report.json"));

  const auto ev = work("eval");
  r = run("eval --ckpt " + (out / "checkpoint.bin").string() + " --corpus " + small_corpus().string() + " --out " +
          ev.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto evaluated = json::parse(std::ifstream(ev / "report.json"));
  EXPECT_EQ(evaluated["rsum"], trained["rsum"]);

  const auto nlb = work("eval-nlb");
  r = run("eval --model nlb --corpus " + small_corpus().string() + " --out " + nlb.string());
  ASSERT_EQ(r.code, 0) << r.out;

  r = run("compare --reports " + (out / "report.json").string() + " " + (nlb / "report.json").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("Text-to-Apartment"), std::string::npos);
  EXPECT_NE(r.out.find("nlb"), std::string::npos);
  EXPECT_NE(r.out.find("farmare"), std::string::npos);

  const auto png = work("plot").string() + ".png";
  r = run("plot --report " + (out / "report.json").string() + " --out " + png);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_GT(fs::file_size(png), 100u);
}

TEST(Cli, ConfigFileSitsBetweenDefaultsAndFlags) {
  const auto cfg = work("cfg").string() + ".ini";
  {
    std::ofstream f(cfg);
    f << "[train]\nepochs=3\nmargin=0.3\n";
  }
  const auto out = work("cfg-train");
  const auto r = run("--config " + cfg + " train --quiet --model cnv --margin 0.25 --corpus " +
                     small_corpus().string() + " --out " + out.string() +
                     " --decay-epoch 1 --batch-size 8 --joint-dim 8 --conv-channels 8");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto c = json::parse(std::ifstream(out / "config.json"));
  EXPECT_EQ(c["epochs"], 3);      // from the file
  EXPECT_EQ(c["margin"], 0.25);   // flag wins
  EXPECT_EQ(c["lr0"], 0.008);     // default
  const auto resolved = json::parse(std::ifstream(out / "resolved_config.json"));
  EXPECT_EQ(resolved["options"]["epochs"], "3");
}

TEST(Cli, StatsReportsCorpusShape) {
  const auto r = run("stats --corpus " + small_corpus().string() + " --top-k 5");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["num_apartments"], 40);
  EXPECT_EQ(j["top_tokens"].size(), 5u);
  EXPECT_GT(j["description_words"]["mean"].get<double>(), 0.0);
}

TEST(Cli, MultiRunAggregates) {
  const auto out = work("multi");
  const auto r = run("multi-run --runs 2 --model afn --corpus " + small_corpus().string() + " --out " + out.string() +
                     kTinyModel);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(out / "aggregated.json"));
  EXPECT_TRUE(fs::exists(out / "run-0" / "report.json"));
  EXPECT_TRUE(fs::exists(out / "run-1" / "report.json"));
  const auto a = json::parse(std::ifstream(out / "aggregated.json"));
  EXPECT_EQ(a["runs"], 2);
}
