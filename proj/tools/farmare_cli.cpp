// farmare: command-line front end.
//
//   farmare gen-data  --n 6081 --seed 0 --lambda 1.0 --out corpus/
//   farmare train     --model farmare --adapter synthetic --corpus corpus/ --out run/
//   farmare eval      --ckpt run/checkpoint.bin --corpus corpus/ --split test
//   farmare eval      --model nlb --corpus corpus/
//   farmare compare   --reports a.json b.json ...
//   farmare multi-run --runs 5 --model farmare --corpus corpus/ --out runs/
//   farmare stats     --corpus corpus/
//   farmare plot      --report report.json --out recalls.png
//
// Option values resolve as flags > --config file > defaults. The config file
// is INI/TOML with one section per subcommand, e.g. "[train]\nepochs=10".

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "farmare/container.hpp"
#include "farmare/dataset.hpp"
#include "farmare/encoders.hpp"
#include "farmare/eval.hpp"
#include "farmare/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace farmare;

namespace {

struct CliError : std::runtime_error {
  CliError(std::string kind_, const std::string& msg) : std::runtime_error(msg), kind(std::move(kind_)) {}
  std::string kind;
};

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"status", "error"}, {"kind", kind}, {"message", message}}.dump() << std::endl;
}

/// Every option of a subcommand with the value it resolved to.
json resolved_options(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
    std::string key = opt->get_single_name();
    if (opt->get_type_size() == 0) {
      j[key] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& res = opt->results();
      if (opt->get_items_expected_max() > 1) {
        j[key] = res;
      } else {
        j[key] = res.empty() ? std::string() : res.back();
      }
    } else {
      j[key] = opt->get_default_str();
    }
  }
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CliError("io", "cannot write " + path.string());
  f << text << '\n';
}

/// Refuses an existing output unless forced; a forced directory is cleared first.
void prepare_out_dir(const fs::path& out, bool force, const std::vector<fs::path>& protect = {}) {
  if (fs::exists(out)) {
    if (!force) throw CliError("exists", "output " + out.string() + " already exists (use --force to overwrite)");
    for (const auto& p : protect) {
      if (fs::exists(p) && fs::equivalent(out, p)) {
        throw CliError("usage", "--out must not point at an input " + p.string());
      }
    }
    fs::remove_all(out);
  }
  fs::create_directories(out);
}

dataset::Corpus load_corpus_or_throw(const fs::path& dir) {
  if (!fs::exists(dir)) throw CliError("missing-file", "corpus directory " + dir.string() + " does not exist");
  return dataset::load_corpus(dir);
}

struct TrainFlags {
  trainer::TrainConfig cfg;
  std::string granularity = "sentence";
  bool no_classifier = false;
  std::string corpus;
  std::string out;
  bool force = false;
  bool quiet = false;
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  auto& c = f.cfg;
  sub->add_option("--model", c.model, "nlb | afn | cnv | farmare")
      ->check(CLI::IsMember({"nlb", "afn", "cnv", "farmare"}));
  sub->add_option("--adapter", c.adapter, "synthetic | joint | separate")
      ->check(CLI::IsMember({"synthetic", "joint", "separate"}));
  sub->add_option("--granularity", f.granularity, "token | sentence")->check(CLI::IsMember({"token", "sentence"}));
  sub->add_option("--corpus", f.corpus, "corpus directory")->required();
  sub->add_option("--out", f.out, "output directory")->required();
  sub->add_flag("--force", f.force, "overwrite an existing output directory");
  sub->add_flag("--quiet", f.quiet, "do not print per-step log lines");
  sub->add_option("--epochs", c.epochs, "training epochs");
  sub->add_option("--batch-size", c.batch_size, "mini-batch size");
  sub->add_option("--lr", c.lr0, "initial Adam learning rate");
  sub->add_option("--decay-epoch", c.decay_epoch, "0-based epoch at whose start the LR is decayed");
  sub->add_option("--decay-factor", c.decay_factor, "LR multiplier applied at the decay epoch");
  sub->add_option("--margin", c.margin, "triplet margin");
  sub->add_option("--seed", c.seed, "run seed (init, shuffling, dropout)");
  sub->add_option("--joint-dim", c.joint_dim, "joint embedding width (GRU hidden width)");
  sub->add_option("--conv-channels", c.conv_channels, "conv trunk output channels");
  sub->add_option("--conv-kernel", c.conv_kernel, "conv kernel size");
  sub->add_option("--afn-hidden1", c.afn_hidden1, "AFN first hidden width");
  sub->add_option("--afn-hidden2", c.afn_hidden2, "AFN second hidden width");
  sub->add_option("--cnv-head", c.cnv_head, "CNV head: pooled_fc | per_viewpoint")
      ->check(CLI::IsMember({"pooled_fc", "per_viewpoint"}));
  sub->add_flag("--no-classifier", f.no_classifier, "FArMARe without the furniture classification task");
  sub->add_option("--text-alignment", c.text_alignment, "synthetic text adapter alignment in [0, 1]");
}

trainer::TrainConfig finish_train_config(const TrainFlags& f) {
  auto c = f.cfg;
  c.granularity = encoders::granularity_from_string(f.granularity);
  c.use_classifier = !f.no_classifier;
  if (c.model == "nlb") throw CliError("nlb-train", "non-learning baseline: use eval");
  c.validate();
  return c;
}

int cmd_gen_data(CLI::App& sub, std::size_t n, std::uint64_t seed, double lambda, double tag_noise, std::size_t dim,
                 const std::string& out, bool force) {
  dataset::GeneratorConfig g;
  g.separability = lambda;
  g.tag_noise = tag_noise;
  g.feature_dim = dim;
  g.validate();
  prepare_out_dir(out, force);
  const auto corpus = dataset::generate_corpus(n, seed, g);
  dataset::save_corpus(corpus, out);
  write_text(fs::path(out) / "resolved_config.json", json{{"command", "gen-data"}, {"options", resolved_options(sub)}}.dump(2));
  std::cout << json{{"status", "ok"}, {"out", out}, {"num_apartments", n}}.dump() << std::endl;
  return 0;
}

int cmd_train(CLI::App& sub, TrainFlags& f) {
  const auto cfg = finish_train_config(f);
  const auto corpus = load_corpus_or_throw(f.corpus);
  prepare_out_dir(f.out, f.force, {f.corpus});
  write_text(fs::path(f.out) / "resolved_config.json", json{{"command", "train"}, {"options", resolved_options(sub)}}.dump(2));
  std::ofstream steps(fs::path(f.out) / "steps.jsonl");
  trainer::TrainOptions opts;
  opts.out_dir = fs::path(f.out);
  opts.log = &steps;
  const auto art = trainer::train(cfg, corpus, opts);
  if (!f.quiet) {
    for (const auto& e : art.curve) {
      std::cout << json{{"epoch", e.epoch}, {"lr", e.lr}, {"total", e.total},
                        {"val_rsum", e.val_rsum ? json(*e.val_rsum) : json(nullptr)}}
                       .dump()
                << '\n';
    }
  }
  std::cout << eval::to_json(art.report) << std::endl;
  return 0;
}

int cmd_multi_run(CLI::App& sub, TrainFlags& f, std::size_t runs) {
  const auto cfg = finish_train_config(f);
  const auto corpus = load_corpus_or_throw(f.corpus);
  prepare_out_dir(f.out, f.force, {f.corpus});
  write_text(fs::path(f.out) / "resolved_config.json",
             json{{"command", "multi-run"}, {"options", resolved_options(sub)}}.dump(2));
  trainer::TrainOptions opts;
  opts.out_dir = fs::path(f.out);
  const auto res = trainer::multi_run(cfg, corpus, runs, opts);
  write_text(fs::path(f.out) / "aggregated.json", eval::to_json(res.aggregated));
  std::cout << eval::to_json(res.aggregated) << std::endl;
  return 0;
}

int cmd_eval(CLI::App& sub, const std::string& ckpt, const std::string& model, const std::string& adapter,
             const std::string& granularity, const std::string& corpus_dir, const std::string& split,
             const std::string& out, bool force) {
  const auto corpus = load_corpus_or_throw(corpus_dir);
  const auto sp = dataset::split_from_string(split);
  eval::RetrievalReport report;
  if (!ckpt.empty()) {
    if (!fs::exists(ckpt)) throw CliError("missing-file", "checkpoint " + ckpt + " does not exist");
    report = trainer::evaluate(ckpt, corpus, sp);
  } else if (model == "nlb") {
    report = trainer::evaluate_nlb(corpus, sp, adapter, encoders::granularity_from_string(granularity));
  } else {
    throw CliError("usage", "eval needs --ckpt, or --model nlb for the non-learning baseline");
  }
  if (!out.empty()) {
    prepare_out_dir(out, force, {corpus_dir});
    eval::save_report(report, fs::path(out) / "report.json");
    write_text(fs::path(out) / "resolved_config.json", json{{"command", "eval"}, {"options", resolved_options(sub)}}.dump(2));
  }
  std::cout << eval::to_json(report) << std::endl;
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& out) {
  std::vector<eval::RetrievalReport> reports;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw CliError("missing-file", "report " + p + " does not exist");
    reports.push_back(eval::load_report(p));
  }
  const auto grid = eval::comparison_grid(reports);
  if (!out.empty()) write_text(out, grid);
  std::cout << grid;
  return 0;
}

int cmd_stats(const std::string& corpus_dir, std::size_t top_k, const std::string& out) {
  const auto corpus = load_corpus_or_throw(corpus_dir);
  const auto s = dataset::corpus_statistics(corpus, top_k);
  json tokens = json::array();
  for (const auto& t : s.top_tokens) tokens.push_back({{"token", t.token}, {"count", t.count}, {"frequency", t.frequency}});
  json j = {{"num_apartments", s.num_apartments},
            {"num_sentences", s.num_sentences},
            {"description_words", {{"mean", s.description_words.mean}, {"min", s.description_words.min}, {"max", s.description_words.max}}},
            {"sentence_words", {{"mean", s.sentence_words.mean}, {"min", s.sentence_words.min}, {"max", s.sentence_words.max}}},
            {"mean_viewpoints", s.mean_viewpoints},
            {"top_tokens", tokens}};
  if (!out.empty()) write_text(out, j.dump(2));
  std::cout << j.dump(2) << std::endl;
  return 0;
}

int cmd_plot(const std::string& report, const std::string& out) {
  if (!fs::exists(report)) throw CliError("missing-file", "report " + report + " does not exist");
  eval::plot_recalls(eval::load_report(report), out);
  std::cout << json{{"status", "ok"}, {"out", out}}.dump() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-to-apartment cross-modal retrieval"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file with one section per subcommand");
  app.option_defaults()->always_capture_default();

  // gen-data
  std::size_t g_n = 6081, g_dim = 512;
  std::uint64_t g_seed = 0;
  double g_lambda = 1.0, g_noise = 0.0;
  std::string g_out;
  bool g_force = false;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--n", g_n, "number of apartments");
  gen->add_option("--seed", g_seed, "generator seed");
  gen->add_option("--lambda", g_lambda, "separability in [0, 1]");
  gen->add_option("--tag-noise", g_noise, "probability of a substituted viewpoint tag");
  gen->add_option("--feature-dim", g_dim, "viewpoint feature width");
  gen->add_option("--out", g_out, "output directory")->required();
  gen->add_flag("--force", g_force, "overwrite an existing output directory");

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "train a retrieval model");
  add_train_flags(train, tf);

  TrainFlags mf;
  std::size_t m_runs = 5;
  auto* multi = app.add_subcommand("multi-run", "train several seeds and aggregate");
  add_train_flags(multi, mf);
  multi->add_option("--runs", m_runs, "number of seeded runs")->check(CLI::PositiveNumber);

  std::string e_ckpt, e_model, e_adapter = "synthetic", e_gran = "sentence", e_corpus, e_split = "test", e_out;
  bool e_force = false;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint or the non-learning baseline");
  ev->add_option("--ckpt", e_ckpt, "checkpoint file");
  ev->add_option("--model", e_model, "nlb (only the non-learning baseline runs without a checkpoint)")
      ->check(CLI::IsMember({"nlb"}));
  ev->add_option("--adapter", e_adapter, "adapter for the non-learning baseline")
      ->check(CLI::IsMember({"synthetic", "joint", "separate"}));
  ev->add_option("--granularity", e_gran, "token | sentence")->check(CLI::IsMember({"token", "sentence"}));
  ev->add_option("--corpus", e_corpus, "corpus directory")->required();
  ev->add_option("--split", e_split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--out", e_out, "output directory for report.json");
  ev->add_flag("--force", e_force, "overwrite an existing output directory");

  std::vector<std::string> c_reports;
  std::string c_out;
  auto* cmp = app.add_subcommand("compare", "tabulate reports");
  cmp->add_option("--reports", c_reports, "report files")->required();
  cmp->add_option("--out", c_out, "write the grid to this file");

  std::string s_corpus, s_out;
  std::size_t s_top = 30;
  auto* st = app.add_subcommand("stats", "corpus statistics");
  st->add_option("--corpus", s_corpus, "corpus directory")->required();
  st->add_option("--top-k", s_top, "most frequent non-stop tokens to list");
  st->add_option("--out", s_out, "write the statistics to this file");

  std::string p_report, p_out;
  auto* pl = app.add_subcommand("plot", "recall bar chart");
  pl->add_option("--report", p_report, "report file")->required();
  pl->add_option("--out", p_out, "PNG output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(*gen, g_n, g_seed, g_lambda, g_noise, g_dim, g_out, g_force);
    if (train->parsed()) return cmd_train(*train, tf);
    if (multi->parsed()) return cmd_multi_run(*multi, mf, m_runs);
    if (ev->parsed()) return cmd_eval(*ev, e_ckpt, e_model, e_adapter, e_gran, e_corpus, e_split, e_out, e_force);
    if (cmp->parsed()) return cmd_compare(c_reports, c_out);
    if (st->parsed()) return cmd_stats(s_corpus, s_top, s_out);
    if (pl->parsed()) return cmd_plot(p_report, p_out);
  } catch (const CliError& e) {
    print_error(e.kind, e.what());
    return 1;
  } catch (const dataset::LoadError& e) {
    print_error("load", e.what());
    return 1;
  } catch (const io::FormatError& e) {
    print_error("format", e.what());
    return 1;
  } catch (const encoders::AdapterError& e) {
    print_error("adapter", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    print_error("invalid", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return 1;
  }
  return 1;
}
