#include "farmare/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "farmare/container.hpp"
#include "json.hpp"

namespace farmare::trainer {

using nlohmann::json;

namespace {

constexpr std::size_t kEvalChunk = 128;

models::ConvHead conv_head_from_string(const std::string& s) {
  if (s == "pooled_fc") return models::ConvHead::pooled_fc;
  if (s == "per_viewpoint") return models::ConvHead::per_viewpoint;
  throw TrainError("unknown cnv head '" + s + "' (expected pooled_fc|per_viewpoint)");
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw TrainError("epochs must be positive");
  if (batch_size < 2) throw TrainError("batch_size must be at least 2");
  if (!(lr0 > 0.0)) throw TrainError("lr0 must be positive");
  if (!(decay_factor > 0.0)) throw TrainError("decay_factor must be positive");
  if (decay_epoch >= epochs) throw TrainError("decay_epoch must be smaller than epochs");
  if (!(margin >= 0.0)) throw TrainError("margin must be non-negative");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw TrainError("Adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) throw TrainError("adam_eps must be positive");
  if (joint_dim == 0 || conv_channels == 0 || conv_kernel == 0 || afn_hidden1 == 0 || afn_hidden2 == 0) {
    throw TrainError("layer widths must be positive");
  }
  if (conv_kernel % 2 == 0) throw TrainError("conv_kernel must be odd");
  if (!(text_alignment >= 0.0 && text_alignment <= 1.0)) throw TrainError("text_alignment must lie in [0, 1]");
  try {
    models::model_kind_from_string(model);
  } catch (const std::invalid_argument& e) {
    throw TrainError(e.what());
  }
  conv_head_from_string(cnv_head);
}

models::ModelConfig TrainConfig::model_config(std::size_t feature_dim, std::size_t text_dim) const {
  models::ModelConfig m;
  m.kind = models::model_kind_from_string(model);
  m.feature_dim = feature_dim;
  m.text_dim = text_dim;
  m.joint_dim = joint_dim;
  m.conv_channels = conv_channels;
  m.conv_kernel = conv_kernel;
  m.afn_hidden1 = afn_hidden1;
  m.afn_hidden2 = afn_hidden2;
  m.cnv_head = conv_head_from_string(cnv_head);
  m.use_classifier = use_classifier;
  m.init_seed = derive_seed(seed, "model-init");
  return m;
}

double TrainConfig::lr_at(std::size_t epoch) const { return epoch >= decay_epoch ? lr0 * decay_factor : lr0; }

std::string to_json(const TrainConfig& c) {
  json j = {
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr0", c.lr0},
      {"decay_epoch", c.decay_epoch},
      {"decay_factor", c.decay_factor},
      {"margin", c.margin},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_eps", c.adam_eps},
      {"seed", c.seed},
      {"model", c.model},
      {"adapter", c.adapter},
      {"granularity", std::string(encoders::to_string(c.granularity))},
      {"joint_dim", c.joint_dim},
      {"conv_channels", c.conv_channels},
      {"conv_kernel", c.conv_kernel},
      {"afn_hidden1", c.afn_hidden1},
      {"afn_hidden2", c.afn_hidden2},
      {"cnv_head", c.cnv_head},
      {"use_classifier", c.use_classifier},
      {"text_alignment", c.text_alignment},
      {"select_best", c.select_best},
  };
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw TrainError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw TrainError("config must be a JSON object");
  TrainConfig c;
  const std::set<std::string> known = {"epochs",      "batch_size",    "lr0",          "decay_epoch",   "decay_factor",
                                       "margin",      "adam_beta1",    "adam_beta2",   "adam_eps",      "seed",
                                       "model",       "adapter",       "granularity",  "joint_dim",     "conv_channels",
                                       "conv_kernel", "afn_hidden1",   "afn_hidden2",  "cnv_head",      "use_classifier",
                                       "text_alignment", "select_best"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw TrainError("unknown config key '" + k + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("lr0", c.lr0);
    get("decay_epoch", c.decay_epoch);
    get("decay_factor", c.decay_factor);
    get("margin", c.margin);
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("adam_eps", c.adam_eps);
    get("seed", c.seed);
    get("model", c.model);
    get("adapter", c.adapter);
    if (j.contains("granularity")) c.granularity = encoders::granularity_from_string(j.at("granularity").get<std::string>());
    get("joint_dim", c.joint_dim);
    get("conv_channels", c.conv_channels);
    get("conv_kernel", c.conv_kernel);
    get("afn_hidden1", c.afn_hidden1);
    get("afn_hidden2", c.afn_hidden2);
    get("cnv_head", c.cnv_head);
    get("use_classifier", c.use_classifier);
    get("text_alignment", c.text_alignment);
    get("select_best", c.select_best);
  } catch (const json::exception& e) {
    throw TrainError(std::string("config field has the wrong type: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------

EncodedSplit encode_split(const std::vector<const dataset::ApartmentRecord*>& records,
                          const encoders::AdapterPair& adapters, encoders::Granularity granularity) {
  EncodedSplit out;
  out.provenance = adapters.vision->provenance();
  out.ids.reserve(records.size());
  for (const auto* r : records) {
    auto visual = adapters.vision->encode_images(*r);
    auto text = encoders::encode_description(*adapters.text, r->description, granularity);
    if (text.features.rows() == 0) throw encoders::AdapterError("record " + r->id + ": description encodes to nothing");
    out.ids.push_back(r->id);
    out.scenes.push_back(std::move(visual.features));
    out.queries.push_back(std::move(text.features));
    std::vector<std::uint8_t> tags;
    tags.reserve(r->viewpoint_tags.size());
    for (const auto& t : r->viewpoint_tags) tags.push_back(t.index());
    out.tags.push_back(std::move(tags));
  }
  return out;
}

EncodedSplit encode_split(const dataset::Corpus& corpus, dataset::Split split, const encoders::AdapterPair& adapters,
                          encoders::Granularity granularity) {
  return encode_split(corpus.split(split), adapters, granularity);
}

eval::RetrievalReport evaluate_model(const models::RetrievalModel& model, const EncodedSplit& data,
                                     const std::string& method) {
  const std::size_t n = data.size();
  if (n == 0) throw std::invalid_argument("evaluate: empty split");
  if (data.feature_dim() != model.config().feature_dim) {
    throw std::invalid_argument("evaluate: corpus F_V=" + std::to_string(data.feature_dim()) +
                                " but the model expects " + std::to_string(model.config().feature_dim));
  }
  if (data.text_dim() != model.config().text_dim) {
    throw std::invalid_argument("evaluate: text feature width " + std::to_string(data.text_dim()) +
                                " but the model expects " + std::to_string(model.config().text_dim));
  }
  const std::size_t d = model.joint_dim();
  Matrix scenes(n, d), queries(n, d);
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t end = std::min(n, start + kEvalChunk);
    models::SceneBatch sb;
    models::QueryBatch qb;
    for (std::size_t i = start; i < end; ++i) {
      sb.viewpoints.push_back(&data.scenes[i]);
      qb.sequences.push_back(&data.queries[i]);
    }
    const Matrix s = model.encode_scenes(sb, data.provenance);
    const Matrix q = model.encode_queries(qb);
    std::copy(s.data(), s.data() + s.size(), scenes.data() + start * d);
    std::copy(q.data(), q.data() + q.size(), queries.data() + start * d);
  }
  const auto sim = eval::similarity_matrix(queries, scenes, data.ids);
  return eval::evaluate_similarity(sim.scores, method.empty() ? std::string(models::to_string(model.config().kind))
                                                              : method);
}

// ---------------------------------------------------------------------------

namespace {

class Adam {
 public:
  Adam(std::vector<nn::Parameter*> params, const TrainConfig& c)
      : params_(std::move(params)), b1_(c.adam_beta1), b2_(c.adam_beta2), eps_(c.adam_eps) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      if (!p->trainable) continue;
      double* w = p->value.data();
      const double* g = p->grad.data();
      double* m = m_[i].data();
      double* v = v_[i].data();
      for (std::size_t k = 0; k < p->value.size(); ++k) {
        m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
        v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
        w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      }
    }
  }

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<Matrix> m_, v_;
  double b1_, b2_, eps_;
  std::uint64_t t_ = 0;
};

std::vector<Matrix> snapshot(models::RetrievalModel& model) {
  std::vector<Matrix> s;
  for (auto* p : model.parameters()) s.push_back(p->value);
  return s;
}

void restore(models::RetrievalModel& model, const std::vector<Matrix>& s) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s[i];
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

TrainOutcome train_encoded(const TrainConfig& config, const EncodedSplit& train_data, const EncodedSplit* val,
                           std::ostream* log) {
  config.validate();
  const auto mc = config.model_config(train_data.feature_dim(), train_data.text_dim());
  if (mc.kind == models::ModelKind::nlb) throw TrainError("non-learning baseline has no parameters");
  if (train_data.size() < 2) throw TrainError("training split needs at least 2 apartments");

  TrainOutcome out{models::RetrievalModel(mc), {}, 0};
  auto& model = out.model;
  Adam adam(model.parameters(), config);
  Rng dropout_rng(derive_seed(config.seed, "dropout"));

  std::vector<std::size_t> order(train_data.size());
  std::optional<double> best_rsum;
  std::vector<Matrix> best;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr_at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(config.seed, "shuffle", epoch));
    shuffle(order, shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      if (end - start < 2) continue;
      models::TrainBatch batch;
      batch.provenance = train_data.provenance;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        batch.scenes.viewpoints.push_back(&train_data.scenes[i]);
        batch.queries.sequences.push_back(&train_data.queries[i]);
        batch.tags.push_back(&train_data.tags[i]);
      }
      model.zero_grad();
      const auto r = model.train_step(batch, config.margin, &dropout_rng, true);
      adam.step(lr);
      rec.ranking += r.loss.ranking;
      rec.classification += r.loss.classification;
      rec.total += r.loss.total;
      if (log) {
        *log << json{{"epoch", epoch},
                     {"step", steps},
                     {"lr", lr},
                     {"ranking", r.loss.ranking},
                     {"classification", r.loss.classification},
                     {"total", r.loss.total}}
                    .dump()
             << '\n';
      }
      ++steps;
    }
    if (steps > 0) {
      rec.ranking /= static_cast<double>(steps);
      rec.classification /= static_cast<double>(steps);
      rec.total /= static_cast<double>(steps);
    }
    if (val && val->size() >= 1 && config.select_best) {
      const double v = evaluate_model(model, *val).rsum_value;
      rec.val_rsum = v;
      if (!best_rsum || v > *best_rsum) {
        best_rsum = v;
        best = snapshot(model);
        out.best_epoch = epoch;
      }
    } else {
      out.best_epoch = epoch;
    }
    out.curve.push_back(rec);
  }
  if (!best.empty()) restore(model, best);
  return out;
}

// ---------------------------------------------------------------------------

std::string to_json(const RunArtifact& a) {
  json curve = json::array();
  for (const auto& e : a.curve) {
    json r = {{"epoch", e.epoch},
              {"lr", e.lr},
              {"ranking", e.ranking},
              {"classification", e.classification},
              {"total", e.total}};
    r["val_rsum"] = e.val_rsum ? json(*e.val_rsum) : json(nullptr);
    curve.push_back(r);
  }
  json j = {{"checkpoint", a.checkpoint ? json(a.checkpoint->string()) : json(nullptr)},
            {"best_epoch", a.best_epoch},
            {"wall_clock_seconds", a.wall_clock_seconds},
            {"config", json::parse(a.config_snapshot)},
            {"report", json::parse(eval::to_json(a.report))},
            {"curve", curve}};
  return j.dump(2);
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text << '\n';
}

encoders::AdapterPair adapters_for(const TrainConfig& config, const dataset::Corpus& corpus,
                                   encoders::AdapterOptions opts) {
  opts.text_alignment = config.text_alignment;
  return encoders::make_adapter_pair(config.adapter, corpus.manifest, opts);
}

RunArtifact train_on(const TrainConfig& config, const EncodedSplit& train_data, const EncodedSplit& val,
                     const EncodedSplit& test, const TrainOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  auto outcome = train_encoded(config, train_data, val.size() > 0 ? &val : nullptr, options.log);
  RunArtifact a;
  a.curve = outcome.curve;
  a.best_epoch = outcome.best_epoch;
  a.config_snapshot = to_json(config);
  a.report = evaluate_model(outcome.model, test);
  a.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    a.checkpoint = *options.out_dir / "checkpoint.bin";
    save_checkpoint(*a.checkpoint, outcome.model, config);
    write_text(*options.out_dir / "config.json", a.config_snapshot);
    eval::save_report(a.report, *options.out_dir / "report.json");
    write_text(*options.out_dir / "run.json", to_json(a));
  }
  return a;
}

}  // namespace

RunArtifact train(const TrainConfig& config, const dataset::Corpus& corpus, const TrainOptions& options) {
  config.validate();
  if (models::model_kind_from_string(config.model) == models::ModelKind::nlb) {
    throw TrainError("non-learning baseline has no parameters");
  }
  const auto adapters = adapters_for(config, corpus, options.adapter_options);
  const auto tr = encode_split(corpus, dataset::Split::train, adapters, config.granularity);
  const auto va = encode_split(corpus, dataset::Split::val, adapters, config.granularity);
  const auto te = encode_split(corpus, dataset::Split::test, adapters, config.granularity);
  return train_on(config, tr, va, te, options);
}

MultiRunResult multi_run(const TrainConfig& config, const dataset::Corpus& corpus, std::size_t n_runs,
                         const TrainOptions& options) {
  if (n_runs == 0) throw TrainError("multi-run needs at least one run");
  config.validate();
  if (models::model_kind_from_string(config.model) == models::ModelKind::nlb) {
    throw TrainError("non-learning baseline has no parameters");
  }
  const auto adapters = adapters_for(config, corpus, options.adapter_options);
  const auto tr = encode_split(corpus, dataset::Split::train, adapters, config.granularity);
  const auto va = encode_split(corpus, dataset::Split::val, adapters, config.granularity);
  const auto te = encode_split(corpus, dataset::Split::test, adapters, config.granularity);
  MultiRunResult out;
  std::vector<eval::RetrievalReport> reports;
  for (std::size_t i = 0; i < n_runs; ++i) {
    TrainConfig c = config;
    c.seed = config.seed + i;
    TrainOptions o = options;
    if (options.out_dir) o.out_dir = *options.out_dir / ("run-" + std::to_string(i));
    out.runs.push_back(train_on(c, tr, va, te, o));
    reports.push_back(out.runs.back().report);
  }
  out.aggregated = eval::aggregate(reports);
  return out;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, models::RetrievalModel& model, const TrainConfig& config) {
  io::ByteWriter w;
  w.raw("FCK1", 4);
  w.u32(kCheckpointVersion);
  w.str(to_json(config));
  const auto& mc = model.config();
  w.u32(static_cast<std::uint32_t>(mc.feature_dim));
  w.u32(static_cast<std::uint32_t>(mc.text_dim));
  std::vector<io::Entry> entries;
  for (auto* p : model.parameters()) {
    io::Entry e;
    e.name = p->group + "/" + p->name;
    e.dtype = io::DType::f64;
    e.rows = static_cast<std::uint32_t>(p->value.rows());
    e.cols = static_cast<std::uint32_t>(p->value.cols());
    e.values = p->value.values();
    entries.push_back(std::move(e));
  }
  io::encode_entries(w, entries);
  io::write_with_crc(path, w);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  const std::size_t payload = io::read_with_crc(path, bytes);
  io::ByteReader r(bytes, payload);
  r.expect_magic("FCK1");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw io::FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  TrainConfig config;
  try {
    config = train_config_from_json(r.str());
    config.validate();
  } catch (const TrainError& e) {
    throw io::FormatError(path.string() + ": bad config snapshot: " + e.what());
  }
  const std::size_t fv = r.u32();
  const std::size_t ft = r.u32();
  auto entries = io::decode_entries(r);
  if (!r.at_end()) throw io::FormatError(path.string() + ": trailing bytes after parameters");

  models::RetrievalModel model(config.model_config(fv, ft));
  std::map<std::string, io::Entry*> by_name;
  for (auto& e : entries) by_name[e.name] = &e;
  auto params = model.parameters();
  if (params.size() != entries.size()) {
    throw io::FormatError(path.string() + ": expected " + std::to_string(params.size()) + " parameters, found " +
                          std::to_string(entries.size()));
  }
  for (auto* p : params) {
    const std::string name = p->group + "/" + p->name;
    auto it = by_name.find(name);
    if (it == by_name.end()) throw io::FormatError(path.string() + ": missing parameter " + name);
    const auto& e = *it->second;
    if (e.rows != p->value.rows() || e.cols != p->value.cols()) {
      throw io::FormatError(path.string() + ": parameter " + name + " has the wrong shape");
    }
  }
  for (auto* p : params) {
    const auto& e = *by_name.at(p->group + "/" + p->name);
    std::copy(e.values.begin(), e.values.end(), p->value.data());
  }
  return LoadedCheckpoint{config, std::move(model)};
}

eval::RetrievalReport evaluate(const std::filesystem::path& checkpoint, const dataset::Corpus& corpus,
                               dataset::Split split, encoders::AdapterOptions adapter_options) {
  auto ck = load_checkpoint(checkpoint);
  if (ck.model.config().feature_dim != corpus.manifest.feature_dim) {
    throw std::invalid_argument("checkpoint expects F_V=" + std::to_string(ck.model.config().feature_dim) +
                                " but the corpus has F_V=" + std::to_string(corpus.manifest.feature_dim));
  }
  const auto adapters = adapters_for(ck.config, corpus, adapter_options);
  const auto data = encode_split(corpus, split, adapters, ck.config.granularity);
  return evaluate_model(ck.model, data);
}

eval::RetrievalReport evaluate_nlb(const dataset::Corpus& corpus, dataset::Split split, const std::string& adapter,
                                   encoders::Granularity granularity, encoders::AdapterOptions adapter_options) {
  const auto adapters = encoders::make_adapter_pair(adapter, corpus.manifest, adapter_options);
  if (adapters.vision->provenance() == encoders::Provenance::separate) {
    throw std::invalid_argument(
        "non-learning baseline needs jointly trained features; separately trained backbones do not share an "
        "embedding space");
  }
  const auto data = encode_split(corpus, split, adapters, granularity);
  models::ModelConfig mc;
  mc.kind = models::ModelKind::nlb;
  mc.feature_dim = data.feature_dim();
  mc.text_dim = data.text_dim();
  const models::RetrievalModel model(mc);
  return evaluate_model(model, data, "nlb");
}

}  // namespace farmare::trainer
