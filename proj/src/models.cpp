#include "farmare/models.hpp"

#include <algorithm>
#include <stdexcept>

namespace farmare::models {

using encoders::Provenance;
using kernels::Trans;
using nn::Mode;

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::nlb: return "nlb";
    case ModelKind::afn: return "afn";
    case ModelKind::cnv: return "cnv";
    case ModelKind::farmare: return "farmare";
  }
  return "farmare";
}

ModelKind model_kind_from_string(std::string_view s) {
  if (s == "nlb") return ModelKind::nlb;
  if (s == "afn") return ModelKind::afn;
  if (s == "cnv") return ModelKind::cnv;
  if (s == "farmare") return ModelKind::farmare;
  throw std::invalid_argument("unknown model '" + std::string(s) + "' (expected nlb|afn|cnv|farmare)");
}

std::vector<std::size_t> ModelConfig::classifier_widths() const {
  std::vector<std::size_t> w;
  std::size_t c = conv_channels;
  for (int i = 0; i < 3; ++i) {
    c = std::max<std::size_t>(1, c / 2);
    w.push_back(c);
  }
  w.push_back(c);
  return w;
}

NlbEmbedding nlb_encode(const encoders::VisualFeatureSet& visual, const encoders::TextFeatureSequence& text) {
  if (visual.provenance == Provenance::separate) {
    throw std::invalid_argument(
        "non-learning baseline needs jointly trained features; separately trained backbones do not share an "
        "embedding space");
  }
  if (visual.features.cols() != text.features.cols()) {
    throw std::invalid_argument("non-learning baseline: visual and text features differ in width");
  }
  if (visual.features.rows() == 0 || text.features.rows() == 0) {
    throw std::invalid_argument("non-learning baseline: empty input");
  }
  NlbEmbedding e;
  nn::Segments one{0, visual.features.rows()};
  e.scene = nn::segment_mean(visual.features, one).values();
  one = {0, text.features.rows()};
  e.query = nn::segment_mean(text.features, one).values();
  return e;
}

// ---------------------------------------------------------------------------

FurnitureClassifier::FurnitureClassifier(std::size_t in, const std::vector<std::size_t>& widths, double dropout)
    : dropout_(dropout) {
  std::size_t prev = in;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    layers_.emplace_back("classifier", "fc" + std::to_string(i + 1), prev, widths[i]);
    prev = widths[i];
  }
  layers_.emplace_back("classifier", "fc" + std::to_string(widths.size() + 1), prev, dataset::kNumClasses);
}

void FurnitureClassifier::init(std::uint64_t model_seed) {
  Rng rng(nn::init_seed(model_seed, "classifier"));
  for (auto& l : layers_) l.init(rng);
}

Matrix FurnitureClassifier::logits(const Matrix& shared, Mode mode, Rng* rng, Cache& cache) const {
  cache.activations.clear();
  Matrix h = shared;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cache.activations.push_back(h);
    h = layers_[i].forward(cache.activations.back());
    if (i + 1 == layers_.size()) break;
    nn::relu_inplace(h);
    if (i == 1) nn::dropout_forward(h, dropout_, mode, rng, cache.mask);
  }
  return h;
}

Matrix FurnitureClassifier::forward(const Matrix& shared, Mode mode, Rng* rng, Cache& cache) const {
  return nn::softmax_rows(logits(shared, mode, rng, cache));
}

void FurnitureClassifier::backward(const Cache& cache, const Matrix& d_logits, Matrix& d_shared) {
  Matrix d = d_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    Matrix dx;
    layers_[i].backward(cache.activations[i], d, &dx);
    if (i == 0) {
      d_shared = std::move(dx);
      break;
    }
    // activations[i] is the post-ReLU (and post-dropout) output of layer i-1.
    if (i - 1 == 1) nn::dropout_backward(cache.mask, dx);
    nn::relu_backward_inplace(cache.activations[i], dx);
    d = std::move(dx);
  }
}

std::vector<nn::Parameter*> FurnitureClassifier::parameters() {
  std::vector<nn::Parameter*> p;
  for (auto& l : layers_)
    for (auto* q : l.parameters()) p.push_back(q);
  return p;
}

// ---------------------------------------------------------------------------

namespace {

struct AfnNet {
  nn::Linear l1, l2, l3;
  nn::BatchNorm1d bn1, bn2;
  double p1, p2;

  AfnNet(const ModelConfig& c)
      : l1("afn", "fc1", c.feature_dim, c.afn_hidden1),
        l2("afn", "fc2", c.afn_hidden1, c.afn_hidden2),
        l3("afn", "fc3", c.afn_hidden2, c.joint_dim),
        bn1("afn", "bn1", c.afn_hidden1),
        bn2("afn", "bn2", c.afn_hidden2),
        p1(c.afn_dropout1),
        p2(c.afn_dropout2) {}

  void init(std::uint64_t seed) {
    Rng rng(nn::init_seed(seed, "afn"));
    l1.init(rng);
    l2.init(rng);
    l3.init(rng);
  }

  struct Cache {
    nn::Segments seg;
    Matrix r1, a1, a2, r2, r3;
    nn::DropoutMask m1, m2;
    nn::BatchNorm1d::Cache c1, c2;
  };

  // r1 = mean_v x; r2 = BN(drop(ReLU(r1 W1 + b1))); r3 = BN(drop(ReLU(r2 W2 + b2))); a = r3 W3 + b3
  Matrix forward(const SceneBatch& b, Mode mode, Rng* rng, Cache& c) {
    Matrix x = nn::stack_rows(b.viewpoints, c.seg);
    c.r1 = nn::segment_mean(x, c.seg);
    c.a1 = l1.forward(c.r1);
    nn::relu_inplace(c.a1);
    nn::dropout_forward(c.a1, p1, mode, rng, c.m1);
    c.r2 = bn1.forward(c.a1, mode, c.c1);
    c.a2 = l2.forward(c.r2);
    nn::relu_inplace(c.a2);
    nn::dropout_forward(c.a2, p2, mode, rng, c.m2);
    c.r3 = bn2.forward(c.a2, mode, c.c2);
    return l3.forward(c.r3);
  }

  void backward(const Cache& c, const Matrix& d_out) {
    Matrix d_r3, d_a2, d_r2, d_a1;
    l3.backward(c.r3, d_out, &d_r3);
    bn2.backward(c.c2, d_r3, d_a2);
    nn::dropout_backward(c.m2, d_a2);
    nn::relu_backward_inplace(c.a2, d_a2);
    l2.backward(c.r2, d_a2, &d_r2);
    bn1.backward(c.c1, d_r2, d_a1);
    nn::dropout_backward(c.m1, d_a1);
    nn::relu_backward_inplace(c.a1, d_a1);
    l1.backward(c.r1, d_a1, nullptr);
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> p;
    for (auto* q : l1.parameters()) p.push_back(q);
    for (auto* q : bn1.parameters()) p.push_back(q);
    for (auto* q : l2.parameters()) p.push_back(q);
    for (auto* q : bn2.parameters()) p.push_back(q);
    for (auto* q : l3.parameters()) p.push_back(q);
    return p;
  }
};

struct ConvNet {
  ConvHead head;
  nn::Conv1dSame conv;
  std::optional<nn::Linear> fc;    // pooled_fc head
  std::optional<nn::Linear> rank;  // per_viewpoint head
  std::optional<FurnitureClassifier> classifier;

  ConvNet(const ModelConfig& c, ConvHead h, bool with_classifier)
      : head(h), conv("conv_trunk", c.feature_dim, c.conv_channels, c.conv_kernel) {
    if (head == ConvHead::pooled_fc) {
      fc.emplace("cnv_head", "fc", c.conv_channels, c.joint_dim);
    } else {
      rank.emplace("ranking_head", "fc", c.conv_channels, c.joint_dim);
    }
    if (with_classifier) classifier.emplace(c.conv_channels, c.classifier_widths(), c.classifier_dropout);
  }

  void init(std::uint64_t seed) {
    {
      Rng rng(nn::init_seed(seed, "conv_trunk"));
      conv.init(rng);
    }
    if (fc) {
      Rng rng(nn::init_seed(seed, "cnv_head"));
      fc->init(rng);
    }
    if (rank) {
      Rng rng(nn::init_seed(seed, "ranking_head"));
      rank->init(rng);
    }
    if (classifier) classifier->init(seed);
  }

  struct Cache {
    nn::Segments seg;
    nn::Conv1dSame::Cache conv;
    Matrix shared;  // x_hat
    Matrix act;     // pooled_fc: ReLU(x_hat); per_viewpoint: ReLU(x_hat W + b)
    Matrix pooled;  // pooled_fc only
    FurnitureClassifier::Cache cls;
    Matrix probs;
  };

  Matrix trunk(const Matrix& x, const nn::Segments& seg, nn::Conv1dSame::Cache& cc) const {
    return conv.forward(x, seg, cc);
  }

  Matrix scene(Cache& c) const {
    if (head == ConvHead::pooled_fc) {
      c.act = c.shared;
      nn::relu_inplace(c.act);
      c.pooled = nn::segment_mean(c.act, c.seg);
      return fc->forward(c.pooled);
    }
    c.act = rank->forward(c.shared);
    nn::relu_inplace(c.act);
    return nn::segment_mean(c.act, c.seg);
  }

  void backward(Cache& c, const Matrix& d_scene, const Matrix* d_logits) {
    Matrix d_shared(c.shared.rows(), c.shared.cols());
    if (head == ConvHead::pooled_fc) {
      Matrix d_pooled;
      fc->backward(c.pooled, d_scene, &d_pooled);
      Matrix d_act(c.act.rows(), c.act.cols());
      nn::segment_mean_backward(d_pooled, c.seg, d_act);
      nn::relu_backward_inplace(c.act, d_act);
      d_shared = std::move(d_act);
    } else {
      Matrix d_act(c.act.rows(), c.act.cols());
      nn::segment_mean_backward(d_scene, c.seg, d_act);
      nn::relu_backward_inplace(c.act, d_act);
      rank->backward(c.shared, d_act, &d_shared);
    }
    if (d_logits && classifier) {
      Matrix d_from_cls;
      classifier->backward(c.cls, *d_logits, d_from_cls);
      kernels::axpy(1.0, d_from_cls.data(), d_shared.data(), d_shared.size());
    }
    conv.backward(c.conv, c.seg, d_shared, nullptr);
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> p = conv.parameters();
    if (fc)
      for (auto* q : fc->parameters()) p.push_back(q);
    if (rank)
      for (auto* q : rank->parameters()) p.push_back(q);
    if (classifier)
      for (auto* q : classifier->parameters()) p.push_back(q);
    return p;
  }
};

}  // namespace

struct RetrievalModel::Impl {
  std::optional<text_branch::TextBranch> text;
  std::optional<AfnNet> afn;
  std::optional<ConvNet> conv;
};

RetrievalModel::RetrievalModel(ModelConfig cfg) : cfg_(cfg), impl_(std::make_unique<Impl>()) {
  switch (cfg_.kind) {
    case ModelKind::nlb:
      if (cfg_.feature_dim != cfg_.text_dim) {
        throw std::invalid_argument("non-learning baseline needs equal visual and text feature widths");
      }
      return;
    case ModelKind::afn:
      impl_->afn.emplace(cfg_);
      impl_->afn->init(cfg_.init_seed);
      break;
    case ModelKind::cnv:
      impl_->conv.emplace(cfg_, cfg_.cnv_head, false);
      impl_->conv->init(cfg_.init_seed);
      break;
    case ModelKind::farmare:
      impl_->conv.emplace(cfg_, ConvHead::per_viewpoint, cfg_.use_classifier);
      impl_->conv->init(cfg_.init_seed);
      break;
  }
  impl_->text.emplace(text_branch::TextBranchConfig{cfg_.text_dim, cfg_.joint_dim});
  impl_->text->init(cfg_.init_seed);
  if (impl_->text->output_dim() != cfg_.joint_dim) {
    throw std::logic_error("text branch width differs from the joint space");
  }
}

RetrievalModel::~RetrievalModel() = default;
RetrievalModel::RetrievalModel(RetrievalModel&&) noexcept = default;
RetrievalModel& RetrievalModel::operator=(RetrievalModel&&) noexcept = default;

std::size_t RetrievalModel::joint_dim() const {
  return cfg_.kind == ModelKind::nlb ? cfg_.feature_dim : cfg_.joint_dim;
}

Matrix RetrievalModel::encode_scenes(const SceneBatch& batch, Provenance provenance) const {
  if (cfg_.kind == ModelKind::nlb) {
    if (provenance == Provenance::separate) {
      throw std::invalid_argument(
          "non-learning baseline needs jointly trained features; separately trained backbones do not share an "
          "embedding space");
    }
    nn::Segments seg;
    return nn::segment_mean(nn::stack_rows(batch.viewpoints, seg), seg);
  }
  if (impl_->afn) {
    AfnNet::Cache c;
    return const_cast<AfnNet&>(*impl_->afn).forward(batch, Mode::eval, nullptr, c);
  }
  ConvNet::Cache c;
  const Matrix x = nn::stack_rows(batch.viewpoints, c.seg);
  c.shared = impl_->conv->trunk(x, c.seg, c.conv);
  return impl_->conv->scene(c);
}

Matrix RetrievalModel::encode_queries(const QueryBatch& batch) const {
  if (cfg_.kind == ModelKind::nlb) {
    nn::Segments seg;
    return nn::segment_mean(nn::stack_rows(batch.sequences, seg), seg);
  }
  return impl_->text->encode(batch.sequences);
}

Matrix RetrievalModel::shared_representation(const Matrix& viewpoints) const {
  if (!impl_->conv) throw std::invalid_argument("model has no convolutional trunk");
  ConvNet::Cache c;
  c.seg = {0, viewpoints.rows()};
  return impl_->conv->trunk(viewpoints, c.seg, c.conv);
}

Matrix RetrievalModel::classify(const Matrix& viewpoints) const {
  if (!impl_->conv || !impl_->conv->classifier) throw std::invalid_argument("model has no furniture classifier");
  FurnitureClassifier::Cache cc;
  return impl_->conv->classifier->forward(shared_representation(viewpoints), Mode::eval, nullptr, cc);
}

StepResult RetrievalModel::train_step(const TrainBatch& batch, double margin, Rng* rng, bool accumulate_grads) {
  if (!trainable()) throw std::logic_error("non-learning baseline has no parameters");
  const std::size_t n = batch.scenes.viewpoints.size();
  if (batch.queries.sequences.size() != n) throw std::invalid_argument("train step: scene/query count mismatch");

  text_branch::TextBranch::Cache tcache;
  const Matrix queries = impl_->text->forward(batch.queries.sequences, tcache);

  AfnNet::Cache acache;
  ConvNet::Cache ccache;
  Matrix scenes;
  if (impl_->afn) {
    scenes = impl_->afn->forward(batch.scenes, Mode::train, rng, acache);
  } else {
    const Matrix x = nn::stack_rows(batch.scenes.viewpoints, ccache.seg);
    ccache.shared = impl_->conv->trunk(x, ccache.seg, ccache.conv);
    scenes = impl_->conv->scene(ccache);
  }

  auto rank = losses::ranking_loss(scenes, queries, margin, accumulate_grads);
  StepResult out;
  out.min_hinge_distance = rank.min_hinge_distance;

  const bool multi = impl_->conv && impl_->conv->classifier.has_value();
  losses::ClassificationResult cls;
  if (multi) {
    ccache.probs = impl_->conv->classifier->forward(ccache.shared, Mode::train, rng, ccache.cls);
    std::vector<std::uint8_t> tags;
    if (batch.tags.size() != n) throw std::invalid_argument("train step: FArMARe needs viewpoint tags");
    for (std::size_t i = 0; i < n; ++i) {
      if (batch.tags[i]->size() != batch.scenes.viewpoints[i]->rows()) {
        throw std::invalid_argument("train step: tag count differs from viewpoint count");
      }
      tags.insert(tags.end(), batch.tags[i]->begin(), batch.tags[i]->end());
    }
    cls = losses::classification_loss(ccache.probs, tags, accumulate_grads);
    out.loss = losses::combined_loss(rank.loss, cls.loss);
  } else {
    out.loss = losses::ranking_only(rank.loss);
  }
  if (!accumulate_grads) return out;

  if (multi) {
    kernels::scale(0.5, rank.d_scenes.data(), rank.d_scenes.size());
    kernels::scale(0.5, rank.d_queries.data(), rank.d_queries.size());
    kernels::scale(0.5, cls.d_logits.data(), cls.d_logits.size());
  }
  impl_->text->backward(tcache, rank.d_queries, nullptr);
  if (impl_->afn) {
    impl_->afn->backward(acache, rank.d_scenes);
  } else {
    impl_->conv->backward(ccache, rank.d_scenes, multi ? &cls.d_logits : nullptr);
  }
  return out;
}

std::vector<nn::Parameter*> RetrievalModel::parameters() {
  std::vector<nn::Parameter*> p;
  if (impl_->afn) p = impl_->afn->parameters();
  if (impl_->conv) p = impl_->conv->parameters();
  if (impl_->text)
    for (auto* q : impl_->text->parameters()) p.push_back(q);
  return p;
}

void RetrievalModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

}  // namespace farmare::models
