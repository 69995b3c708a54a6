#include "farmare/text_branch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace farmare::text_branch {

using kernels::Trans;

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Sequence indices sorted by descending length (stable).
std::vector<std::size_t> length_order(const nn::Segments& seg) {
  std::vector<std::size_t> order(seg.size() - 1);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return seg[a + 1] - seg[a] > seg[b + 1] - seg[b];
  });
  return order;
}

std::size_t seq_len(const nn::Segments& seg, std::size_t i) { return seg[i + 1] - seg[i]; }

// Row of the stacked input consumed by sequence i at step t.
std::size_t input_row(const nn::Segments& seg, std::size_t i, std::size_t t, bool reverse) {
  return reverse ? seg[i + 1] - 1 - t : seg[i] + t;
}

}  // namespace

GruDirection::GruDirection(const std::string& group, const std::string& prefix, std::size_t input, std::size_t hidden)
    : w_ih(group, prefix + ".weight_ih", input, 3 * hidden),
      w_hh(group, prefix + ".weight_hh", hidden, 3 * hidden),
      b_ih(group, prefix + ".bias_ih", 1, 3 * hidden),
      b_hh(group, prefix + ".bias_hh", 1, 3 * hidden),
      hidden_(hidden) {}

void GruDirection::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (auto* p : parameters()) nn::init_uniform(p->value, bound, rng);
}

void GruDirection::forward(const Matrix& inputs, const nn::Segments& seg, bool reverse, Cache& cache) const {
  const std::size_t batch = seg.size() - 1;
  const std::size_t h = hidden_;
  if (inputs.cols() != w_ih.value.rows()) {
    throw std::invalid_argument("GRU: expected input dimension " + std::to_string(w_ih.value.rows()) + ", got " +
                                std::to_string(inputs.cols()));
  }
  const auto order = length_order(seg);
  const std::size_t max_len = batch ? seq_len(seg, order.front()) : 0;

  Matrix gx(inputs.rows(), 3 * h);  // input projections for every row at once
  matmul(inputs, Trans::no, w_ih.value, Trans::no, gx);
  add_row_bias(gx, b_ih.value);

  cache.steps.clear();
  cache.steps.reserve(max_len);
  Matrix state(batch, h);  // rows follow `order`
  std::size_t active = batch;
  for (std::size_t t = 0; t < max_len; ++t) {
    while (active > 0 && seq_len(seg, order[active - 1]) <= t) --active;
    Step st;
    st.active = active;
    st.h_prev.resize(active, h);
    std::copy(state.data(), state.data() + active * h, st.h_prev.data());
    Matrix gh(active, 3 * h);
    matmul(st.h_prev, Trans::no, w_hh.value, Trans::no, gh);
    add_row_bias(gh, b_hh.value);
    st.r.resize(active, h);
    st.z.resize(active, h);
    st.n.resize(active, h);
    st.hn.resize(active, h);
    for (std::size_t a = 0; a < active; ++a) {
      const double* x = gx.row(input_row(seg, order[a], t, reverse)).data();
      const double* g = gh.row(a).data();
      double* hs = state.row(a).data();
      for (std::size_t j = 0; j < h; ++j) {
        const double r = sigmoid(x[j] + g[j]);
        const double z = sigmoid(x[h + j] + g[h + j]);
        const double hn = g[2 * h + j];
        const double n = std::tanh(x[2 * h + j] + r * hn);
        st.r(a, j) = r;
        st.z(a, j) = z;
        st.n(a, j) = n;
        st.hn(a, j) = hn;
        hs[j] = (1.0 - z) * n + z * hs[j];
      }
    }
    cache.steps.push_back(std::move(st));
  }
  cache.final_h.resize(batch, h);
  for (std::size_t a = 0; a < batch; ++a) {
    std::copy(state.row(a).begin(), state.row(a).end(), cache.final_h.row(order[a]).begin());
  }
}

void GruDirection::backward(const Cache& cache, const Matrix& inputs, const nn::Segments& seg, bool reverse,
                            const Matrix& d_final, Matrix* d_inputs) {
  const std::size_t batch = seg.size() - 1;
  const std::size_t h = hidden_;
  const auto order = length_order(seg);
  const std::size_t total_rows = seg.back();

  Matrix dgx(total_rows, 3 * h);  // gradient on input pre-activations, per stacked row
  Matrix dstate(batch, h);        // rows follow `order`
  for (std::size_t t = cache.steps.size(); t-- > 0;) {
    const Step& st = cache.steps[t];
    // Sequences ending at this step pick up their final-state gradient.
    for (std::size_t a = 0; a < st.active; ++a) {
      if (seq_len(seg, order[a]) == t + 1) {
        std::copy(d_final.row(order[a]).begin(), d_final.row(order[a]).end(), dstate.row(a).begin());
      }
    }
    Matrix dgh(st.active, 3 * h);
    for (std::size_t a = 0; a < st.active; ++a) {
      double* dx = dgx.row(input_row(seg, order[a], t, reverse)).data();
      double* dg = dgh.row(a).data();
      double* ds = dstate.row(a).data();
      for (std::size_t j = 0; j < h; ++j) {
        const double r = st.r(a, j), z = st.z(a, j), n = st.n(a, j), hn = st.hn(a, j);
        const double dh = ds[j];
        const double dn = dh * (1.0 - z);
        const double dz = dh * (st.h_prev(a, j) - n);
        const double dan = dn * (1.0 - n * n);
        const double dr = dan * hn;
        const double dar = dr * r * (1.0 - r);
        const double daz = dz * z * (1.0 - z);
        dx[j] = dar;
        dx[h + j] = daz;
        dx[2 * h + j] = dan;
        dg[j] = dar;
        dg[h + j] = daz;
        dg[2 * h + j] = dan * r;
        ds[j] = dh * z;
      }
    }
    matmul(st.h_prev, Trans::yes, dgh, Trans::no, w_hh.grad, 1.0, 1.0);
    accumulate_column_sums(dgh, b_hh.grad);
    Matrix dprev(st.active, h);
    matmul(dgh, Trans::no, w_hh.value, Trans::yes, dprev);
    for (std::size_t a = 0; a < st.active; ++a) kernels::axpy(1.0, dprev.row(a).data(), dstate.row(a).data(), h);
  }
  matmul(inputs, Trans::yes, dgx, Trans::no, w_ih.grad, 1.0, 1.0);
  accumulate_column_sums(dgx, b_ih.grad);
  if (d_inputs) matmul(dgx, Trans::no, w_ih.value, Trans::yes, *d_inputs, 1.0, 1.0);
}

// ---------------------------------------------------------------------------

TextBranch::TextBranch(TextBranchConfig cfg)
    : cfg_(cfg),
      forward_dir_("text_branch", "gru.forward", cfg.input_dim, cfg.hidden_dim),
      backward_dir_("text_branch", "gru.backward", cfg.input_dim, cfg.hidden_dim) {}

void TextBranch::init(std::uint64_t model_seed) {
  Rng rng(nn::init_seed(model_seed, "text_branch"));
  forward_dir_.init(rng);
  backward_dir_.init(rng);
}

Matrix TextBranch::forward(std::span<const Matrix* const> sequences, Cache& cache) const {
  for (const Matrix* s : sequences) {
    if (s->rows() == 0) throw std::invalid_argument("text branch: empty sequence");
    if (s->cols() != cfg_.input_dim) {
      throw std::invalid_argument("text branch: expected feature dimension " + std::to_string(cfg_.input_dim) +
                                  ", got " + std::to_string(s->cols()));
    }
  }
  cache.inputs = nn::stack_rows(sequences, cache.seg);
  forward_dir_.forward(cache.inputs, cache.seg, false, cache.fwd);
  backward_dir_.forward(cache.inputs, cache.seg, true, cache.bwd);
  Matrix q(sequences.size(), cfg_.hidden_dim);
  for (std::size_t i = 0; i < q.size(); ++i) {
    q.data()[i] = 0.5 * (cache.fwd.final_h.data()[i] + cache.bwd.final_h.data()[i]);
  }
  return q;
}

Matrix TextBranch::encode(std::span<const Matrix* const> sequences) const {
  Cache cache;
  return forward(sequences, cache);
}

void TextBranch::backward(const Cache& cache, const Matrix& d_queries, Matrix* d_inputs) {
  Matrix half = d_queries;
  kernels::scale(0.5, half.data(), half.size());
  if (d_inputs) d_inputs->resize(cache.seg.back(), cfg_.input_dim);
  forward_dir_.backward(cache.fwd, cache.inputs, cache.seg, false, half, d_inputs);
  backward_dir_.backward(cache.bwd, cache.inputs, cache.seg, true, half, d_inputs);
}

std::vector<nn::Parameter*> TextBranch::parameters() {
  auto p = forward_dir_.parameters();
  for (auto* q : backward_dir_.parameters()) p.push_back(q);
  return p;
}

}  // namespace farmare::text_branch
