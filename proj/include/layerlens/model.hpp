#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "layerlens/common.hpp"

namespace layerlens {

// Class order of the 2-way sentiment head: index 0 = negative, 1 = positive.
constexpr int kNegativeClass = 0;
constexpr int kPositiveClass = 1;
constexpr double kLayerNormEpsilon = 1e-5;
constexpr double kMomentum = 0.9;

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 32;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 64;
  int max_len = 64;
  int n_classes = 2;

  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (vocab_size <= 0 || d_model <= 0 || n_heads <= 0 || n_layers <= 0 || d_ff <= 0 ||
        max_len <= 0 || n_classes < 2)
      throw ConfigError("model config: all dimensions must be positive (n_classes >= 2)");
    if (d_model % n_heads != 0)
      throw ConfigError(strfmt("model config: d_model=%d not divisible by n_heads=%d", d_model,
                               n_heads));
  }

  bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
  Matrix ln1_gain, ln1_bias;  // 1 x d_model
  Matrix wq, wk, wv, wo;      // d_model x d_model
  Matrix bq, bk, bv, bo;      // 1 x d_model
  Matrix ln2_gain, ln2_bias;  // 1 x d_model
  Matrix ff_w1;               // d_model x d_ff
  Matrix ff_b1;               // 1 x d_ff
  Matrix ff_w2;               // d_ff x d_model
  Matrix ff_b2;               // 1 x d_model
};

struct ModelWeights {
  ModelConfig config;
  Matrix token_embeddings;     // vocab_size x d_model
  Matrix position_embeddings;  // max_len x d_model
  std::vector<LayerWeights> layers;
  Matrix classifier_w;  // d_model x n_classes
  Matrix classifier_b;  // 1 x n_classes
};

// Canonical parameter order; serialization, initialization, updates and
// gradient checks all iterate in this order.
template <typename W, typename Fn>
void for_each_parameter(W& w, Fn&& fn) {
  fn("token_embeddings", w.token_embeddings);
  fn("position_embeddings", w.position_embeddings);
  for (size_t l = 0; l < w.layers.size(); ++l) {
    auto& layer = w.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    fn(p + "ln1_gain", layer.ln1_gain);
    fn(p + "ln1_bias", layer.ln1_bias);
    fn(p + "wq", layer.wq);
    fn(p + "bq", layer.bq);
    fn(p + "wk", layer.wk);
    fn(p + "bk", layer.bk);
    fn(p + "wv", layer.wv);
    fn(p + "bv", layer.bv);
    fn(p + "wo", layer.wo);
    fn(p + "bo", layer.bo);
    fn(p + "ln2_gain", layer.ln2_gain);
    fn(p + "ln2_bias", layer.ln2_bias);
    fn(p + "ff_w1", layer.ff_w1);
    fn(p + "ff_b1", layer.ff_b1);
    fn(p + "ff_w2", layer.ff_w2);
    fn(p + "ff_b2", layer.ff_b2);
  }
  fn("classifier_w", w.classifier_w);
  fn("classifier_b", w.classifier_b);
}

template <typename W>
std::vector<Matrix*> parameter_list(W& w) {
  std::vector<Matrix*> out;
  for_each_parameter(w, [&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

inline ModelWeights make_weight_shapes(const ModelConfig& c) {
  ModelWeights w;
  w.config = c;
  w.token_embeddings = Matrix(c.vocab_size, c.d_model);
  w.position_embeddings = Matrix(c.max_len, c.d_model);
  w.layers.resize(c.n_layers);
  for (auto& l : w.layers) {
    l.ln1_gain = Matrix(1, c.d_model);
    l.ln1_bias = Matrix(1, c.d_model);
    l.wq = Matrix(c.d_model, c.d_model);
    l.wk = Matrix(c.d_model, c.d_model);
    l.wv = Matrix(c.d_model, c.d_model);
    l.wo = Matrix(c.d_model, c.d_model);
    l.bq = Matrix(1, c.d_model);
    l.bk = Matrix(1, c.d_model);
    l.bv = Matrix(1, c.d_model);
    l.bo = Matrix(1, c.d_model);
    l.ln2_gain = Matrix(1, c.d_model);
    l.ln2_bias = Matrix(1, c.d_model);
    l.ff_w1 = Matrix(c.d_model, c.d_ff);
    l.ff_b1 = Matrix(1, c.d_ff);
    l.ff_w2 = Matrix(c.d_ff, c.d_model);
    l.ff_b2 = Matrix(1, c.d_model);
  }
  w.classifier_w = Matrix(c.d_model, c.n_classes);
  w.classifier_b = Matrix(1, c.n_classes);
  return w;
}

// Deterministic init: weight matrices uniform in +-1/sqrt(fan_in) where
// fan_in is the input dimension of the matrix as applied (embeddings use
// d_model); layer-norm gains 1; all biases 0.
inline ModelWeights init_weights(const ModelConfig& config, uint64_t seed) {
  config.validate();
  ModelWeights w = make_weight_shapes(config);
  Rng rng(seed);
  auto fill_uniform = [&](Matrix& m, int fan_in) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : m.data) v = rng.uniform(-scale, scale);
  };
  for_each_parameter(w, [&](const std::string& name, Matrix& m) {
    const bool is_gain = name.find("ln") != std::string::npos && name.find("gain") != std::string::npos;
    const bool is_bias = m.rows == 1 && !is_gain;
    if (is_gain) {
      m.fill(1.0);
    } else if (is_bias) {
      m.fill(0.0);
    } else if (name == "token_embeddings" || name == "position_embeddings") {
      fill_uniform(m, config.d_model);
    } else {
      fill_uniform(m, m.rows);
    }
  });
  return w;
}

// Every internal surface of one forward pass the explainer can intervene on.
struct ForwardTrace {
  Matrix embedding_out;                        // T x d_model
  std::vector<Matrix> hidden;                  // n_layers of T x d_model
  std::vector<std::vector<Matrix>> attention;  // [layer][head] T x T
  std::vector<double> logits;                  // n_classes
  double prob_positive = 0.0;
};

struct ClassifierOut {
  std::vector<double> logits;
  double prob_positive = 0.0;
};

namespace detail {

inline void softmax_row(double* row, int n) {
  double mx = row[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  for (int i = 0; i < n; ++i) row[i] /= sum;
}

// y = gain .* (x - mean) / sqrt(var + eps) + bias, per row.
// xhat and sigma are captured for the backward pass.
inline void layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& y,
                       Matrix& xhat, std::vector<double>& sigma) {
  const int n = x.cols;
  y = Matrix(x.rows, n);
  xhat = Matrix(x.rows, n);
  sigma.assign(x.rows, 0.0);
  for (int r = 0; r < x.rows; ++r) {
    const double* xr = x.row(r);
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xr[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xr[j] - mu;
      var += d * d;
    }
    var /= n;
    const double s = std::sqrt(var + kLayerNormEpsilon);
    sigma[r] = s;
    for (int j = 0; j < n; ++j) {
      const double h = (xr[j] - mu) / s;
      xhat(r, j) = h;
      y(r, j) = gain(0, j) * h + bias(0, j);
    }
  }
}

// dL/dx for layer norm given dL/dy, using the cached xhat and sigma.
inline Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const Matrix& xhat,
                                  const std::vector<double>& sigma, Matrix& dgain, Matrix& dbias) {
  const int n = dy.cols;
  Matrix dx(dy.rows, n);
  for (int r = 0; r < dy.rows; ++r) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (int j = 0; j < n; ++j) {
      const double g = dy(r, j);
      dgain(0, j) += g * xhat(r, j);
      dbias(0, j) += g;
      const double dxh = g * gain(0, j);
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * xhat(r, j);
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    for (int j = 0; j < n; ++j) {
      const double dxh = dy(r, j) * gain(0, j);
      dx(r, j) = (dxh - mean_dxhat - xhat(r, j) * mean_dxhat_xhat) / sigma[r];
    }
  }
  return dx;
}

inline Matrix add_bias(Matrix m, const Matrix& bias) {
  for (int r = 0; r < m.rows; ++r)
    for (int j = 0; j < m.cols; ++j) m(r, j) += bias(0, j);
  return m;
}

inline Matrix slice_cols(const Matrix& m, int c0, int n) {
  Matrix out(m.rows, n);
  for (int r = 0; r < m.rows; ++r)
    for (int j = 0; j < n; ++j) out(r, j) = m(r, c0 + j);
  return out;
}

inline void add_into_cols(Matrix& m, const Matrix& part, int c0) {
  for (int r = 0; r < m.rows; ++r)
    for (int j = 0; j < part.cols; ++j) m(r, c0 + j) += part(r, j);
}

// Intermediate states of one block, kept only when training.
struct BlockCache {
  Matrix ln1_xhat, a_in;
  std::vector<double> ln1_sigma;
  Matrix q, k, v;
  std::vector<Matrix> attn;  // per head, T x T
  Matrix concat;
  Matrix x_mid;
  Matrix ln2_xhat, f_in;
  std::vector<double> ln2_sigma;
  Matrix ff_pre, ff_act;
};

// Pre-norm encoder blocks start_layer..n_layers-1. The same routine backs
// forward(), forward_from_embeddings() and forward_with_hidden_override(), so
// identity interventions reproduce the unperturbed pass bit for bit.
inline Matrix run_encoder(const ModelWeights& w, Matrix x, int start_layer, ForwardTrace* trace,
                          std::vector<BlockCache>* cache) {
  const ModelConfig& c = w.config;
  const int T = x.rows;
  const int dh = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int l = start_layer; l < c.n_layers; ++l) {
    const LayerWeights& lw = w.layers[l];
    BlockCache bc;

    Matrix a_in;
    layer_norm(x, lw.ln1_gain, lw.ln1_bias, a_in, bc.ln1_xhat, bc.ln1_sigma);
    Matrix q = add_bias(matmul(a_in, lw.wq), lw.bq);
    Matrix k = add_bias(matmul(a_in, lw.wk), lw.bk);
    Matrix v = add_bias(matmul(a_in, lw.wv), lw.bv);

    Matrix concat(T, c.d_model);
    std::vector<Matrix> heads(c.n_heads);
    for (int h = 0; h < c.n_heads; ++h) {
      Matrix qh = slice_cols(q, h * dh, dh);
      Matrix kh = slice_cols(k, h * dh, dh);
      Matrix vh = slice_cols(v, h * dh, dh);
      Matrix scores = matmul_bt(qh, kh);
      for (auto& s : scores.data) s *= scale;
      for (int r = 0; r < T; ++r) softmax_row(scores.row(r), T);
      heads[h] = scores;
      Matrix oh = matmul(scores, vh);
      add_into_cols(concat, oh, h * dh);
    }
    Matrix attn_out = add_bias(matmul(concat, lw.wo), lw.bo);
    Matrix x_mid = x;
    for (size_t i = 0; i < x_mid.data.size(); ++i) x_mid.data[i] += attn_out.data[i];

    Matrix f_in;
    layer_norm(x_mid, lw.ln2_gain, lw.ln2_bias, f_in, bc.ln2_xhat, bc.ln2_sigma);
    Matrix ff_pre = add_bias(matmul(f_in, lw.ff_w1), lw.ff_b1);
    Matrix ff_act = ff_pre;
    for (auto& vv : ff_act.data) vv = vv > 0.0 ? vv : 0.0;
    Matrix ff_out = add_bias(matmul(ff_act, lw.ff_w2), lw.ff_b2);
    Matrix x_out = x_mid;
    for (size_t i = 0; i < x_out.data.size(); ++i) x_out.data[i] += ff_out.data[i];

    if (trace) {
      trace->hidden[l] = x_out;
      trace->attention[l] = heads;
    }
    if (cache) {
      bc.a_in = std::move(a_in);
      bc.q = std::move(q);
      bc.k = std::move(k);
      bc.v = std::move(v);
      bc.attn = std::move(heads);
      bc.concat = std::move(concat);
      bc.x_mid = x_mid;
      bc.f_in = std::move(f_in);
      bc.ff_pre = std::move(ff_pre);
      bc.ff_act = std::move(ff_act);
      cache->push_back(std::move(bc));
    }
    x = std::move(x_out);
  }
  return x;
}

inline ClassifierOut classify(const ModelWeights& w, const Matrix& h_last) {
  const ModelConfig& c = w.config;
  ClassifierOut out;
  out.logits.assign(c.n_classes, 0.0);
  for (int cl = 0; cl < c.n_classes; ++cl) {
    double s = w.classifier_b(0, cl);
    for (int d = 0; d < c.d_model; ++d) s += h_last(0, d) * w.classifier_w(d, cl);
    out.logits[cl] = s;
  }
  std::vector<double> probs = out.logits;
  softmax_row(probs.data(), c.n_classes);
  out.prob_positive = probs[kPositiveClass];
  return out;
}

}  // namespace detail

// Token embedding + learned absolute position embedding.
inline Matrix embed(const ModelWeights& w, const std::vector<int>& ids) {
  const ModelConfig& c = w.config;
  const int T = static_cast<int>(ids.size());
  if (T == 0) throw InputError("forward: empty token sequence");
  if (T > c.max_len)
    throw InputError(strfmt("forward: sequence length %d exceeds max_len %d", T, c.max_len));
  Matrix e(T, c.d_model);
  for (int t = 0; t < T; ++t) {
    if (ids[t] < 0 || ids[t] >= c.vocab_size)
      throw InputError(strfmt("forward: token id %d out of range [0,%d)", ids[t], c.vocab_size));
    for (int d = 0; d < c.d_model; ++d)
      e(t, d) = w.token_embeddings(ids[t], d) + w.position_embeddings(t, d);
  }
  return e;
}

inline ForwardTrace forward_from_embeddings(const ModelWeights& w, const Matrix& embeddings) {
  const ModelConfig& c = w.config;
  if (embeddings.cols != c.d_model || embeddings.rows <= 0 || embeddings.rows > c.max_len)
    throw InputError(strfmt("forward_from_embeddings: override shape %dx%d invalid for d_model=%d"
                            ", max_len=%d",
                            embeddings.rows, embeddings.cols, c.d_model, c.max_len));
  ForwardTrace trace;
  trace.embedding_out = embeddings;
  trace.hidden.resize(c.n_layers);
  trace.attention.resize(c.n_layers);
  Matrix h = detail::run_encoder(w, embeddings, 0, &trace, nullptr);
  auto out = detail::classify(w, h);
  trace.logits = std::move(out.logits);
  trace.prob_positive = out.prob_positive;
  return trace;
}

inline ForwardTrace forward(const ModelWeights& w, const std::vector<int>& ids) {
  return forward_from_embeddings(w, embed(w, ids));
}

// Resumes computation from an override of hidden[layer] through the remaining
// blocks and the classifier. Layers 0..layer are not run at all.
inline ClassifierOut forward_with_hidden_override(const ModelWeights& w, int layer,
                                                  const Matrix& hidden_override) {
  const ModelConfig& c = w.config;
  if (layer < 0 || layer >= c.n_layers)
    throw InputError(strfmt("forward_with_hidden_override: layer %d out of range [0,%d)", layer,
                            c.n_layers));
  if (hidden_override.cols != c.d_model || hidden_override.rows <= 0 ||
      hidden_override.rows > c.max_len)
    throw InputError(strfmt("forward_with_hidden_override: override shape %dx%d invalid",
                            hidden_override.rows, hidden_override.cols));
  Matrix h = detail::run_encoder(w, hidden_override, layer + 1, nullptr, nullptr);
  return detail::classify(w, h);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainExample {
  std::vector<int> token_ids;
  int label = 0;  // kNegativeClass or kPositiveClass
};

struct TrainHyperparams {
  double learning_rate = 0.01;
  int epochs = 120;
  int batch_size = 8;
  uint64_t seed = 42;
};

struct LossAndGradients {
  double loss = 0.0;  // mean cross-entropy over the batch
  int correct = 0;
  ModelWeights grads;
};

// Mean cross-entropy and its analytic gradient over a batch. Exposed so the
// finite-difference check can probe it directly.
inline LossAndGradients training_loss_and_gradients(const ModelWeights& w,
                                                    const std::vector<TrainExample>& batch) {
  using namespace detail;
  const ModelConfig& c = w.config;
  if (batch.empty()) throw InputError("training: empty batch");
  LossAndGradients out;
  out.grads = make_weight_shapes(c);

  for (const TrainExample& ex : batch) {
    if (ex.label != kNegativeClass && ex.label != kPositiveClass)
      throw InputError(strfmt("training: label %d not in {0,1}", ex.label));
    Matrix e = embed(w, ex.token_ids);
    std::vector<BlockCache> cache;
    Matrix h = run_encoder(w, e, 0, nullptr, &cache);
    ClassifierOut co = classify(w, h);

    // log-softmax cross entropy
    double mx = *std::max_element(co.logits.begin(), co.logits.end());
    double lse = 0.0;
    for (double z : co.logits) lse += std::exp(z - mx);
    lse = mx + std::log(lse);
    out.loss += lse - co.logits[ex.label];
    int pred = static_cast<int>(std::max_element(co.logits.begin(), co.logits.end()) -
                                co.logits.begin());
    if (pred == ex.label) ++out.correct;

    const int T = e.rows;
    const int dh_dim = c.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh_dim));

    std::vector<double> dlogits(c.n_classes);
    for (int cl = 0; cl < c.n_classes; ++cl)
      dlogits[cl] = std::exp(co.logits[cl] - lse) - (cl == ex.label ? 1.0 : 0.0);

    Matrix dh(T, c.d_model);
    for (int cl = 0; cl < c.n_classes; ++cl) {
      out.grads.classifier_b(0, cl) += dlogits[cl];
      for (int d = 0; d < c.d_model; ++d) {
        out.grads.classifier_w(d, cl) += h(0, d) * dlogits[cl];
        dh(0, d) += w.classifier_w(d, cl) * dlogits[cl];
      }
    }

    for (int l = c.n_layers - 1; l >= 0; --l) {
      const LayerWeights& lw = w.layers[l];
      LayerWeights& g = out.grads.layers[l];
      const BlockCache& bc = cache[l];

      // feed-forward sub-block
      Matrix d_ffout = dh;  // residual: dh also flows straight to x_mid
      Matrix d_act = matmul_bt(d_ffout, lw.ff_w2);
      Matrix g_w2 = matmul_at(bc.ff_act, d_ffout);
      for (size_t i = 0; i < g_w2.data.size(); ++i) g.ff_w2.data[i] += g_w2.data[i];
      for (int r = 0; r < T; ++r)
        for (int j = 0; j < c.d_model; ++j) g.ff_b2(0, j) += d_ffout(r, j);
      for (size_t i = 0; i < d_act.data.size(); ++i)
        if (bc.ff_pre.data[i] <= 0.0) d_act.data[i] = 0.0;
      Matrix g_w1 = matmul_at(bc.f_in, d_act);
      for (size_t i = 0; i < g_w1.data.size(); ++i) g.ff_w1.data[i] += g_w1.data[i];
      for (int r = 0; r < T; ++r)
        for (int j = 0; j < c.d_ff; ++j) g.ff_b1(0, j) += d_act(r, j);
      Matrix d_fin = matmul_bt(d_act, lw.ff_w1);
      Matrix d_xmid =
          layer_norm_backward(d_fin, lw.ln2_gain, bc.ln2_xhat, bc.ln2_sigma, g.ln2_gain,
                              g.ln2_bias);
      for (size_t i = 0; i < d_xmid.data.size(); ++i) d_xmid.data[i] += dh.data[i];

      // attention sub-block
      Matrix d_attnout = d_xmid;
      Matrix d_concat = matmul_bt(d_attnout, lw.wo);
      Matrix g_wo = matmul_at(bc.concat, d_attnout);
      for (size_t i = 0; i < g_wo.data.size(); ++i) g.wo.data[i] += g_wo.data[i];
      for (int r = 0; r < T; ++r)
        for (int j = 0; j < c.d_model; ++j) g.bo(0, j) += d_attnout(r, j);

      Matrix dq(T, c.d_model), dk(T, c.d_model), dv(T, c.d_model);
      for (int hId = 0; hId < c.n_heads; ++hId) {
        Matrix qh = slice_cols(bc.q, hId * dh_dim, dh_dim);
        Matrix kh = slice_cols(bc.k, hId * dh_dim, dh_dim);
        Matrix vh = slice_cols(bc.v, hId * dh_dim, dh_dim);
        Matrix d_oh = slice_cols(d_concat, hId * dh_dim, dh_dim);
        const Matrix& a = bc.attn[hId];
        Matrix d_a = matmul_bt(d_oh, vh);
        Matrix d_vh = matmul_at(a, d_oh);
        // softmax backward, row-wise
        Matrix d_s(T, T);
        for (int r = 0; r < T; ++r) {
          double dot = 0.0;
          for (int j2 = 0; j2 < T; ++j2) dot += d_a(r, j2) * a(r, j2);
          for (int j2 = 0; j2 < T; ++j2) d_s(r, j2) = a(r, j2) * (d_a(r, j2) - dot);
        }
        for (auto& s : d_s.data) s *= scale;
        Matrix d_qh = matmul(d_s, kh);
        Matrix d_kh = matmul_at(d_s, qh);
        add_into_cols(dq, d_qh, hId * dh_dim);
        add_into_cols(dk, d_kh, hId * dh_dim);
        add_into_cols(dv, d_vh, hId * dh_dim);
      }

      Matrix g_wq = matmul_at(bc.a_in, dq);
      Matrix g_wk = matmul_at(bc.a_in, dk);
      Matrix g_wv = matmul_at(bc.a_in, dv);
      for (size_t i = 0; i < g_wq.data.size(); ++i) {
        g.wq.data[i] += g_wq.data[i];
        g.wk.data[i] += g_wk.data[i];
        g.wv.data[i] += g_wv.data[i];
      }
      for (int r = 0; r < T; ++r)
        for (int j = 0; j < c.d_model; ++j) {
          g.bq(0, j) += dq(r, j);
          g.bk(0, j) += dk(r, j);
          g.bv(0, j) += dv(r, j);
        }
      Matrix d_ain = matmul_bt(dq, lw.wq);
      Matrix tmp = matmul_bt(dk, lw.wk);
      for (size_t i = 0; i < d_ain.data.size(); ++i) d_ain.data[i] += tmp.data[i];
      tmp = matmul_bt(dv, lw.wv);
      for (size_t i = 0; i < d_ain.data.size(); ++i) d_ain.data[i] += tmp.data[i];

      Matrix d_xin =
          layer_norm_backward(d_ain, lw.ln1_gain, bc.ln1_xhat, bc.ln1_sigma, g.ln1_gain,
                              g.ln1_bias);
      for (size_t i = 0; i < d_xin.data.size(); ++i) d_xin.data[i] += d_xmid.data[i];
      dh = std::move(d_xin);
    }

    for (int t = 0; t < T; ++t)
      for (int d = 0; d < c.d_model; ++d) {
        out.grads.token_embeddings(ex.token_ids[t], d) += dh(t, d);
        out.grads.position_embeddings(t, d) += dh(t, d);
      }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for_each_parameter(out.grads, [&](const std::string&, Matrix& m) {
    for (auto& v : m.data) v *= inv;
  });
  return out;
}

struct TrainResult {
  ModelWeights weights;
  std::vector<double> epoch_loss;      // mean per-example cross-entropy
  std::vector<double> epoch_accuracy;  // full-corpus accuracy after the epoch
};

// Mini-batch gradient descent with momentum 0.9. Deterministic given the
// seed: the only randomness is the epoch shuffle.
inline TrainResult train_classifier(const ModelWeights& start,
                                    const std::vector<TrainExample>& corpus,
                                    const TrainHyperparams& hp) {
  if (corpus.empty()) throw InputError("train: empty corpus");
  for (const auto& ex : corpus)
    if (ex.label != kNegativeClass && ex.label != kPositiveClass)
      throw InputError("train: labels must be positive or negative");
  if (hp.epochs < 0 || hp.batch_size <= 0)
    throw ConfigError("train: epochs must be >= 0 and batch_size > 0");

  TrainResult result;
  result.weights = start;
  ModelWeights velocity = make_weight_shapes(start.config);
  const std::vector<Matrix*> w_params = parameter_list(result.weights);
  const std::vector<Matrix*> v_params = parameter_list(velocity);
  Rng rng(hp.seed);
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    // Fisher-Yates, hand rolled so the permutation is identical everywhere.
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = rng.index(i);
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    size_t seen = 0;
    for (size_t b = 0; b < corpus.size(); b += hp.batch_size) {
      std::vector<TrainExample> batch;
      for (size_t i = b; i < std::min(corpus.size(), b + hp.batch_size); ++i)
        batch.push_back(corpus[order[i]]);
      LossAndGradients lg = training_loss_and_gradients(result.weights, batch);
      if (!std::isfinite(lg.loss))
        throw DivergenceError(strfmt("train: non-finite loss at epoch %d", epoch));
      loss_sum += lg.loss * static_cast<double>(batch.size());
      seen += batch.size();

      const std::vector<Matrix*> g_params = parameter_list(lg.grads);
      for (size_t p = 0; p < w_params.size(); ++p) {
        Matrix& wm = *w_params[p];
        Matrix& vm = *v_params[p];
        const Matrix& gm = *g_params[p];
        for (size_t i = 0; i < wm.data.size(); ++i) {
          vm.data[i] = kMomentum * vm.data[i] - hp.learning_rate * gm.data[i];
          wm.data[i] += vm.data[i];
        }
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(seen));

    int correct = 0;
    for (const auto& ex : corpus) {
      ForwardTrace t = forward(result.weights, ex.token_ids);
      const int pred = t.logits[kPositiveClass] > t.logits[kNegativeClass] ? kPositiveClass
                                                                           : kNegativeClass;
      if (pred == ex.label) ++correct;
    }
    result.epoch_accuracy.push_back(static_cast<double>(correct) /
                                    static_cast<double>(corpus.size()));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Weight document: plain text, self-describing header then named parameter
// blocks in canonical order, row-major, one row per line, %.17g floats.
// ---------------------------------------------------------------------------

inline std::string save_weights(const ModelWeights& w) {
  std::ostringstream out;
  out << "layerlens-weights 1\n";
  out << "vocab_size " << w.config.vocab_size << "\n";
  out << "d_model " << w.config.d_model << "\n";
  out << "n_heads " << w.config.n_heads << "\n";
  out << "n_layers " << w.config.n_layers << "\n";
  out << "d_ff " << w.config.d_ff << "\n";
  out << "max_len " << w.config.max_len << "\n";
  out << "n_classes " << w.config.n_classes << "\n";
  for_each_parameter(const_cast<ModelWeights&>(w), [&](const std::string& name, Matrix& m) {
    out << "param " << name << " " << m.rows << " " << m.cols << "\n";
    for (int r = 0; r < m.rows; ++r) {
      const double* row = m.row(r);
      for (int j = 0; j < m.cols; ++j) {
        if (j) out << ' ';
        out << format_g17(row[j]);
      }
      out << "\n";
    }
  });
  out << "end\n";
  return out.str();
}

inline ModelWeights load_weights(const std::string& document) {
  std::istringstream in(document);
  std::string word;
  auto expect_field = [&](const char* name) -> long long {
    std::string key;
    long long value;
    if (!(in >> key) || key != name)
      throw FormatError(strfmt("weights: expected field \"%s\", found \"%s\"", name, key.c_str()));
    if (!(in >> value)) throw FormatError(strfmt("weights: field \"%s\" has no value", name));
    return value;
  };

  if (!(in >> word) || word != "layerlens-weights")
    throw FormatError("weights: missing layerlens-weights header");
  long long version;
  if (!(in >> version) || version != 1)
    throw FormatError("weights: unsupported document version");

  ModelConfig c;
  c.vocab_size = static_cast<int>(expect_field("vocab_size"));
  c.d_model = static_cast<int>(expect_field("d_model"));
  c.n_heads = static_cast<int>(expect_field("n_heads"));
  c.n_layers = static_cast<int>(expect_field("n_layers"));
  c.d_ff = static_cast<int>(expect_field("d_ff"));
  c.max_len = static_cast<int>(expect_field("max_len"));
  c.n_classes = static_cast<int>(expect_field("n_classes"));
  c.validate();

  ModelWeights w = make_weight_shapes(c);
  for_each_parameter(w, [&](const std::string& name, Matrix& m) {
    std::string tag, pname;
    int r, cc;
    if (!(in >> tag >> pname >> r >> cc) || tag != "param")
      throw FormatError(strfmt("weights: expected parameter block \"%s\"", name.c_str()));
    if (pname != name)
      throw FormatError(strfmt("weights: expected parameter \"%s\", found \"%s\"", name.c_str(),
                               pname.c_str()));
    if (r != m.rows || cc != m.cols)
      throw FormatError(strfmt("weights: parameter \"%s\" shape %dx%d conflicts with config %dx%d",
                               name.c_str(), r, cc, m.rows, m.cols));
    for (auto& v : m.data) {
      if (!(in >> v)) throw FormatError(strfmt("weights: truncated in parameter \"%s\"",
                                               name.c_str()));
      if (!std::isfinite(v))
        throw FormatError(strfmt("weights: non-finite value in parameter \"%s\"", name.c_str()));
    }
  });
  if (!(in >> word) || word != "end") throw FormatError("weights: missing end marker");
  return w;
}

inline void save_weights_file(const ModelWeights& w, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("weights: cannot write " + path);
  f << save_weights(w);
}

inline ModelWeights load_weights_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("weights: cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_weights(ss.str());
}

// Fingerprint used in reports so an explanation is never detached from the
// weights that produced it.
inline std::string weights_fingerprint(const ModelWeights& w) {
  return strfmt("%016llx", static_cast<unsigned long long>(fnv1a64(save_weights(w))));
}

}  // namespace layerlens
