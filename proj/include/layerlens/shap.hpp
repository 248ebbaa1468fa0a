#pragma once

#include <algorithm>
#include <bit>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "layerlens/common.hpp"
#include "layerlens/model.hpp"
#include "layerlens/phrase.hpp"
#include "layerlens/tokenizer.hpp"

namespace layerlens {

// Intervention point of a value function: token ids, embedding rows, or the
// hidden state after encoder block `layer`.
struct LayerTarget {
  enum class Kind { INPUT, EMBEDDING, ENCODER };
  Kind kind = Kind::EMBEDDING;
  int layer = -1;  // meaningful for ENCODER only

  static LayerTarget input() { return {Kind::INPUT, -1}; }
  static LayerTarget embedding() { return {Kind::EMBEDDING, -1}; }
  static LayerTarget encoder(int l) { return {Kind::ENCODER, l}; }

  bool operator==(const LayerTarget&) const = default;

  std::string label() const {
    switch (kind) {
      case Kind::INPUT: return "input";
      case Kind::EMBEDDING: return "embedding";
      case Kind::ENCODER: return "encoder:" + std::to_string(layer);
    }
    return "embedding";
  }

  // Same identity with a filesystem-safe separator.
  std::string file_label() const {
    if (kind == Kind::ENCODER) return "encoder-" + std::to_string(layer);
    return label();
  }
};

// Deepest encoder block whose substitution still flows into the classifier.
// Substituting after the final block only rewrites rows the CLS-read
// classifier never looks at, so that target scores every phrase zero.
inline int default_encoder_layer(int n_layers) { return n_layers >= 2 ? n_layers - 2 : 0; }

// Accepts "input", "embedding", "encoder" (default block) or "encoder:N".
inline std::optional<LayerTarget> parse_layer_target(const std::string& s, int n_layers) {
  if (s == "input") return LayerTarget::input();
  if (s == "embedding") return LayerTarget::embedding();
  if (s == "encoder") return LayerTarget::encoder(default_encoder_layer(n_layers));
  const std::string prefix = "encoder:";
  if (s.rfind(prefix, 0) == 0) {
    try {
      const int l = std::stoi(s.substr(prefix.size()));
      return LayerTarget::encoder(l);
    } catch (...) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

struct Coalition {
  uint64_t bits = 0;

  static Coalition empty() { return {0}; }
  static Coalition full(int m) { return {m >= 64 ? ~0ull : (1ull << m) - 1}; }

  bool contains(int i) const { return (bits >> i) & 1ull; }
  Coalition with(int i) const { return {bits | (1ull << i)}; }
  Coalition without(int i) const { return {bits & ~(1ull << i)}; }
  int size() const { return std::popcount(bits); }

  bool operator==(const Coalition&) const = default;
};

enum class ScalarSelector { LOG_ODDS_POSITIVE, PROB_POSITIVE };
enum class ShapMethod { EXACT, KERNEL };
enum class EncoderBaseline { REFERENCE_FORWARD, ZERO };

struct ExplainerConfig {
  int exact_threshold = 12;   // max M for full enumeration
  int kernel_samples = 2048;  // coalition samples when enumeration is off
  double ridge = 1e-6;
  uint64_t seed = 42;
  std::vector<LayerTarget> layer_targets;  // empty -> [embedding, encoder:last]
  ShapMethod method = ShapMethod::EXACT;
  ScalarSelector selector = ScalarSelector::LOG_ODDS_POSITIVE;
  EncoderBaseline encoder_baseline = EncoderBaseline::REFERENCE_FORWARD;
  bool memoize = true;

  void validate() const {
    if (exact_threshold < 0 || exact_threshold > 20)
      throw ConfigError("explainer config: exact_threshold must be in [0, 20]");
    if (kernel_samples < 1) throw ConfigError("explainer config: kernel_samples must be >= 1");
    if (!(ridge >= 0.0)) throw ConfigError("explainer config: ridge must be >= 0");
  }

  std::vector<LayerTarget> resolved_targets(const ModelConfig& model) const {
    std::vector<LayerTarget> targets = layer_targets;
    if (targets.empty())
      targets = {LayerTarget::embedding(),
                 LayerTarget::encoder(default_encoder_layer(model.n_layers))};
    for (const auto& t : targets)
      if (t.kind == LayerTarget::Kind::ENCODER && (t.layer < 0 || t.layer >= model.n_layers))
        throw ConfigError(strfmt("layer target encoder:%d out of range [0,%d)", t.layer,
                                 model.n_layers));
    return targets;
  }
};

// A coalition game: the exact and kernel solvers only see this surface, so
// tabulated test games and model-backed value functions share one route.
class CoalitionGame {
 public:
  virtual ~CoalitionGame() = default;
  virtual int player_count() const = 0;
  virtual double value(Coalition coalition) const = 0;
};

// ---------------------------------------------------------------------------
// Model-backed value function: players own token index sets; absent players'
// tokens are PAD-masked at the configured layer target.
// ---------------------------------------------------------------------------

struct ValueFunctionOptions {
  ScalarSelector selector = ScalarSelector::LOG_ODDS_POSITIVE;
  EncoderBaseline encoder_baseline = EncoderBaseline::REFERENCE_FORWARD;
  bool memoize = true;
};

class ValueFunction : public CoalitionGame {
 public:
  ValueFunction(const ModelWeights& weights, int pad_id, TokenSequence seq,
                std::vector<std::vector<int>> players, std::vector<std::string> player_labels,
                LayerTarget target, ValueFunctionOptions options = {})
      : weights_(&weights),
        pad_id_(pad_id),
        seq_(std::move(seq)),
        players_(std::move(players)),
        player_labels_(std::move(player_labels)),
        target_(target),
        options_(options) {
    if (players_.size() > 63)
      throw CapacityError(strfmt("value function: %zu players exceed the 63-player coalition "
                                 "limit",
                                 players_.size()));
    ids_ = seq_.ids();
    maskable_.assign(ids_.size(), 0);
    for (const auto& p : players_)
      for (int t : p) maskable_[t] = 1;

    if (target_.kind == LayerTarget::Kind::EMBEDDING) {
      original_embedding_ = embed(*weights_, ids_);
      pad_rows_ = Matrix(static_cast<int>(ids_.size()), weights_->config.d_model);
      for (int t = 0; t < pad_rows_.rows; ++t)
        for (int d = 0; d < pad_rows_.cols; ++d)
          pad_rows_(t, d) =
              weights_->token_embeddings(pad_id_, d) + weights_->position_embeddings(t, d);
    } else if (target_.kind == LayerTarget::Kind::ENCODER) {
      if (target_.layer < 0 || target_.layer >= weights_->config.n_layers)
        throw ConfigError(strfmt("value function: encoder layer %d out of range", target_.layer));
      original_trace_ = forward(*weights_, ids_);
      if (options_.encoder_baseline == EncoderBaseline::REFERENCE_FORWARD) {
        std::vector<int> fully_masked = ids_;
        for (size_t t = 0; t < fully_masked.size(); ++t)
          if (maskable_[t]) fully_masked[t] = pad_id_;
        reference_trace_ = forward(*weights_, fully_masked);
      }
    }
  }

  int player_count() const override { return static_cast<int>(players_.size()); }

  const std::vector<std::string>& player_labels() const { return player_labels_; }
  const TokenSequence& sequence() const { return seq_; }
  LayerTarget target() const { return target_; }
  const std::vector<std::vector<int>>& players() const { return players_; }

  // Masked tokens = union of absent players' tokens minus union of present
  // players' tokens: a present phrase protects its tokens from overlapping
  // absent phrases. CLS/SEP and phrase-free tokens are never players' tokens.
  std::vector<uint8_t> token_mask(Coalition coalition) const {
    std::vector<uint8_t> mask(ids_.size(), 0);
    for (size_t i = 0; i < players_.size(); ++i)
      if (!coalition.contains(static_cast<int>(i)))
        for (int t : players_[i]) mask[t] = 1;
    for (size_t i = 0; i < players_.size(); ++i)
      if (coalition.contains(static_cast<int>(i)))
        for (int t : players_[i]) mask[t] = 0;
    return mask;
  }

  double value(Coalition coalition) const override {
    const std::vector<uint8_t> mask = token_mask(coalition);
    if (!options_.memoize) return evaluate_mask(mask);
    std::string key(mask.begin(), mask.end());
    {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    const double v = evaluate_mask(mask);
    {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      cache_.emplace(std::move(key), v);
    }
    return v;
  }

  size_t cache_size() const {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    return cache_.size();
  }

 private:
  double scalar_of(const std::vector<double>& logits, double prob_positive) const {
    if (options_.selector == ScalarSelector::PROB_POSITIVE) return prob_positive;
    return logits[kPositiveClass] - logits[kNegativeClass];
  }

  double evaluate_mask(const std::vector<uint8_t>& mask) const {
    switch (target_.kind) {
      case LayerTarget::Kind::INPUT: {
        std::vector<int> ids = ids_;
        for (size_t t = 0; t < ids.size(); ++t)
          if (mask[t]) ids[t] = pad_id_;
        ForwardTrace tr = forward(*weights_, ids);
        return scalar_of(tr.logits, tr.prob_positive);
      }
      case LayerTarget::Kind::EMBEDDING: {
        Matrix e = original_embedding_;
        for (int t = 0; t < e.rows; ++t)
          if (mask[t])
            for (int d = 0; d < e.cols; ++d) e(t, d) = pad_rows_(t, d);
        ForwardTrace tr = forward_from_embeddings(*weights_, e);
        return scalar_of(tr.logits, tr.prob_positive);
      }
      case LayerTarget::Kind::ENCODER: {
        Matrix h = original_trace_.hidden[target_.layer];
        for (int t = 0; t < h.rows; ++t) {
          if (!mask[t]) continue;
          for (int d = 0; d < h.cols; ++d)
            h(t, d) = options_.encoder_baseline == EncoderBaseline::ZERO
                          ? 0.0
                          : reference_trace_.hidden[target_.layer](t, d);
        }
        ClassifierOut out = forward_with_hidden_override(*weights_, target_.layer, h);
        return scalar_of(out.logits, out.prob_positive);
      }
    }
    throw Error("value function: unreachable target kind");
  }

  const ModelWeights* weights_;
  int pad_id_;
  TokenSequence seq_;
  std::vector<std::vector<int>> players_;
  std::vector<std::string> player_labels_;
  LayerTarget target_;
  ValueFunctionOptions options_;
  std::vector<int> ids_;
  std::vector<uint8_t> maskable_;
  Matrix original_embedding_;
  Matrix pad_rows_;
  ForwardTrace original_trace_;
  ForwardTrace reference_trace_;

  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::string, double> cache_;
};

// Token indices (inclusive span expanded) of each phrase, in phrase order.
inline std::vector<std::vector<int>> phrase_players(const TokenSequence& seq,
                                                    const PhraseSet& phrases) {
  std::vector<std::vector<int>> players;
  players.reserve(phrases.phrases.size());
  for (const auto& p : phrases.phrases) {
    auto [t0, t1] = tokens_for_word_range(seq, p.word_start, p.word_end);
    std::vector<int> tokens;
    for (int t = t0; t <= t1; ++t) tokens.push_back(t);
    players.push_back(std::move(tokens));
  }
  return players;
}

inline ValueFunction make_phrase_value_function(const ModelWeights& w, const Vocab& vocab,
                                                const TokenSequence& seq, const PhraseSet& phrases,
                                                LayerTarget target,
                                                ValueFunctionOptions options = {}) {
  std::vector<std::string> labels;
  labels.reserve(phrases.phrases.size());
  for (const auto& p : phrases.phrases) labels.push_back(p.text);
  return ValueFunction(w, vocab.pad_id, seq, phrase_players(seq, phrases), std::move(labels),
                       target, options);
}

// One player per non-special token; subword pieces stay separate players.
inline ValueFunction make_token_value_function(const ModelWeights& w, const Vocab& vocab,
                                               const TokenSequence& seq, LayerTarget target,
                                               ValueFunctionOptions options = {}) {
  std::vector<std::vector<int>> players;
  std::vector<std::string> labels;
  for (int t = 1; t + 1 < seq.length(); ++t) {
    players.push_back({t});
    labels.push_back(seq.tokens[t].text);
  }
  return ValueFunction(w, vocab.pad_id, seq, std::move(players), std::move(labels), target,
                       options);
}

// Sub-game of Eq-style word attribution: players are the words of one phrase,
// every other token is fixed present.
inline ValueFunction make_word_value_function(const ModelWeights& w, const Vocab& vocab,
                                              const TokenSequence& seq, const PhraseSet& phrases,
                                              int phrase_index, LayerTarget target,
                                              ValueFunctionOptions options = {}) {
  if (phrase_index < 0 || phrase_index >= phrases.size())
    throw BoundsError(strfmt("phrase index %d out of range", phrase_index));
  const PhraseSpan& p = phrases.phrases[phrase_index];
  std::vector<std::vector<int>> players;
  std::vector<std::string> labels;
  for (int wd = p.word_start; wd <= p.word_end; ++wd) {
    auto [t0, t1] = tokens_for_word_range(seq, wd, wd);
    std::vector<int> tokens;
    for (int t = t0; t <= t1; ++t) tokens.push_back(t);
    players.push_back(std::move(tokens));
    labels.push_back(seq.words[wd]);
  }
  return ValueFunction(w, vocab.pad_id, seq, std::move(players), std::move(labels), target,
                       options);
}

// Standalone form of the masking rule, for callers that do not need a model.
inline std::vector<int> token_mask_of(Coalition coalition, const PhraseSet& phrases,
                                      const TokenSequence& seq) {
  const auto players = phrase_players(seq, phrases);
  std::vector<uint8_t> mask(seq.length(), 0);
  for (size_t i = 0; i < players.size(); ++i)
    if (!coalition.contains(static_cast<int>(i)))
      for (int t : players[i]) mask[t] = 1;
  for (size_t i = 0; i < players.size(); ++i)
    if (coalition.contains(static_cast<int>(i)))
      for (int t : players[i]) mask[t] = 0;
  std::vector<int> out;
  for (size_t t = 0; t < mask.size(); ++t)
    if (mask[t]) out.push_back(static_cast<int>(t));
  return out;
}

// ---------------------------------------------------------------------------
// Exact Shapley by full enumeration
// ---------------------------------------------------------------------------

namespace detail {
inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r *= static_cast<double>(n - i + 1) / static_cast<double>(i);
  return r;
}
}  // namespace detail

// phi_i = sum over S not containing i of |S|!(M-|S|-1)!/M! * (v(S+i) - v(S)),
// with all 2^M coalition values evaluated once (and memoized by the game).
inline std::vector<double> exact_shapley(const CoalitionGame& game, int exact_threshold = 12) {
  const int m = game.player_count();
  if (m < 1) throw InputError("exact_shapley: game has no players");
  if (m > exact_threshold)
    throw CapacityError(strfmt("exact_shapley: %d players over threshold %d, use the kernel "
                               "method",
                               m, exact_threshold));
  const uint64_t n = 1ull << m;
  std::vector<double> v(n);
  for (uint64_t s = 0; s < n; ++s) v[s] = game.value({s});

  // weight by coalition size: 1 / (M * C(M-1, s))
  std::vector<double> w(m);
  for (int s = 0; s < m; ++s) w[s] = 1.0 / (m * detail::binomial(m - 1, s));

  std::vector<double> phi(m, 0.0);
  for (int i = 0; i < m; ++i) {
    const uint64_t bit = 1ull << i;
    for (uint64_t s = 0; s < n; ++s) {
      if (s & bit) continue;
      phi[i] += w[std::popcount(s)] * (v[s | bit] - v[s]);
    }
  }
  return phi;
}

// ---------------------------------------------------------------------------
// Kernel SHAP: weighted least squares over coalition indicators with the
// Shapley kernel, efficiency enforced by eliminating the last player.
// ---------------------------------------------------------------------------

struct KernelDiagnostics {
  bool enumerated = false;
  int rows = 0;            // distinct coalitions in the regression
  int samples_drawn = 0;   // 0 in enumerated mode
  double condition_estimate = 0.0;
};

struct KernelShapResult {
  std::vector<double> values;
  KernelDiagnostics diagnostics;
};

namespace detail {

// In-place lower Cholesky factor; false if the matrix is not positive
// definite.
inline bool cholesky(Matrix& a) {
  const int n = a.rows;
  for (int k = 0; k < n; ++k) {
    double d = a(k, k);
    for (int j = 0; j < k; ++j) d -= a(k, j) * a(k, j);
    if (d <= 0.0) return false;
    const double s = std::sqrt(d);
    a(k, k) = s;
    for (int i = k + 1; i < n; ++i) {
      double x = a(i, k);
      for (int j = 0; j < k; ++j) x -= a(i, j) * a(k, j);
      a(i, k) = x / s;
    }
  }
  return true;
}

inline std::vector<double> cholesky_solve(const Matrix& l, std::vector<double> b) {
  const int n = l.rows;
  for (int i = 0; i < n; ++i) {
    double x = b[i];
    for (int j = 0; j < i; ++j) x -= l(i, j) * b[j];
    b[i] = x / l(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {
    double x = b[i];
    for (int j = i + 1; j < n; ++j) x -= l(j, i) * b[j];
    b[i] = x / l(i, i);
  }
  return b;
}

}  // namespace detail

inline KernelShapResult kernel_shap(const CoalitionGame& game, const ExplainerConfig& config) {
  config.validate();
  const int m = game.player_count();
  if (m < 2) throw InputError("kernel_shap: needs at least 2 players");
  if (m > 63) throw CapacityError("kernel_shap: more than 63 players unsupported");

  const double v_empty = game.value(Coalition::empty());
  const double v_full = game.value(Coalition::full(m));
  const double span = v_full - v_empty;

  KernelDiagnostics diag;
  // distinct coalition -> accumulated regression weight, in deterministic order
  std::map<uint64_t, double> rows;

  const bool enumerate = m <= config.exact_threshold;
  if (enumerate) {
    diag.enumerated = true;
    const uint64_t full = (1ull << m) - 1;
    for (uint64_t s = 1; s < full; ++s) {
      const int size = std::popcount(s);
      const double w = static_cast<double>(m - 1) /
                       (detail::binomial(m, size) * size * (m - size));
      rows.emplace(s, w);
    }
  } else {
    if (config.kernel_samples < 2 * m)
      throw ConfigError(strfmt("kernel_shap: kernel_samples=%d below the 2M=%d minimum",
                               config.kernel_samples, 2 * m));
    // Budgeted allocation: size groups (s, M-s) in descending kernel weight
    // are fully enumerated with exact weights while the budget lasts; the
    // leftover budget samples the remaining sizes, their total regression
    // mass matched to the kernel mass they stand for.
    long long budget = config.kernel_samples;
    std::vector<char> size_enumerated(m, 0);
    for (int s = 1; s <= m / 2; ++s) {
      const int other = m - s;
      double group_count = detail::binomial(m, s);
      if (other != s) group_count *= 2.0;
      if (group_count > static_cast<double>(budget)) break;
      size_enumerated[s] = 1;
      size_enumerated[other] = 1;
      budget -= static_cast<long long>(group_count);
    }
    auto kernel_weight = [&](int s) {
      return static_cast<double>(m - 1) / (detail::binomial(m, s) * s * (m - s));
    };
    for (int s = 1; s < m; ++s) {
      if (!size_enumerated[s]) continue;
      const double w = kernel_weight(s);
      // Gosper's hack walks every mask of popcount s in increasing order.
      uint64_t mask = (1ull << s) - 1;
      const uint64_t limit = m == 64 ? ~0ull : (1ull << m) - 1;
      while (mask <= limit) {
        rows.emplace(mask, w);
        const uint64_t c = mask & (~mask + 1);
        const uint64_t r = mask + c;
        if (r > limit) break;
        mask = (((r ^ mask) >> 2) / c) | r;
      }
    }
    std::vector<int> rest;
    for (int s = 1; s < m; ++s)
      if (!size_enumerated[s]) rest.push_back(s);
    if (!rest.empty() && budget > 0) {
      double rest_mass = 0.0;
      std::vector<double> cumulative;
      for (int s : rest) {
        rest_mass += static_cast<double>(m - 1) / (s * (m - s));  // C(m,s) * w(s)
        cumulative.push_back(rest_mass);
      }
      Rng rng(config.seed);
      std::vector<int> idx(m);
      for (int i = 0; i < m; ++i) idx[i] = i;
      std::map<uint64_t, double> counts;
      for (long long draw = 0; draw < budget; ++draw) {
        const double u = rng.uniform() * rest_mass;
        size_t pick = 0;
        while (pick + 1 < rest.size() && cumulative[pick] < u) ++pick;
        const int size = rest[pick];
        uint64_t mask = 0;
        for (int j = 0; j < size; ++j) {
          const int r = j + static_cast<int>(rng.index(m - j));
          std::swap(idx[j], idx[r]);
          mask |= 1ull << idx[j];
        }
        counts[mask] += 1.0;
        ++diag.samples_drawn;
      }
      const double scale = rest_mass / static_cast<double>(budget);
      for (const auto& [mask, count] : counts) rows[mask] += count * scale;
    }
  }
  diag.rows = static_cast<int>(rows.size());

  // Eliminate player M-1: x_i = z_i - z_{M-1}, y = v(S) - v0 - z_{M-1}*(v1-v0)
  const int n = m - 1;
  Matrix a(n, n);
  std::vector<double> b(n, 0.0);
  std::vector<double> x(n);
  for (const auto& [mask, weight] : rows) {
    const double z_last = (mask >> (m - 1)) & 1ull ? 1.0 : 0.0;
    for (int i = 0; i < n; ++i) x[i] = (((mask >> i) & 1ull) ? 1.0 : 0.0) - z_last;
    const double y = game.value({mask}) - v_empty - z_last * span;
    for (int i = 0; i < n; ++i) {
      if (x[i] == 0.0) continue;
      const double wx = weight * x[i];
      for (int j = 0; j < n; ++j) a(i, j) += wx * x[j];
      b[i] += wx * y;
    }
  }

  Matrix reg = a;
  for (int i = 0; i < n; ++i) reg(i, i) += config.ridge;
  Matrix factor = reg;
  if (!detail::cholesky(factor)) {
    double mn = 0.0, mx = 0.0;
    for (int i = 0; i < n; ++i) {
      mn = i == 0 ? reg(i, i) : std::min(mn, reg(i, i));
      mx = std::max(mx, reg(i, i));
    }
    throw NumericalError(strfmt("kernel_shap: singular regression after ridge %g "
                                "(diag range [%g, %g], %d rows)",
                                config.ridge, mn, mx, diag.rows));
  }
  double dmin = factor(0, 0), dmax = factor(0, 0);
  for (int i = 1; i < n; ++i) {
    dmin = std::min(dmin, factor(i, i));
    dmax = std::max(dmax, factor(i, i));
  }
  diag.condition_estimate = (dmax / dmin) * (dmax / dmin);

  std::vector<double> phi = detail::cholesky_solve(factor, b);
  if (enumerate) {
    // Two refinement steps push the ridge bias below the exact-agreement
    // tolerance while the regularized factorization still guards pivoting.
    for (int step = 0; step < 2; ++step) {
      std::vector<double> r = b;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) r[i] -= a(i, j) * phi[j];
      std::vector<double> d = detail::cholesky_solve(factor, r);
      for (int i = 0; i < n; ++i) phi[i] += d[i];
    }
  }

  KernelShapResult result;
  result.values = std::move(phi);
  double sum = 0.0;
  for (double v : result.values) sum += v;
  result.values.push_back(span - sum);
  result.diagnostics = diag;
  return result;
}

// ---------------------------------------------------------------------------
// Word-level attribution and aggregation
// ---------------------------------------------------------------------------

// Exact Shapley over the words of one phrase with the rest of the sentence
// fixed present.
inline std::vector<double> word_level_shap(const ModelWeights& w, const Vocab& vocab,
                                           const TokenSequence& seq, const PhraseSet& phrases,
                                           int phrase_index, LayerTarget target,
                                           const ExplainerConfig& config) {
  ValueFunction vf = make_word_value_function(w, vocab, seq, phrases, phrase_index, target,
                                              {config.selector, config.encoder_baseline,
                                               config.memoize});
  return exact_shapley(vf, config.exact_threshold);
}

// Phrase score = sum of its word attributions.
inline double aggregate_phrase(const std::vector<double>& word_values) {
  double sum = 0.0;
  for (double v : word_values) sum += v;
  return sum;
}

// Elementwise sum across layer targets.
inline std::vector<double> aggregate_layers(const std::vector<std::vector<double>>& per_layer) {
  if (per_layer.empty()) return {};
  const size_t m = per_layer.front().size();
  std::vector<double> out(m, 0.0);
  for (const auto& layer : per_layer) {
    if (layer.size() != m)
      throw InputError(strfmt("aggregate_layers: vector length %zu != %zu", layer.size(), m));
    for (size_t i = 0; i < m; ++i) out[i] += layer[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end explanation
// ---------------------------------------------------------------------------

struct LayerAttribution {
  LayerTarget target;
  std::vector<double> values;
  double v_empty = 0.0;
  double v_full = 0.0;
};

struct ShapResult {
  std::string sentence;
  PhraseSet phrases;
  std::vector<LayerAttribution> per_layer;
  std::vector<double> aggregated;
  ShapMethod method = ShapMethod::EXACT;
  uint64_t seed = 0;
  int samples = 0;  // kernel sample budget; 0 under exact
  ScalarSelector selector = ScalarSelector::LOG_ODDS_POSITIVE;
};

namespace detail {

struct SolvedGame {
  std::vector<double> values;
  ShapMethod method;
};

inline SolvedGame solve_game(const ValueFunction& vf, const ExplainerConfig& config) {
  const int m = vf.player_count();
  if (config.method == ShapMethod::EXACT || m < 2)
    return {exact_shapley(vf, config.exact_threshold), ShapMethod::EXACT};
  return {kernel_shap(vf, config).values, ShapMethod::KERNEL};
}

}  // namespace detail

// Runs the phrase game at every configured layer target and sums the
// per-layer attributions into the aggregated vector.
inline ShapResult explain(const ModelWeights& model, const Vocab& vocab, const PhraseSet& phrases,
                          const ExplainerConfig& config) {
  config.validate();
  if (phrases.size() == 0) throw InputError("explain: degenerate input, no phrase players");
  TokenSequence seq = tokenize(phrases.sentence, vocab);

  ShapResult result;
  result.sentence = phrases.sentence;
  result.phrases = phrases;
  result.seed = config.seed;
  result.selector = config.selector;
  result.method = ShapMethod::EXACT;

  std::vector<std::vector<double>> per_layer_values;
  for (const LayerTarget& target : config.resolved_targets(model.config)) {
    ValueFunction vf = make_phrase_value_function(model, vocab, seq, phrases, target,
                                                  {config.selector, config.encoder_baseline,
                                                   config.memoize});
    detail::SolvedGame solved = detail::solve_game(vf, config);
    LayerAttribution attribution;
    attribution.target = target;
    attribution.values = std::move(solved.values);
    attribution.v_empty = vf.value(Coalition::empty());
    attribution.v_full = vf.value(Coalition::full(vf.player_count()));
    if (solved.method == ShapMethod::KERNEL) {
      result.method = ShapMethod::KERNEL;
      result.samples = config.kernel_samples;
    }
    per_layer_values.push_back(attribution.values);
    result.per_layer.push_back(std::move(attribution));
  }
  result.aggregated = aggregate_layers(per_layer_values);
  return result;
}

// Convenience wrapper: chunker-extracted phrases.
inline ShapResult explain_text(const ModelWeights& model, const Vocab& vocab,
                               const PosLexicon& lexicon, const std::string& text,
                               const ExplainerConfig& config) {
  return explain(model, vocab, extract_phrases(text, lexicon), config);
}

// Whole-model token-level baseline: players are individual non-special
// tokens (subword pieces stay separate), INPUT-target value function.
struct TokenShapResult {
  std::string sentence;
  std::vector<std::string> players;  // token texts
  std::vector<double> values;
  double v_empty = 0.0;
  double v_full = 0.0;
  ShapMethod method = ShapMethod::EXACT;
  uint64_t seed = 0;
  int samples = 0;
  ScalarSelector selector = ScalarSelector::LOG_ODDS_POSITIVE;
};

inline TokenShapResult baseline_token_shap(const ModelWeights& model, const Vocab& vocab,
                                           const std::string& text,
                                           const ExplainerConfig& config) {
  config.validate();
  TokenSequence seq = tokenize(text, vocab);
  ValueFunction vf = make_token_value_function(model, vocab, seq, LayerTarget::input(),
                                               {config.selector, config.encoder_baseline,
                                                config.memoize});
  if (vf.player_count() == 0) throw InputError("baseline: degenerate input, no token players");
  detail::SolvedGame solved = detail::solve_game(vf, config);

  TokenShapResult result;
  result.sentence = text;
  result.players = vf.player_labels();
  result.values = std::move(solved.values);
  result.v_empty = vf.value(Coalition::empty());
  result.v_full = vf.value(Coalition::full(vf.player_count()));
  result.method = solved.method;
  result.seed = config.seed;
  result.samples = solved.method == ShapMethod::KERNEL ? config.kernel_samples : 0;
  result.selector = config.selector;
  return result;
}

}  // namespace layerlens
