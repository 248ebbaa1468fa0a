#pragma once

#include <string>
#include <vector>

#include "layerlens/common.hpp"
#include "layerlens/model.hpp"
#include "layerlens/phrase.hpp"
#include "layerlens/shap.hpp"

namespace layerlens {

enum class LayerSelection { LAST, MEAN_ALL };
enum class HeadReduction { MEAN, MAX };

struct AttentionAggregationConfig {
  LayerSelection layer_selection = LayerSelection::LAST;
  HeadReduction head_reduction = HeadReduction::MEAN;
};

inline const char* to_string(LayerSelection s) {
  return s == LayerSelection::LAST ? "last" : "mean_all";
}
inline const char* to_string(HeadReduction r) {
  return r == HeadReduction::MEAN ? "mean" : "max";
}

// M x M phrase-to-phrase attention scores plus the index mapping labels.
struct PhraseAttentionMatrix {
  Matrix scores;
  std::vector<std::string> phrase_labels;

  int size() const { return scores.rows; }
};

// score[p][q] = mean over source tokens of p of the attention mass they send
// into q's tokens, after reducing heads (and optionally layers) of the trace.
// CLS/SEP stay in the softmax normalization but belong to no phrase.
inline PhraseAttentionMatrix phrase_attention(const ForwardTrace& trace, const PhraseSet& phrases,
                                              const TokenSequence& seq,
                                              const AttentionAggregationConfig& config = {}) {
  const int T = seq.length();
  if (trace.embedding_out.rows != T)
    throw InputError(strfmt("phrase_attention: trace has %d tokens, sequence has %d",
                            trace.embedding_out.rows, T));
  if (trace.attention.empty()) throw InputError("phrase_attention: trace has no attention");

  const int n_layers = static_cast<int>(trace.attention.size());
  auto reduce_heads = [&](int layer) {
    const auto& heads = trace.attention[layer];
    Matrix r(T, T);
    if (config.head_reduction == HeadReduction::MEAN) {
      for (const Matrix& h : heads)
        for (size_t i = 0; i < r.data.size(); ++i) r.data[i] += h.data[i];
      for (auto& v : r.data) v /= static_cast<double>(heads.size());
    } else {
      r = heads[0];
      for (size_t h = 1; h < heads.size(); ++h)
        for (size_t i = 0; i < r.data.size(); ++i)
          r.data[i] = std::max(r.data[i], heads[h].data[i]);
    }
    return r;
  };

  Matrix reduced;
  if (config.layer_selection == LayerSelection::LAST) {
    reduced = reduce_heads(n_layers - 1);
  } else {
    reduced = reduce_heads(0);
    for (int l = 1; l < n_layers; ++l) {
      Matrix r = reduce_heads(l);
      for (size_t i = 0; i < reduced.data.size(); ++i) reduced.data[i] += r.data[i];
    }
    for (auto& v : reduced.data) v /= static_cast<double>(n_layers);
  }

  const auto players = phrase_players(seq, phrases);
  const int m = static_cast<int>(players.size());
  PhraseAttentionMatrix out;
  out.scores = Matrix(m, m);
  for (int p = 0; p < m; ++p) {
    const double inv = 1.0 / static_cast<double>(players[p].size());
    for (int q = 0; q < m; ++q) {
      double s = 0.0;
      for (int i : players[p])
        for (int j : players[q]) s += reduced(i, j);
      out.scores(p, q) = s * inv;
    }
  }
  out.phrase_labels.reserve(phrases.phrases.size());
  for (const auto& p : phrases.phrases) out.phrase_labels.push_back(p.text);
  return out;
}

}  // namespace layerlens
