#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "layerlens/attention.hpp"
#include "layerlens/common.hpp"
#include "layerlens/model.hpp"
#include "layerlens/shap.hpp"

#include "json.hpp"

namespace layerlens {

constexpr const char* kReportSchema = "layerlens/1";

struct ReportPhrase {
  int index = 0;
  std::string kind;
  int word_start = 0;
  int word_end = 0;
  std::string text;
};

struct ReportLayer {
  std::string target;  // "input" | "embedding" | "encoder:N"
  double v_empty = 0.0;
  double v_full = 0.0;
  std::vector<double> values;
};

struct ReportBaseline {
  std::vector<std::string> players;
  std::vector<double> values;
  double v_empty = 0.0;
  double v_full = 0.0;
};

struct ReportAttention {
  std::string layer_selection;
  std::string head_reduction;
  Matrix scores;
};

// Machine-readable explanation: everything the charts are drawn from, plus
// the model fingerprint so results stay tied to their weights.
struct ExplanationReport {
  std::string schema = kReportSchema;
  std::string sentence;
  std::vector<std::string> tokens;
  std::vector<ReportPhrase> phrases;
  std::string class_selector;  // "log_odds_positive" | "prob_positive"
  std::string method;          // "exact" | "kernel"
  uint64_t seed = 0;
  int samples = 0;
  ModelConfig model_config;
  std::string weights_fingerprint;
  std::vector<ReportLayer> layers;
  std::vector<double> aggregated;
  std::optional<ReportBaseline> baseline;
  std::optional<ReportAttention> attention;
};

inline const char* to_string(ScalarSelector s) {
  return s == ScalarSelector::PROB_POSITIVE ? "prob_positive" : "log_odds_positive";
}
inline const char* to_string(ShapMethod m) { return m == ShapMethod::KERNEL ? "kernel" : "exact"; }

// Assembles the report skeleton from a phrase-level result; baseline and
// attention blocks are attached by the caller when produced.
inline ExplanationReport make_report(const ShapResult& result, const ModelWeights& model,
                                     const TokenSequence& seq) {
  ExplanationReport r;
  r.sentence = result.sentence;
  for (const auto& t : seq.tokens) r.tokens.push_back(t.text);
  int index = 0;
  for (const auto& p : result.phrases.phrases)
    r.phrases.push_back({index++, to_string(p.kind), p.word_start, p.word_end, p.text});
  r.class_selector = to_string(result.selector);
  r.method = to_string(result.method);
  r.seed = result.seed;
  r.samples = result.samples;
  r.model_config = model.config;
  r.weights_fingerprint = weights_fingerprint(model);
  for (const auto& layer : result.per_layer)
    r.layers.push_back({layer.target.label(), layer.v_empty, layer.v_full, layer.values});
  r.aggregated = result.aggregated;
  return r;
}

namespace detail {

inline void json_escape_into(std::string& out, const std::string& s) {
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20)
          out += strfmt("\\u%04x", c);
        else
          out.push_back(static_cast<char>(c));
    }
  }
}

inline std::string json_string(const std::string& s) {
  std::string out = "\"";
  json_escape_into(out, s);
  out.push_back('"');
  return out;
}

inline std::string json_numbers(const std::vector<double>& v) {
  std::string out = "[";
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_g17(v[i]);
  }
  out += "]";
  return out;
}

inline std::string json_strings(const std::vector<std::string>& v) {
  std::string out = "[";
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += json_string(v[i]);
  }
  out += "]";
  return out;
}

}  // namespace detail

// Canonical serialization: fixed field order, two-space indent, floats at 17
// significant digits. emit(parse(emit(r))) is byte-identical to emit(r).
inline std::string emit_document(const ExplanationReport& r) {
  const size_t m = r.phrases.size();
  if (r.schema != kReportSchema)
    throw SerializationError(strfmt("report: unknown schema \"%s\"", r.schema.c_str()));
  for (const auto& layer : r.layers)
    if (layer.values.size() != m)
      throw SerializationError(strfmt("report: layer \"%s\" has %zu values for %zu phrases",
                                      layer.target.c_str(), layer.values.size(), m));
  if (r.layers.empty()) {
    if (!r.aggregated.empty())
      throw SerializationError("report: aggregated values present without layer vectors");
  } else {
    if (r.aggregated.size() != m)
      throw SerializationError(strfmt("report: aggregated has %zu values for %zu phrases",
                                      r.aggregated.size(), m));
    std::vector<std::vector<double>> vs;
    for (const auto& layer : r.layers) vs.push_back(layer.values);
    const std::vector<double> sum = aggregate_layers(vs);
    for (size_t i = 0; i < m; ++i)
      if (sum[i] != r.aggregated[i])
        throw SerializationError(strfmt("report: aggregated[%zu]=%s is not the sum of layer "
                                        "values %s",
                                        i, format_g17(r.aggregated[i]).c_str(),
                                        format_g17(sum[i]).c_str()));
  }
  if (r.baseline && r.baseline->players.size() != r.baseline->values.size())
    throw SerializationError("report: baseline players/values length mismatch");
  if (r.attention) {
    if (r.attention->scores.rows != r.attention->scores.cols)
      throw SerializationError("report: attention matrix is not square");
    if (r.attention->scores.rows != static_cast<int>(m))
      throw SerializationError(strfmt("report: attention matrix is %dx%d for %zu phrases",
                                      r.attention->scores.rows, r.attention->scores.cols, m));
  }

  using detail::json_numbers;
  using detail::json_string;
  using detail::json_strings;
  std::string out;
  out += "{\n";
  out += "  \"schema\": " + json_string(r.schema) + ",\n";
  out += "  \"sentence\": " + json_string(r.sentence) + ",\n";
  out += "  \"tokens\": " + json_strings(r.tokens) + ",\n";
  out += "  \"phrases\": [\n";
  for (size_t i = 0; i < r.phrases.size(); ++i) {
    const auto& p = r.phrases[i];
    out += strfmt("    {\"index\": %d, \"kind\": %s, \"word_start\": %d, \"word_end\": %d, "
                  "\"text\": %s}%s\n",
                  p.index, json_string(p.kind).c_str(), p.word_start, p.word_end,
                  json_string(p.text).c_str(), i + 1 < r.phrases.size() ? "," : "");
  }
  out += "  ],\n";
  out += "  \"class_selector\": " + json_string(r.class_selector) + ",\n";
  out += "  \"method\": " + json_string(r.method) + ",\n";
  out += strfmt("  \"seed\": %llu,\n", static_cast<unsigned long long>(r.seed));
  out += strfmt("  \"samples\": %d,\n", r.samples);
  out += strfmt("  \"model\": {\"vocab_size\": %d, \"d_model\": %d, \"n_heads\": %d, "
                "\"n_layers\": %d, \"d_ff\": %d, \"max_len\": %d, \"n_classes\": %d, "
                "\"weights_fnv1a64\": %s},\n",
                r.model_config.vocab_size, r.model_config.d_model, r.model_config.n_heads,
                r.model_config.n_layers, r.model_config.d_ff, r.model_config.max_len,
                r.model_config.n_classes, json_string(r.weights_fingerprint).c_str());
  out += "  \"layers\": [\n";
  for (size_t i = 0; i < r.layers.size(); ++i) {
    const auto& l = r.layers[i];
    out += strfmt("    {\"target\": %s, \"v_empty\": %s, \"v_full\": %s, \"values\": %s}%s\n",
                  json_string(l.target).c_str(), format_g17(l.v_empty).c_str(),
                  format_g17(l.v_full).c_str(), json_numbers(l.values).c_str(),
                  i + 1 < r.layers.size() ? "," : "");
  }
  out += "  ],\n";
  out += "  \"aggregated\": " + json_numbers(r.aggregated) + ",\n";
  if (r.baseline) {
    out += "  \"baseline\": {\n";
    out += "    \"players\": " + json_strings(r.baseline->players) + ",\n";
    out += "    \"values\": " + json_numbers(r.baseline->values) + ",\n";
    out += "    \"v_empty\": " + format_g17(r.baseline->v_empty) + ",\n";
    out += "    \"v_full\": " + format_g17(r.baseline->v_full) + "\n";
    out += "  },\n";
  } else {
    out += "  \"baseline\": null,\n";
  }
  if (r.attention) {
    out += "  \"attention\": {\n";
    out += "    \"layer_selection\": " + json_string(r.attention->layer_selection) + ",\n";
    out += "    \"head_reduction\": " + json_string(r.attention->head_reduction) + ",\n";
    out += "    \"scores\": [\n";
    for (int i = 0; i < r.attention->scores.rows; ++i) {
      std::vector<double> row(r.attention->scores.row(i),
                              r.attention->scores.row(i) + r.attention->scores.cols);
      out += "      " + json_numbers(row) + (i + 1 < r.attention->scores.rows ? ",\n" : "\n");
    }
    out += "    ]\n";
    out += "  }\n";
  } else {
    out += "  \"attention\": null\n";
  }
  out += "}\n";
  return out;
}

inline ExplanationReport parse_document(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  try {
    ExplanationReport r;
    r.schema = doc.at("schema").get<std::string>();
    if (r.schema != kReportSchema)
      throw ParseError(strfmt("report: unsupported schema \"%s\"", r.schema.c_str()));
    r.sentence = doc.at("sentence").get<std::string>();
    r.tokens = doc.at("tokens").get<std::vector<std::string>>();
    for (const auto& p : doc.at("phrases"))
      r.phrases.push_back({p.at("index").get<int>(), p.at("kind").get<std::string>(),
                           p.at("word_start").get<int>(), p.at("word_end").get<int>(),
                           p.at("text").get<std::string>()});
    r.class_selector = doc.at("class_selector").get<std::string>();
    r.method = doc.at("method").get<std::string>();
    r.seed = doc.at("seed").get<uint64_t>();
    r.samples = doc.at("samples").get<int>();
    const auto& mc = doc.at("model");
    r.model_config.vocab_size = mc.at("vocab_size").get<int>();
    r.model_config.d_model = mc.at("d_model").get<int>();
    r.model_config.n_heads = mc.at("n_heads").get<int>();
    r.model_config.n_layers = mc.at("n_layers").get<int>();
    r.model_config.d_ff = mc.at("d_ff").get<int>();
    r.model_config.max_len = mc.at("max_len").get<int>();
    r.model_config.n_classes = mc.at("n_classes").get<int>();
    r.weights_fingerprint = mc.at("weights_fnv1a64").get<std::string>();
    for (const auto& l : doc.at("layers"))
      r.layers.push_back({l.at("target").get<std::string>(), l.at("v_empty").get<double>(),
                          l.at("v_full").get<double>(),
                          l.at("values").get<std::vector<double>>()});
    r.aggregated = doc.at("aggregated").get<std::vector<double>>();
    if (!doc.at("baseline").is_null()) {
      const auto& b = doc.at("baseline");
      r.baseline = ReportBaseline{b.at("players").get<std::vector<std::string>>(),
                                  b.at("values").get<std::vector<double>>(),
                                  b.at("v_empty").get<double>(), b.at("v_full").get<double>()};
    }
    if (!doc.at("attention").is_null()) {
      const auto& a = doc.at("attention");
      ReportAttention att;
      att.layer_selection = a.at("layer_selection").get<std::string>();
      att.head_reduction = a.at("head_reduction").get<std::string>();
      const auto& rows = a.at("scores");
      const int n = static_cast<int>(rows.size());
      att.scores = Matrix(n, n == 0 ? 0 : static_cast<int>(rows[0].size()));
      for (int i = 0; i < n; ++i) {
        const auto row = rows[i].get<std::vector<double>>();
        if (static_cast<int>(row.size()) != att.scores.cols)
          throw ParseError("report: ragged attention matrix");
        for (int j = 0; j < att.scores.cols; ++j) att.scores(i, j) = row[j];
      }
      r.attention = std::move(att);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

}  // namespace layerlens
