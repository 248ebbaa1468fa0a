#include <catch2/catch_amalgamated.hpp>

#include "layerlens/data.hpp"
#include "layerlens/report.hpp"
#include "layerlens/viz.hpp"

#include "json.hpp"

using namespace layerlens;

namespace {

const Vocab& vocab() {
  static const Vocab v = load_vocab_file(default_data_dir() + "/vocab.txt");
  return v;
}

const PosLexicon& lexicon() {
  static const PosLexicon lex = load_lexicon_file(default_data_dir() + "/pos_lexicon.txt");
  return lex;
}

const ModelWeights& model() {
  static const ModelWeights w = [] {
    ModelConfig c;
    c.vocab_size = vocab().size();
    return init_weights(c, 404);
  }();
  return w;
}

ExplanationReport full_report() {
  const char* s2 = "Read the book, forget the movie!";
  PhraseSet phrases = extract_phrases(s2, lexicon());
  ShapResult result = explain(model(), vocab(), phrases, ExplainerConfig{});
  TokenSequence seq = tokenize(s2, vocab());
  ExplanationReport r = make_report(result, model(), seq);
  ForwardTrace trace = forward(model(), seq.ids());
  PhraseAttentionMatrix attention = phrase_attention(trace, phrases, seq);
  r.attention = ReportAttention{"last", "mean", attention.scores};
  TokenShapResult baseline = baseline_token_shap(model(), vocab(), s2, ExplainerConfig{});
  r.baseline = ReportBaseline{baseline.players, baseline.values, baseline.v_empty,
                              baseline.v_full};
  return r;
}

}  // namespace

TEST_CASE("emit/parse/emit is byte-identical") {
  ExplanationReport r = full_report();
  const std::string doc = emit_document(r);
  ExplanationReport parsed = parse_document(doc);
  CHECK(emit_document(parsed) == doc);
  CHECK(emit_document(r) == doc);  // emission is deterministic
  CHECK(parsed.aggregated == r.aggregated);
  CHECK(parsed.weights_fingerprint == r.weights_fingerprint);
  CHECK(parsed.tokens == r.tokens);
  REQUIRE(parsed.baseline.has_value());
  CHECK(parsed.baseline->values == r.baseline->values);
  REQUIRE(parsed.attention.has_value());
  CHECK(parsed.attention->scores.data == r.attention->scores.data);
}

TEST_CASE("serialization refuses a report whose aggregation is inconsistent") {
  ExplanationReport r = full_report();
  r.aggregated[0] += 1e-9;
  CHECK_THROWS_AS(emit_document(r), SerializationError);
}

TEST_CASE("serialization refuses mismatched lengths") {
  ExplanationReport r = full_report();
  r.layers[0].values.pop_back();
  CHECK_THROWS_AS(emit_document(r), SerializationError);

  ExplanationReport r2 = full_report();
  r2.baseline->players.pop_back();
  CHECK_THROWS_AS(emit_document(r2), SerializationError);

  ExplanationReport r3 = full_report();
  r3.attention->scores = Matrix(2, 3);
  CHECK_THROWS_AS(emit_document(r3), SerializationError);
}

TEST_CASE("minimal one-phrase report carries all required fields") {
  PhraseSet phrases = extract_phrases("wonderful", lexicon());
  ShapResult result = explain(model(), vocab(), phrases, ExplainerConfig{});
  TokenSequence seq = tokenize("wonderful", vocab());
  ExplanationReport r = make_report(result, model(), seq);
  const std::string doc = emit_document(r);

  const auto j = nlohmann::json::parse(doc);
  CHECK(j.at("schema") == "layerlens/1");
  CHECK(j.at("sentence") == "wonderful");
  CHECK(j.at("tokens").size() == 3);
  CHECK(j.at("phrases").size() == 1);
  CHECK(j.contains("class_selector"));
  CHECK(j.contains("method"));
  CHECK(j.contains("seed"));
  CHECK(j.contains("samples"));
  CHECK(j.at("model").contains("weights_fnv1a64"));
  CHECK(j.at("layers").size() == 2);
  CHECK(j.at("aggregated").size() == 1);
  CHECK(j.at("baseline").is_null());
  CHECK(j.at("attention").is_null());
}

TEST_CASE("parse_document rejects malformed input") {
  CHECK_THROWS_AS(parse_document("nope"), ParseError);
  CHECK_THROWS_AS(parse_document(R"({"schema": "other/1"})"), ParseError);
  CHECK_THROWS_AS(parse_document(R"({"schema": "layerlens/1"})"), ParseError);
}

TEST_CASE("render_bars colors by sign and draws the zero line") {
  const std::string svg = render_bars({0.3, -0.2}, {"up", "down"}, "test");
  CHECK(svg.find("<line") != std::string::npos);
  CHECK(svg.find(kPositiveColor) != std::string::npos);
  CHECK(svg.find(kNegativeColor) != std::string::npos);
  CHECK(svg.find(">up<") != std::string::npos);
  CHECK(svg.find(">down<") != std::string::npos);
  CHECK(svg.find(">0.3<") != std::string::npos);
  CHECK(svg.find(">-0.2<") != std::string::npos);

  // all zeros still renders the axis, bars have zero width, zero is green
  const std::string zeros = render_bars({0.0, 0.0}, {"a", "b"}, "zeros");
  CHECK(zeros.find("<line") != std::string::npos);
  CHECK(zeros.find("width=\"0.00\"") != std::string::npos);
  CHECK(zeros.find(kPositiveColor) != std::string::npos);
  CHECK(zeros.find(kNegativeColor) == std::string::npos);
}

TEST_CASE("render_bars labels values at six significant digits") {
  const std::string svg = render_bars({0.123456789}, {"x"}, "t");
  CHECK(svg.find("0.123457") != std::string::npos);
}

TEST_CASE("render_bars validation") {
  CHECK_THROWS_AS(render_bars({}, {}, "t"), InputError);
  CHECK_THROWS_AS(render_bars({1.0}, {"a", "b"}, "t"), InputError);
  CHECK_THROWS_AS(render_bars({std::nan("")}, {"a"}, "t"), InputError);
}

TEST_CASE("render_heatmap normalizes to the matrix maximum") {
  PhraseAttentionMatrix one;
  one.scores = Matrix(1, 1);
  one.scores(0, 0) = 1.0;
  one.phrase_labels = {"whole sentence"};
  const std::string svg = render_heatmap(one);
  CHECK(svg.find("#08306b") != std::string::npos);  // full intensity cell
  CHECK(svg.find("Phrase 0: whole sentence") != std::string::npos);

  PhraseAttentionMatrix diag;
  diag.scores = Matrix(3, 3);
  for (int i = 0; i < 3; ++i) diag.scores(i, i) = 2.0;
  diag.phrase_labels = {"a", "b", "c"};
  const std::string grid = render_heatmap(diag);
  // three full-intensity diagonal cells, off-diagonal at the light end
  size_t dark = 0, pos = 0;
  while ((pos = grid.find("#08306b", pos)) != std::string::npos) {
    ++dark;
    pos += 1;
  }
  CHECK(dark == 3);
  CHECK(grid.find("#f7fbff") != std::string::npos);
  CHECK(grid.find("Phrase Index Mapping") != std::string::npos);

  PhraseAttentionMatrix empty;
  CHECK_THROWS_AS(render_heatmap(empty), InputError);
}

TEST_CASE("render_html embeds the chart sections") {
  const std::string svg = render_bars({0.5}, {"x"}, "chart");
  const std::string html = render_html("a sentence", {{"Chart", svg}});
  CHECK(html.find("<!DOCTYPE html>") == 0);
  CHECK(html.find("a sentence") != std::string::npos);
  CHECK(html.find(svg) != std::string::npos);
}
