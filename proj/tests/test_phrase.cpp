#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "layerlens/data.hpp"
#include "layerlens/phrase.hpp"

using namespace layerlens;

namespace {

const char* kS1 =
    "neither parker nor donovan is a typical romantic lead , but they bring a fresh , quirky "
    "charm to the formula .";
const char* kS2 = "Read the book, forget the movie!";
const char* kS3 =
    "Oh great, another email. I just love waiting an extra week for something I ordered two "
    "months ago.";

const PosLexicon& lexicon() {
  static const PosLexicon lex = load_lexicon_file(default_data_dir() + "/pos_lexicon.txt");
  return lex;
}

std::vector<std::string> phrase_texts(const PhraseSet& set) {
  std::vector<std::string> texts;
  for (const auto& p : set.phrases) texts.push_back(p.text);
  return texts;
}

bool contains_text(const PhraseSet& set, const std::string& text) {
  const auto texts = phrase_texts(set);
  return std::find(texts.begin(), texts.end(), text) != texts.end();
}

}  // namespace

TEST_CASE("pos_tag: lexicon hit, suffix rules, noun default") {
  const auto tags = pos_tag({"the", "parker", "waiting", "ordered", "softly"}, lexicon());
  CHECK(tags[0].tag == PosTag::DET);
  CHECK(tags[1].tag == PosTag::NOUN);
  CHECK(tags[2].tag == PosTag::VERB);
  CHECK(tags[3].tag == PosTag::VERB);
  CHECK(tags[4].tag == PosTag::ADV);
}

TEST_CASE("chunker extracts exactly the four S2 phrases") {
  const auto words = split_words(kS2);
  const auto spans = chunk(pos_tag(words, lexicon()));
  REQUIRE(spans.size() == 4);
  auto find = [&](const std::string& text) -> const PhraseSpan* {
    for (const auto& s : spans)
      if (s.text == text) return &s;
    return nullptr;
  };
  const PhraseSpan* read_book = find("read the book");
  const PhraseSpan* the_book = find("the book");
  const PhraseSpan* forget_movie = find("forget the movie");
  const PhraseSpan* the_movie = find("the movie");
  REQUIRE(read_book != nullptr);
  REQUIRE(the_book != nullptr);
  REQUIRE(forget_movie != nullptr);
  REQUIRE(the_movie != nullptr);
  CHECK(read_book->kind == PhraseKind::VP);
  CHECK(the_book->kind == PhraseKind::NP);
  CHECK(forget_movie->kind == PhraseKind::VP);
  CHECK(the_movie->kind == PhraseKind::NP);
}

TEST_CASE("S1 extraction includes the six named phrases") {
  PhraseSet set = extract_phrases(kS1, lexicon());
  CHECK(contains_text(set, "neither parker"));
  CHECK(contains_text(set, "a typical romantic lead"));
  CHECK(contains_text(set, "they"));
  CHECK(contains_text(set, "a fresh, quirky charm"));
  CHECK(contains_text(set, "to the formula"));
  CHECK(contains_text(set, "the formula"));
  CHECK(set.phrases[0].kind == PhraseKind::SENT);
  // 12 players keeps exact enumeration open for the demo pipeline
  CHECK(set.size() == 12);
}

TEST_CASE("a lone pronoun chunks as a single NP") {
  const auto spans = chunk(pos_tag({"they"}, lexicon()));
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].kind == PhraseKind::NP);
  CHECK(spans[0].text == "they");
}

TEST_CASE("S3 stays within the exact enumeration budget") {
  PhraseSet set = extract_phrases(kS3, lexicon());
  CHECK(set.size() >= 5);
  CHECK(set.size() <= 12);
}

TEST_CASE("build_phrase_set reproduces the Figure 8a index mapping") {
  std::vector<PhraseSpan> spans = {
      {PhraseKind::NP, 1, 2, ""},   // the book
      {PhraseKind::VP, 4, 6, ""},   // forget the movie
      {PhraseKind::NP, 5, 6, ""},   // the movie
  };
  PhraseSet set = build_phrase_set(kS2, spans);
  REQUIRE(set.size() == 4);
  CHECK(set.phrases[0].kind == PhraseKind::SENT);
  CHECK(set.phrases[0].text == "read the book, forget the movie!");
  CHECK(set.phrases[1].text == "the book");
  CHECK(set.phrases[2].text == "forget the movie");
  CHECK(set.phrases[3].text == "the movie");
}

TEST_CASE("build_phrase_set with no spans yields just the sentence") {
  PhraseSet set = build_phrase_set("the book", {});
  REQUIRE(set.size() == 1);
  CHECK(set.phrases[0].kind == PhraseKind::SENT);
  CHECK(set.phrases[0].word_start == 0);
  CHECK(set.phrases[0].word_end == 1);
}

TEST_CASE("build_phrase_set removes duplicate spans") {
  std::vector<PhraseSpan> spans = {
      {PhraseKind::NP, 1, 2, ""},
      {PhraseKind::NP, 1, 2, ""},
  };
  PhraseSet set = build_phrase_set(kS2, spans);
  CHECK(set.size() == 2);
}

TEST_CASE("build_phrase_set rejects out-of-bounds spans") {
  CHECK_THROWS_AS(build_phrase_set("the book", {{PhraseKind::NP, 0, 5, ""}}), BoundsError);
  CHECK_THROWS_AS(build_phrase_set("the book", {{PhraseKind::NP, 1, 0, ""}}), BoundsError);
}

TEST_CASE("phrase ordering is stable under permutation of the span list") {
  const auto words = split_words(kS1);
  auto spans = chunk(pos_tag(words, lexicon()));
  PhraseSet reference = build_phrase_set(kS1, spans);
  std::mt19937 shuffle_rng(7);
  for (int round = 0; round < 10; ++round) {
    std::shuffle(spans.begin(), spans.end(), shuffle_rng);
    PhraseSet permuted = build_phrase_set(kS1, spans);
    CHECK(phrase_texts(permuted) == phrase_texts(reference));
  }
}

TEST_CASE("external phrase document matches the built-in path") {
  const std::string doc = R"({
    "sentence": "Read the book, forget the movie!",
    "phrases": [
      {"kind": "VP", "word_start": 0, "word_end": 2},
      {"kind": "NP", "word_start": 1, "word_end": 2},
      {"kind": "VP", "word_start": 4, "word_end": 6},
      {"kind": "NP", "word_start": 5, "word_end": 6}
    ]
  })";
  PhraseSet external = load_external_phrases(doc);
  PhraseSet builtin = extract_phrases(kS2, lexicon());
  REQUIRE(external.size() == builtin.size());
  for (int i = 0; i < external.size(); ++i) {
    CHECK(external.phrases[i].word_start == builtin.phrases[i].word_start);
    CHECK(external.phrases[i].word_end == builtin.phrases[i].word_end);
    CHECK(external.phrases[i].text == builtin.phrases[i].text);
  }
}

TEST_CASE("external phrase document validation") {
  CHECK_THROWS_AS(load_external_phrases("{ not json"), ParseError);
  CHECK_THROWS_AS(load_external_phrases(R"({"phrases": []})"), ParseError);
  CHECK_THROWS_AS(
      load_external_phrases(
          R"({"sentence": "the book", "phrases": [{"kind": "NP", "word_start": 1, "word_end": 0}]})"),
      BoundsError);
  CHECK_THROWS_AS(
      load_external_phrases(
          R"({"sentence": "the book", "phrases": [{"kind": "XX", "word_start": 0, "word_end": 1}]})"),
      ParseError);
  CHECK_THROWS_AS(
      load_external_phrases(R"({"sentence": "the book", "phrases": [{"word_start": 0}]})"),
      ParseError);
}
