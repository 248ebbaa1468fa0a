#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "layerlens/common.hpp"
#include "layerlens/tokenizer.hpp"

#include "json.hpp"

namespace layerlens {

enum class PosTag { DET, ADJ, NOUN, VERB, ADV, PREP, PRON, CONJ, INTJ, PUNCT, OTHER };

enum class PhraseKind { SENT, NP, VP, ADJP, PP, CLAUSE };

inline const char* to_string(PosTag t) {
  switch (t) {
    case PosTag::DET: return "DET";
    case PosTag::ADJ: return "ADJ";
    case PosTag::NOUN: return "NOUN";
    case PosTag::VERB: return "VERB";
    case PosTag::ADV: return "ADV";
    case PosTag::PREP: return "PREP";
    case PosTag::PRON: return "PRON";
    case PosTag::CONJ: return "CONJ";
    case PosTag::INTJ: return "INTJ";
    case PosTag::PUNCT: return "PUNCT";
    case PosTag::OTHER: return "OTHER";
  }
  return "OTHER";
}

inline const char* to_string(PhraseKind k) {
  switch (k) {
    case PhraseKind::SENT: return "SENT";
    case PhraseKind::NP: return "NP";
    case PhraseKind::VP: return "VP";
    case PhraseKind::ADJP: return "ADJP";
    case PhraseKind::PP: return "PP";
    case PhraseKind::CLAUSE: return "CLAUSE";
  }
  return "SENT";
}

inline std::optional<PosTag> pos_tag_from_string(const std::string& s) {
  static const std::unordered_map<std::string, PosTag> map = {
      {"DET", PosTag::DET},   {"ADJ", PosTag::ADJ},   {"NOUN", PosTag::NOUN},
      {"VERB", PosTag::VERB}, {"ADV", PosTag::ADV},   {"PREP", PosTag::PREP},
      {"PRON", PosTag::PRON}, {"CONJ", PosTag::CONJ}, {"INTJ", PosTag::INTJ},
      {"PUNCT", PosTag::PUNCT}, {"OTHER", PosTag::OTHER}};
  auto it = map.find(s);
  if (it == map.end()) return std::nullopt;
  return it->second;
}

inline std::optional<PhraseKind> phrase_kind_from_string(const std::string& s) {
  static const std::unordered_map<std::string, PhraseKind> map = {
      {"SENT", PhraseKind::SENT}, {"NP", PhraseKind::NP},   {"VP", PhraseKind::VP},
      {"ADJP", PhraseKind::ADJP}, {"PP", PhraseKind::PP},   {"CLAUSE", PhraseKind::CLAUSE}};
  auto it = map.find(s);
  if (it == map.end()) return std::nullopt;
  return it->second;
}

struct TaggedWord {
  std::string word;
  PosTag tag = PosTag::OTHER;
};

struct PhraseSpan {
  PhraseKind kind = PhraseKind::NP;
  int word_start = 0;
  int word_end = 0;  // inclusive
  std::string text;

  int length() const { return word_end - word_start + 1; }
};

// Players of the coalition game. Index 0 is always the whole sentence.
struct PhraseSet {
  std::vector<PhraseSpan> phrases;
  std::string sentence;

  int size() const { return static_cast<int>(phrases.size()); }
};

using PosLexicon = std::unordered_map<std::string, PosTag>;

// Lexicon file: one "word TAG" pair per line, # starts a comment.
inline PosLexicon load_lexicon(const std::string& source) {
  PosLexicon lex;
  std::istringstream in(source);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string word, tag;
    if (!(ls >> word >> tag))
      throw ConfigError(strfmt("lexicon: malformed line %d: \"%s\"", line_no, line.c_str()));
    auto parsed = pos_tag_from_string(tag);
    if (!parsed)
      throw ConfigError(strfmt("lexicon: unknown tag \"%s\" at line %d", tag.c_str(), line_no));
    lex[word] = *parsed;
  }
  return lex;
}

inline PosLexicon load_lexicon_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("lexicon: cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_lexicon(ss.str());
}

namespace detail {
inline bool ends_with(const std::string& s, const char* suffix) {
  const size_t n = std::char_traits<char>::length(suffix);
  return s.size() > n && s.compare(s.size() - n, n, suffix) == 0;
}
}  // namespace detail

// Lexicon hit wins; otherwise suffix rules, otherwise NOUN. Total function.
inline std::vector<TaggedWord> pos_tag(const std::vector<std::string>& words,
                                       const PosLexicon& lexicon) {
  std::vector<TaggedWord> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    PosTag tag;
    auto it = lexicon.find(w);
    if (it != lexicon.end()) {
      tag = it->second;
    } else if (detail::ends_with(w, "ing") || detail::ends_with(w, "ed")) {
      tag = PosTag::VERB;
    } else if (detail::ends_with(w, "ly")) {
      tag = PosTag::ADV;
    } else {
      tag = PosTag::NOUN;
    }
    out.push_back({w, tag});
  }
  return out;
}

// Words joined with single spaces, except that no space precedes a
// punctuation word ("a fresh , quirky charm" -> "a fresh, quirky charm").
inline std::string join_words(const std::vector<std::string>& words, int first, int last) {
  std::string out;
  for (int i = first; i <= last; ++i) {
    const std::string& w = words[i];
    const bool punct = w.size() == 1 && detail::is_ascii_punct(static_cast<unsigned char>(w[0]));
    if (!out.empty() && !punct) out.push_back(' ');
    out += w;
  }
  return out;
}

namespace chunker {

// All matchers return the inclusive end index of the match, or nullopt.

inline bool tag_at(const std::vector<TaggedWord>& t, int i, PosTag tag) {
  return i < static_cast<int>(t.size()) && t[i].tag == tag;
}

inline bool comma_at(const std::vector<TaggedWord>& t, int i) {
  return i < static_cast<int>(t.size()) && t[i].tag == PosTag::PUNCT && t[i].word == ",";
}

// NP := DET? (ADJ ((,)? ADJ)*)? NOUN+  |  PRON
// The comma between coordinated adjectives is optional: "typical romantic"
// and "fresh , quirky" both form one adjective group.
inline std::optional<int> match_np(const std::vector<TaggedWord>& t, int i) {
  if (tag_at(t, i, PosTag::PRON)) return i;
  int j = i;
  if (tag_at(t, j, PosTag::DET)) ++j;
  if (tag_at(t, j, PosTag::ADJ)) {
    ++j;
    while (true) {
      if (tag_at(t, j, PosTag::ADJ)) {
        ++j;
      } else if (comma_at(t, j) && tag_at(t, j + 1, PosTag::ADJ)) {
        j += 2;
      } else {
        break;
      }
    }
  }
  if (!tag_at(t, j, PosTag::NOUN)) return std::nullopt;
  while (tag_at(t, j, PosTag::NOUN)) ++j;
  return j - 1;
}

// ADJP := ADV? ADJ+
inline std::optional<int> match_adjp(const std::vector<TaggedWord>& t, int i) {
  int j = i;
  if (tag_at(t, j, PosTag::ADV)) ++j;
  if (!tag_at(t, j, PosTag::ADJ)) return std::nullopt;
  while (tag_at(t, j, PosTag::ADJ)) ++j;
  return j - 1;
}

// PP := PREP NP
struct PpMatch {
  int end;
  int np_start;
  int np_end;
};

inline std::optional<PpMatch> match_pp(const std::vector<TaggedWord>& t, int i) {
  if (!tag_at(t, i, PosTag::PREP)) return std::nullopt;
  auto np = match_np(t, i + 1);
  if (!np) return std::nullopt;
  return PpMatch{*np, i + 1, *np};
}

// VP := VERB+ (NP | ADJP)?   The longer complement wins; ties go to NP.
struct VpMatch {
  int end;
  std::optional<std::pair<int, int>> inner_np;
};

inline std::optional<VpMatch> match_vp(const std::vector<TaggedWord>& t, int i) {
  if (!tag_at(t, i, PosTag::VERB)) return std::nullopt;
  int j = i;
  while (tag_at(t, j, PosTag::VERB)) ++j;
  VpMatch m{j - 1, std::nullopt};
  auto np = match_np(t, j);
  auto adjp = match_adjp(t, j);
  if (np && (!adjp || *np >= *adjp)) {
    m.end = *np;
    m.inner_np = {j, *np};
  } else if (adjp) {
    m.end = *adjp;
  }
  return m;
}

}  // namespace chunker

// Longest-match, left-to-right shallow parse. A clause (NP VP PP?) is emitted
// in addition to its parts; inner NPs of PP/VP are emitted as well.
inline std::vector<PhraseSpan> chunk(const std::vector<TaggedWord>& tagged) {
  using namespace chunker;
  const auto& words = tagged;
  std::vector<PhraseSpan> spans;
  std::vector<std::string> texts;
  texts.reserve(tagged.size());
  for (const auto& t : tagged) texts.push_back(t.word);

  auto emit = [&](PhraseKind kind, int a, int b) {
    spans.push_back({kind, a, b, join_words(texts, a, b)});
  };

  const int n = static_cast<int>(words.size());
  int i = 0;
  while (i < n) {
    // Gather candidate matches at i; the longest wins. Ties prefer the
    // earlier candidate (clause, then vp, pp, np, adjp).
    struct Candidate {
      int end = -1;
      int rule = -1;  // 0=CLAUSE 1=VP 2=PP 3=NP 4=ADJP
    };
    Candidate best;
    auto consider = [&](int end, int rule) {
      if (end > best.end) best = {end, rule};
    };

    std::optional<int> np = match_np(words, i);
    std::optional<VpMatch> clause_vp;
    std::optional<PpMatch> clause_pp;
    int clause_end = -1;
    if (np) {
      auto vp = match_vp(words, *np + 1);
      if (vp) {
        clause_vp = vp;
        clause_end = vp->end;
        auto pp = match_pp(words, vp->end + 1);
        if (pp) {
          clause_pp = pp;
          clause_end = pp->end;
        }
      }
    }
    if (clause_end >= 0) consider(clause_end, 0);
    auto vp = match_vp(words, i);
    if (vp) consider(vp->end, 1);
    auto pp = match_pp(words, i);
    if (pp) consider(pp->end, 2);
    if (np) consider(*np, 3);
    auto adjp = match_adjp(words, i);
    if (adjp) consider(*adjp, 4);

    if (best.end < 0) {
      ++i;
      continue;
    }

    switch (best.rule) {
      case 0: {
        emit(PhraseKind::CLAUSE, i, best.end);
        emit(PhraseKind::NP, i, *np);
        emit(PhraseKind::VP, *np + 1, clause_vp->end);
        if (clause_vp->inner_np)
          emit(PhraseKind::NP, clause_vp->inner_np->first, clause_vp->inner_np->second);
        if (clause_pp) {
          emit(PhraseKind::PP, clause_vp->end + 1, clause_pp->end);
          emit(PhraseKind::NP, clause_pp->np_start, clause_pp->np_end);
        }
        break;
      }
      case 1: {
        emit(PhraseKind::VP, i, vp->end);
        if (vp->inner_np) emit(PhraseKind::NP, vp->inner_np->first, vp->inner_np->second);
        break;
      }
      case 2: {
        emit(PhraseKind::PP, i, pp->end);
        emit(PhraseKind::NP, pp->np_start, pp->np_end);
        break;
      }
      case 3:
        emit(PhraseKind::NP, i, *np);
        break;
      case 4:
        emit(PhraseKind::ADJP, i, *adjp);
        break;
    }
    i = best.end + 1;
  }
  return spans;
}

// Prepends the whole-sentence span as player 0, removes duplicate
// (start, end) pairs, and sorts the rest by (start asc, length desc).
inline PhraseSet build_phrase_set(const std::string& sentence,
                                  const std::vector<PhraseSpan>& spans) {
  const std::vector<std::string> words = split_words(sentence);
  if (words.empty()) throw InputError("build_phrase_set: empty sentence");
  const int word_count = static_cast<int>(words.size());

  std::vector<PhraseSpan> cleaned;
  cleaned.reserve(spans.size());
  for (const auto& s : spans) {
    if (s.word_start < 0 || s.word_end < s.word_start || s.word_end >= word_count)
      throw BoundsError(strfmt("phrase span (%d,%d) out of bounds for %d words", s.word_start,
                               s.word_end, word_count));
    PhraseSpan copy = s;
    copy.text = join_words(words, s.word_start, s.word_end);
    cleaned.push_back(std::move(copy));
  }

  std::sort(cleaned.begin(), cleaned.end(), [](const PhraseSpan& a, const PhraseSpan& b) {
    if (a.word_start != b.word_start) return a.word_start < b.word_start;
    if (a.length() != b.length()) return a.length() > b.length();
    return static_cast<int>(a.kind) < static_cast<int>(b.kind);
  });
  cleaned.erase(std::unique(cleaned.begin(), cleaned.end(),
                            [](const PhraseSpan& a, const PhraseSpan& b) {
                              return a.word_start == b.word_start && a.word_end == b.word_end;
                            }),
                cleaned.end());

  PhraseSet set;
  set.sentence = sentence;
  PhraseSpan sent{PhraseKind::SENT, 0, word_count - 1, join_words(words, 0, word_count - 1)};
  set.phrases.push_back(std::move(sent));
  for (auto& s : cleaned) {
    if (s.word_start == 0 && s.word_end == word_count - 1) continue;  // covered by player 0
    set.phrases.push_back(std::move(s));
  }
  return set;
}

// Built-in extraction path: split, tag, chunk, assemble.
inline PhraseSet extract_phrases(const std::string& sentence, const PosLexicon& lexicon) {
  const auto words = split_words(sentence);
  if (words.empty()) throw InputError("extract_phrases: empty sentence");
  return build_phrase_set(sentence, chunk(pos_tag(words, lexicon)));
}

// External span document: {"sentence": "...", "phrases": [{"kind": "NP",
// "word_start": 1, "word_end": 2}, ...]}. Bypasses the built-in chunker.
inline PhraseSet load_external_phrases(const std::string& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(source);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("phrase document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("sentence") || !doc["sentence"].is_string())
    throw ParseError("phrase document: missing string field \"sentence\"");
  if (!doc.contains("phrases") || !doc["phrases"].is_array())
    throw ParseError("phrase document: missing array field \"phrases\"");

  std::vector<PhraseSpan> spans;
  int index = 0;
  for (const auto& p : doc["phrases"]) {
    auto field = [&](const char* name) -> const nlohmann::json& {
      if (!p.is_object() || !p.contains(name))
        throw ParseError(strfmt("phrase document: phrases[%d] missing field \"%s\"", index, name));
      return p[name];
    };
    const auto& kind_f = field("kind");
    const auto& start_f = field("word_start");
    const auto& end_f = field("word_end");
    if (!kind_f.is_string() || !start_f.is_number_integer() || !end_f.is_number_integer())
      throw ParseError(strfmt("phrase document: phrases[%d] has wrong field types", index));
    auto kind = phrase_kind_from_string(kind_f.get<std::string>());
    if (!kind)
      throw ParseError(strfmt("phrase document: phrases[%d] unknown kind \"%s\"", index,
                              kind_f.get<std::string>().c_str()));
    spans.push_back({*kind, start_f.get<int>(), end_f.get<int>(), ""});
    ++index;
  }
  return build_phrase_set(doc["sentence"].get<std::string>(), spans);
}

inline PhraseSet load_external_phrases_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("phrase document: cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_external_phrases(ss.str());
}

}  // namespace layerlens
