#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "layerlens/common.hpp"

namespace layerlens {

constexpr const char* kPadToken = "[PAD]";
constexpr const char* kUnkToken = "[UNK]";
constexpr const char* kClsToken = "[CLS]";
constexpr const char* kSepToken = "[SEP]";

// WordPiece-style vocabulary. Ids are dense: the id of an entry is its
// zero-based line number in the source file.
struct Vocab {
  std::unordered_map<std::string, int> entries;
  std::vector<std::string> id_to_text;
  int pad_id = -1;
  int unk_id = -1;
  int cls_id = -1;
  int sep_id = -1;
  std::string continuation_prefix = "##";

  int size() const { return static_cast<int>(id_to_text.size()); }

  bool contains(const std::string& piece) const { return entries.count(piece) != 0; }

  int id_of(const std::string& piece) const {
    auto it = entries.find(piece);
    return it == entries.end() ? -1 : it->second;
  }
};

struct Token {
  int id = -1;
  std::string text;    // surface form as it covers the input (## prefix kept)
  int word_index = -1; // -1 for CLS/SEP
  bool is_continuation = false;
};

struct TokenSequence {
  std::vector<Token> tokens;                     // first = CLS, last = SEP
  std::vector<std::pair<int, int>> word_spans;   // per word: inclusive token range
  std::vector<std::string> words;                // lowercased, punctuation-split

  int length() const { return static_cast<int>(tokens.size()); }
  int word_count() const { return static_cast<int>(words.size()); }

  std::vector<int> ids() const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.id);
    return out;
  }
};

// One token per line, id = line number. The four special tokens must be
// present; duplicates are rejected.
inline Vocab load_vocab(const std::string& source) {
  Vocab v;
  std::string line;
  std::istringstream in(source);
  int line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (in.peek() == EOF) break;  // trailing newline
      throw ConfigError(strfmt("vocab: empty token at line %d", line_no + 1));
    }
    if (v.entries.count(line))
      throw DuplicateEntryError(strfmt("vocab: duplicate entry \"%s\" at line %d", line.c_str(), line_no + 1));
    v.entries.emplace(line, line_no);
    v.id_to_text.push_back(line);
    ++line_no;
  }
  auto require = [&](const char* tok) {
    auto it = v.entries.find(tok);
    if (it == v.entries.end())
      throw ConfigError(strfmt("vocab: missing special token %s", tok));
    return it->second;
  };
  v.pad_id = require(kPadToken);
  v.unk_id = require(kUnkToken);
  v.cls_id = require(kClsToken);
  v.sep_id = require(kSepToken);
  return v;
}

inline Vocab load_vocab_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("vocab: cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_vocab(ss.str());
}

namespace detail {
inline bool is_ascii_punct(unsigned char c) { return std::ispunct(c) != 0; }
inline char ascii_lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}
}  // namespace detail

// Lowercase and split on whitespace; every punctuation mark becomes its own
// single-character word (commas inside phrases stay addressable).
inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (detail::is_ascii_punct(c)) {
      flush();
      words.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(detail::ascii_lower(c));
    }
  }
  flush();
  return words;
}

// Greedy longest-match WordPiece decomposition. An unmatched residue becomes
// a single UNK-id token whose text keeps the surface form, so concatenating
// token texts still reconstructs the word.
inline TokenSequence tokenize(const std::string& text, const Vocab& vocab) {
  TokenSequence seq;
  seq.words = split_words(text);
  if (seq.words.empty()) throw InputError("tokenize: empty input text");

  seq.tokens.push_back({vocab.cls_id, kClsToken, -1, false});
  for (int w = 0; w < static_cast<int>(seq.words.size()); ++w) {
    const std::string& word = seq.words[w];
    const int first = seq.length();
    size_t start = 0;
    while (start < word.size()) {
      size_t end = word.size();
      std::string matched;
      while (end > start) {
        std::string piece = word.substr(start, end - start);
        if (start > 0) piece = vocab.continuation_prefix + piece;
        if (vocab.contains(piece)) {
          matched = std::move(piece);
          break;
        }
        --end;
      }
      if (matched.empty()) {
        // Unmatched residue -> UNK for the rest of the word.
        std::string surface = word.substr(start);
        if (start > 0) surface = vocab.continuation_prefix + surface;
        seq.tokens.push_back({vocab.unk_id, std::move(surface), w, start > 0});
        break;
      }
      seq.tokens.push_back({vocab.id_of(matched), std::move(matched), w, start > 0});
      start = end;
    }
    seq.word_spans.emplace_back(first, seq.length() - 1);
  }
  seq.tokens.push_back({vocab.sep_id, kSepToken, -1, false});
  return seq;
}

// Projects an inclusive word range onto the contiguous token range it covers.
inline std::pair<int, int> tokens_for_word_range(const TokenSequence& seq, int word_first,
                                                 int word_last) {
  if (word_first < 0 || word_last < word_first || word_last >= seq.word_count())
    throw BoundsError(strfmt("word range (%d,%d) out of bounds for %d words", word_first,
                             word_last, seq.word_count()));
  return {seq.word_spans[word_first].first, seq.word_spans[word_last].second};
}

}  // namespace layerlens
