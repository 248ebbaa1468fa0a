#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "layerlens/common.hpp"
#include "layerlens/model.hpp"
#include "layerlens/tokenizer.hpp"

#ifndef LAYERLENS_DATA_DIR
#define LAYERLENS_DATA_DIR "data"
#endif

namespace layerlens {

// Bundled asset lookup order: $LAYERLENS_DATA, ./data relative to the working
// directory, then the checkout's data directory baked in at configure time.
inline std::string default_data_dir() {
  if (const char* env = std::getenv("LAYERLENS_DATA")) return env;
  std::error_code ec;
  if (std::filesystem::exists("data/vocab.txt", ec)) return "data";
  return LAYERLENS_DATA_DIR;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct LabeledSentence {
  std::string text;
  int label = 0;
};

// Corpus format: one "label<TAB>sentence" per line, label in {pos, neg}.
inline std::vector<LabeledSentence> load_corpus(const std::string& source) {
  std::vector<LabeledSentence> corpus;
  std::istringstream in(source);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(strfmt("corpus: line %d has no tab separator", line_no));
    const std::string label = line.substr(0, tab);
    const std::string text = line.substr(tab + 1);
    int y;
    if (label == "pos") {
      y = kPositiveClass;
    } else if (label == "neg") {
      y = kNegativeClass;
    } else {
      throw ParseError(strfmt("corpus: line %d has label \"%s\", expected pos or neg", line_no,
                              label.c_str()));
    }
    if (text.empty()) throw ParseError(strfmt("corpus: line %d has empty sentence", line_no));
    corpus.push_back({text, y});
  }
  if (corpus.empty()) throw InputError("corpus: no sentences");
  return corpus;
}

inline std::vector<LabeledSentence> load_corpus_file(const std::string& path) {
  return load_corpus(read_text_file(path));
}

inline std::vector<TrainExample> corpus_to_examples(const std::vector<LabeledSentence>& corpus,
                                                    const Vocab& vocab) {
  std::vector<TrainExample> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back({tokenize(s.text, vocab).ids(), s.label});
  return out;
}

}  // namespace layerlens
