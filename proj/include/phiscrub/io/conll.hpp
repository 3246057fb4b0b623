#pragma once

// Two-column CoNLL: "TOKEN<TAB>TAG" per line, blank line between sentences.

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "phiscrub/error.hpp"
#include "phiscrub/labels/bilou.hpp"
#include "phiscrub/taggers/corpus.hpp"

namespace phiscrub::io {

inline taggers::Corpus parse_conll(std::istream& in) {
  taggers::Corpus corpus;
  taggers::LabeledSentence current;
  std::string line;
  std::size_t no = 0;
  const auto flush = [&] {
    if (!current.words.empty()) corpus.sentences.push_back(std::move(current));
    current = {};
  };
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError("conll: expected 'TOKEN<TAB>TAG', got '" + line + "'", no);
    }
    const std::string token = line.substr(0, tab), tag = line.substr(tab + 1);
    const auto id = labels::parse_tag(tag);
    if (!id) throw DataError("conll: unknown tag '" + tag + "'", no);
    current.words.push_back(token);
    current.tags.push_back(*id);
  }
  flush();
  return corpus;
}

inline taggers::Corpus parse_conll(const std::string& content) {
  std::istringstream in(content);
  return parse_conll(in);
}

inline taggers::Corpus load_conll(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  return parse_conll(in);
}

inline void write_conll(std::ostream& out, const taggers::Corpus& corpus) {
  for (const auto& s : corpus.sentences) {
    for (std::size_t i = 0; i < s.words.size(); ++i) out << s.words[i] << '\t' << labels::tag_string(s.tags[i]) << '\n';
    out << '\n';
  }
}

inline void save_conll(const std::string& path, const taggers::Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file: " + path);
  write_conll(out, corpus);
}

}  // namespace phiscrub::io
