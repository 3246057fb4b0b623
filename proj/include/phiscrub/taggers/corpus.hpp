#pragma once

// Labeled sentences, equal-length batching and segment-level scoring.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "phiscrub/error.hpp"
#include "phiscrub/labels/bilou.hpp"

namespace phiscrub::taggers {

using labels::TagSequence;

struct LabeledSentence {
  std::vector<std::string> words;
  TagSequence tags;
};

struct Corpus {
  std::vector<LabeledSentence> sentences;

  std::size_t size() const noexcept { return sentences.size(); }
  bool empty() const noexcept { return sentences.empty(); }
  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.words.size();
    return n;
  }
};

inline void validate_corpus(const Corpus& c) {
  if (c.empty()) throw InvalidArgument("corpus is empty");
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& s = c.sentences[i];
    if (s.words.empty()) throw DataError("sentence " + std::to_string(i) + " is empty");
    if (s.words.size() != s.tags.size()) {
      throw DataError("sentence " + std::to_string(i) + ": token/tag count mismatch");
    }
    for (auto t : s.tags) {
      if (t >= labels::kNumTags) throw DataError("sentence " + std::to_string(i) + ": tag id out of range");
    }
  }
}

// Sentences of one length packed time-major: words[t * batch + b].
struct SentenceBatch {
  std::size_t length = 0;
  std::size_t batch = 0;
  std::vector<std::string> words;

  std::size_t rows() const noexcept { return length * batch; }
};

inline SentenceBatch pack_batch(const std::vector<const std::vector<std::string>*>& sentences) {
  SentenceBatch sb;
  if (sentences.empty()) throw InvalidArgument("pack_batch: no sentences");
  sb.length = sentences.front()->size();
  sb.batch = sentences.size();
  if (sb.length == 0) throw InvalidArgument("empty sentence");
  for (const auto* s : sentences) {
    if (s->size() != sb.length) throw ShapeError("pack_batch: sentences differ in length");
  }
  sb.words.resize(sb.rows());
  for (std::size_t b = 0; b < sb.batch; ++b) {
    for (std::size_t t = 0; t < sb.length; ++t) sb.words[t * sb.batch + b] = (*sentences[b])[t];
  }
  return sb;
}

inline SentenceBatch make_batch(const std::vector<std::string>& sentence) { return pack_batch({&sentence}); }

// Groups indices by sentence length (ascending), keeping input order inside a
// group, and cuts each group into chunks of at most max_batch.
inline std::vector<std::vector<std::size_t>> length_batches(const std::vector<std::size_t>& lengths,
                                                            std::size_t max_batch) {
  if (max_batch == 0) throw InvalidArgument("max batch size must be positive");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < lengths.size(); ++i) groups[lengths[i]].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [len, idx] : groups) {
    for (std::size_t i = 0; i < idx.size(); i += max_batch) {
      out.emplace_back(idx.begin() + static_cast<long>(i),
                       idx.begin() + static_cast<long>(std::min(idx.size(), i + max_batch)));
    }
  }
  return out;
}

struct SegmentScores {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  SegmentScores& operator+=(const SegmentScores& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

// Exact-match span scoring: a predicted span is a true positive iff a gold
// span has the same category, start and end.
inline SegmentScores score_segments(const TagSequence& gold, const TagSequence& pred) {
  if (gold.size() != pred.size()) throw ShapeError("score_segments: length mismatch");
  const auto g = labels::decode_bilou(gold);
  const auto p = labels::decode_bilou(pred);
  SegmentScores s;
  std::size_t i = 0, j = 0;
  while (i < g.size() && j < p.size()) {
    if (g[i] == p[j]) {
      ++s.tp;
      ++i;
      ++j;
    } else if (g[i] < p[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  s.fn = g.size() - s.tp;
  s.fp = p.size() - s.tp;
  return s;
}

inline SegmentScores score_segments(const std::vector<TagSequence>& gold, const std::vector<TagSequence>& pred) {
  if (gold.size() != pred.size()) throw ShapeError("score_segments: corpus size mismatch");
  SegmentScores s;
  for (std::size_t i = 0; i < gold.size(); ++i) s += score_segments(gold[i], pred[i]);
  return s;
}

inline double token_accuracy(const std::vector<TagSequence>& gold, const std::vector<TagSequence>& pred) {
  std::size_t total = 0, right = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size()) throw ShapeError("token_accuracy: length mismatch");
    for (std::size_t t = 0; t < gold[i].size(); ++t) right += gold[i][t] == pred[i][t] ? 1 : 0;
    total += gold[i].size();
  }
  return total == 0 ? 0.0 : static_cast<double>(right) / static_cast<double>(total);
}

}  // namespace phiscrub::taggers
