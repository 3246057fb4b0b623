#pragma once

// Per-word input features: pretrained word vectors, word-shape classes and
// a character CNN.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "phiscrub/error.hpp"
#include "phiscrub/numerics/ops.hpp"
#include "phiscrub/text/unicode.hpp"

namespace phiscrub::features {

using num::Tensor;

// Frozen lookup table loaded from the common "token f1 f2 ... fD" text
// layout. Row size() holds the UNK vector (mean of all loaded vectors).
class WordEmbeddingTable {
 public:
  WordEmbeddingTable() = default;

  WordEmbeddingTable(std::vector<std::string> words, Tensor vectors)
      : words_(std::move(words)), matrix_(std::move(vectors)) {
    if (matrix_.rank() != 2 || matrix_.rows() != words_.size() + 1) {
      throw DataError("embedding table: matrix must have one row per word plus UNK");
    }
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  }

  static WordEmbeddingTable parse(std::istream& in) {
    std::vector<std::string> words;
    std::vector<double> flat;
    std::unordered_map<std::string, std::size_t> seen;
    std::size_t dim = 0;
    std::size_t line_no = 0;
    std::string line;
    std::vector<double> row;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::size_t pos = line.find_first_not_of(" \t");
      if (pos == std::string::npos) continue;
      std::size_t end = line.find_first_of(" \t", pos);
      if (end == std::string::npos) throw DataError("embeddings: token without vector", line_no);
      std::string token = line.substr(pos, end - pos);
      row.clear();
      pos = end;
      while (true) {
        pos = line.find_first_not_of(" \t", pos);
        if (pos == std::string::npos) break;
        end = line.find_first_of(" \t", pos);
        if (end == std::string::npos) end = line.size();
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + end, v);
        if (ec != std::errc() || ptr != line.data() + end) {
          throw DataError("embeddings: bad number '" + line.substr(pos, end - pos) + "'", line_no);
        }
        row.push_back(v);
        pos = end;
      }
      if (row.empty()) throw DataError("embeddings: token without vector", line_no);
      if (dim == 0) dim = row.size();
      if (row.size() != dim) {
        throw DataError("embeddings: expected " + std::to_string(dim) + " values, found " +
                            std::to_string(row.size()),
                        line_no);
      }
      if (!seen.emplace(token, words.size()).second) continue;
      words.push_back(std::move(token));
      flat.insert(flat.end(), row.begin(), row.end());
    }
    if (words.empty()) throw DataError("embeddings: no vectors found");
    std::vector<double> unk(dim, 0.0);
    for (std::size_t i = 0; i < words.size(); ++i) {
      for (std::size_t j = 0; j < dim; ++j) unk[j] += flat[i * dim + j];
    }
    for (double& v : unk) v /= static_cast<double>(words.size());
    flat.insert(flat.end(), unk.begin(), unk.end());
    const std::size_t rows = words.size() + 1;
    return WordEmbeddingTable(std::move(words), Tensor({rows, dim}, std::move(flat)));
  }

  static WordEmbeddingTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embeddings file: " + path);
    return parse(in);
  }

  std::size_t size() const noexcept { return words_.size(); }
  std::size_t dim() const noexcept { return matrix_.cols(); }
  std::size_t unk_index() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const Tensor& matrix() const noexcept { return matrix_; }

  // Exact match, then ASCII-lowercased match, then UNK.
  std::size_t index_of(std::string_view word) const {
    if (auto it = index_.find(std::string(word)); it != index_.end()) return it->second;
    if (auto it = index_.find(text::ascii_lower(word)); it != index_.end()) return it->second;
    return unk_index();
  }

  std::vector<double> lookup(std::string_view word) const {
    const std::size_t r = index_of(word);
    return {matrix_.data() + r * dim(), matrix_.data() + (r + 1) * dim()};
  }

 private:
  std::vector<std::string> words_;
  Tensor matrix_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline std::vector<double> lookup_word(const WordEmbeddingTable& table, std::string_view word) {
  return table.lookup(word);
}

enum class WordShape7 { kNumeric, kAllLower, kAllUpper, kInitialUpper, kMostlyNumeric, kContainsDigit, kOther };
inline constexpr std::size_t kNumShape7 = 7;

enum class WordShape4 { kAllUpper, kInitialUpper, kCamelCase, kOther };
inline constexpr std::size_t kNumShape4 = 4;

namespace detail {

inline bool numeric_shape(std::u32string_view w) {
  // digits, optionally joined by single . , / - between digit runs
  if (!text::is_ascii_digit(w.front()) || !text::is_ascii_digit(w.back())) return false;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const char32_t c = w[i];
    if (text::is_ascii_digit(c)) continue;
    const bool sep = c == U'.' || c == U',' || c == U'/' || c == U'-';
    if (!sep || !text::is_ascii_digit(w[i - 1]) || !text::is_ascii_digit(w[i + 1])) return false;
  }
  return true;
}

inline std::u32string nonempty(std::string_view word) {
  if (word.empty()) throw InvalidArgument("word shape of an empty word");
  return text::decode_utf8(word);
}

}  // namespace detail

// First matching class in order: Numeric, AllUpper, AllLower, InitialUpper,
// MostlyNumeric (> 50% digits), ContainsDigit, Other.
inline WordShape7 shape7(std::string_view word) {
  const std::u32string w = detail::nonempty(word);
  if (detail::numeric_shape(w)) return WordShape7::kNumeric;
  const auto all = [&](auto pred) {
    for (char32_t c : w) {
      if (!pred(c)) return false;
    }
    return true;
  };
  if (all(text::is_ascii_upper)) return WordShape7::kAllUpper;
  if (all(text::is_ascii_lower)) return WordShape7::kAllLower;
  if (w.size() > 1 && text::is_ascii_upper(w[0]) &&
      std::all_of(w.begin() + 1, w.end(), text::is_ascii_lower)) {
    return WordShape7::kInitialUpper;
  }
  std::size_t digits = 0;
  for (char32_t c : w) digits += text::is_ascii_digit(c) ? 1 : 0;
  if (2 * digits > w.size()) return WordShape7::kMostlyNumeric;
  if (digits > 0) return WordShape7::kContainsDigit;
  return WordShape7::kOther;
}

// AllUpper (letters present, none lowercase), InitialUpper (upper then only
// lowercase letters), CamelCase (an internal capital and at least two case
// transitions between letters, e.g. "McDonald"), else Other.
inline WordShape4 shape4(std::string_view word) {
  const std::u32string w = detail::nonempty(word);
  std::size_t upper = 0, lower = 0;
  for (char32_t c : w) {
    upper += text::is_ascii_upper(c) ? 1 : 0;
    lower += text::is_ascii_lower(c) ? 1 : 0;
  }
  if (upper > 0 && lower == 0) return WordShape4::kAllUpper;
  if (text::is_ascii_upper(w[0]) && upper == 1 && lower > 0) {
    bool only_letters = true;
    for (char32_t c : w) only_letters = only_letters && text::is_ascii_alpha(c);
    if (only_letters) return WordShape4::kInitialUpper;
  }
  bool internal_upper = false;
  std::size_t transitions = 0;
  int prev = -1;  // 1 upper, 0 lower
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!text::is_ascii_alpha(w[i])) continue;
    const int cur = text::is_ascii_upper(w[i]) ? 1 : 0;
    if (cur == 1 && i > 0) internal_upper = true;
    if (prev != -1 && cur != prev) ++transitions;
    prev = cur;
  }
  if (internal_upper && transitions >= 2) return WordShape4::kCamelCase;
  return WordShape4::kOther;
}

// Printable ASCII maps to rows 0..94, everything else to the UNK row 95.
inline constexpr std::size_t kCharAlphabet = 96;
inline constexpr long kUnkChar = 95;

inline long char_index(char32_t c) {
  if (c >= 32 && c <= 126) return static_cast<long>(c - 32);
  return kUnkChar;
}

struct CharCnnShape {
  std::size_t char_dim = 95;
  std::size_t filters = 32;
  std::size_t width = 3;
};

// Characters of a batch of words, position-major: row p * n + k holds
// character p of word k, -1 past the end of a word.
struct CharBatch {
  std::vector<long> indices;
  std::vector<std::size_t> lengths;
  std::size_t max_length = 0;
};

inline CharBatch char_batch(const std::vector<std::string>& words) {
  CharBatch cb;
  std::vector<std::u32string> decoded;
  decoded.reserve(words.size());
  for (const auto& w : words) {
    decoded.push_back(text::decode_utf8(w));
    if (decoded.back().empty()) throw InvalidArgument("char_cnn: empty word");
    cb.lengths.push_back(decoded.back().size());
    cb.max_length = std::max(cb.max_length, decoded.back().size());
  }
  const std::size_t n = words.size();
  cb.indices.assign(cb.max_length * n, -1);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t p = 0; p < decoded[k].size(); ++p) cb.indices[p * n + k] = char_index(decoded[k][p]);
  }
  return cb;
}

// Embeds characters, convolves over each word with zero padding, applies
// relu and max-pools over the word's own positions: [n_words, filters].
// Padding beyond a word's end never reaches its pooled output.
template <typename Param>
num::Var char_cnn_encode(num::Tape& tape, const std::vector<std::string>& words, Param& table, Param& conv_w,
                         Param& conv_b, const CharCnnShape& shape) {
  const CharBatch cb = char_batch(words);
  const std::size_t n = words.size();
  num::Var chars = num::gather_rows(tape.parameter(table), cb.indices);
  num::Var conv = num::conv1d_dilated(chars, tape.parameter(conv_w), tape.parameter(conv_b),
                                      {shape.width, 1, shape.filters}, n);
  return num::max_pool_over_time(num::relu(conv), n, cb.lengths);
}

}  // namespace phiscrub::features
