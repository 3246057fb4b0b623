#pragma once

// Penn-Treebank-flavoured sentence splitting and tokenization.
//
// Offsets everywhere are Unicode scalar offsets into the document, never
// byte offsets. Every emitted token is a verbatim substring of the input, so
// document[start, end) == token.text holds for all tokens (the "cannot"
// rewrite splits the surface form in place: "can" + "not").

#include <algorithm>
#include <array>
#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phiscrub/error.hpp"
#include "phiscrub/text/unicode.hpp"

namespace phiscrub::text {

// Bumped whenever the tokenization rules below change observable output.
inline constexpr std::string_view kTokenizerRulesVersion = "ptb-lite/1";

// Apostrophe suffixes detached as their own token ("Robert's" -> "'s").
inline constexpr std::array<std::u32string_view, 6> kContractionSuffixes = {
    U"s", U"re", U"ll", U"ve", U"d", U"m"};

// Separators kept inside a run that contains a digit ("555-123-4567").
inline constexpr std::u32string_view kNumericJoiners = U"-./";
// Separators kept only when flanked by digits on both sides ("1,000", "10:30").
inline constexpr std::u32string_view kDigitOnlyJoiners = U",:";

struct Token {
  std::string text;
  std::size_t start = 0;  // inclusive scalar offset
  std::size_t end = 0;    // exclusive scalar offset

  friend bool operator==(const Token&, const Token&) = default;
};

struct Sentence {
  std::vector<Token> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  std::vector<std::string> words() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.text);
    return out;
  }
};

struct TextRange {
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const TextRange&, const TextRange&) = default;
};

struct Document {
  std::string raw;
  std::vector<Sentence> sentences;
};

struct SplitterOptions {
  // Tokens ending in '.' that never close a sentence.
  std::set<std::u32string> abbreviations = {
      U"Dr.",   U"Mr.",  U"Mrs.", U"Ms.",  U"St.",  U"Prof.", U"Jr.",  U"Sr.",
      U"Mt.",   U"Ave.", U"Rd.",  U"Blvd.", U"Apt.", U"No.",  U"vs.",  U"etc.",
      U"e.g.",  U"i.e.", U"Inc.", U"Co.",  U"Ltd.", U"Jan.", U"Feb.", U"Mar.",
      U"Apr.",  U"Jun.", U"Jul.", U"Aug.", U"Sep.", U"Sept.", U"Oct.", U"Nov.",
      U"Dec."};
  // Line breaks always end a sentence (clinical notes are line oriented).
  bool split_on_newline = true;
};

namespace detail {

inline bool is_apostrophe(char32_t c) { return c == U'\'' || c == 0x2019; }

inline bool is_sentence_final(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }

inline bool is_closer(char32_t c) {
  return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == U'}' ||
         c == 0x2019 || c == 0x201D;
}

inline bool is_opener(char32_t c) {
  return c == U'(' || c == U'[' || c == U'{' || c == U'"' || c == U'\'' ||
         c == U'<' || c == 0x201C || c == 0x2018;
}

inline bool is_trailer(char32_t c) {
  return c == U'.' || c == U',' || c == U';' || c == U':' || c == U'!' ||
         c == U'?' || c == U')' || c == U']' || c == U'}' || c == U'"' ||
         c == U'\'' || c == U'>' || c == 0x201D || c == 0x2019;
}

inline bool istarts_with(std::u32string_view s, std::u32string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (ascii_lower(s[i]) != prefix[i]) return false;
  }
  return true;
}

// URL- or email-shaped chunk core: kept as a single token.
inline bool is_url_or_email(std::u32string_view s) {
  if (s.find(U"://") != std::u32string_view::npos) return true;
  if (istarts_with(s, U"www.") && s.size() > 4) return true;
  const auto at = s.find(U'@');
  if (at == std::u32string_view::npos || at == 0) return false;
  const auto dot = s.find(U'.', at + 1);
  return dot != std::u32string_view::npos && dot > at + 1 && dot + 1 < s.size();
}

class TokenSink {
 public:
  TokenSink(std::u32string_view text, std::size_t base, std::vector<Token>& out)
      : text_(text), base_(base), out_(out) {}

  void emit(std::size_t a, std::size_t b) {
    if (a >= b) return;
    out_.push_back(Token{encode_utf8(text_.substr(a, b - a)), base_ + a, base_ + b});
  }

  // Word piece: applies the "cannot" rewrite.
  void emit_word(std::size_t a, std::size_t b) {
    if (b - a == 6) {
      std::u32string low;
      for (std::size_t k = a; k < b; ++k) low.push_back(ascii_lower(text_[k]));
      if (low == U"cannot") {
        emit(a, a + 3);
        emit(a + 3, b);
        return;
      }
    }
    emit(a, b);
  }

 private:
  std::u32string_view text_;
  std::size_t base_;
  std::vector<Token>& out_;
};

// Splits one separator-free segment at contraction apostrophes.
inline void emit_segment(std::u32string_view s, std::size_t a, std::size_t b, TokenSink& sink) {
  std::size_t cursor = a;
  for (std::size_t p = a; p < b; ++p) {
    if (!is_apostrophe(s[p]) || p == a) continue;
    std::size_t q = p + 1;
    while (q < b && is_letter(s[q])) ++q;
    if (q == p + 1) continue;
    if (q < b && is_alnum(s[q])) continue;
    std::u32string suffix;
    for (std::size_t k = p + 1; k < q; ++k) suffix.push_back(ascii_lower(s[k]));
    if (suffix == U"t" && p >= cursor + 1 && ascii_lower(s[p - 1]) == U'n') {
      sink.emit_word(cursor, p - 1);
      sink.emit(p - 1, q);
      cursor = q;
      p = q - 1;
    } else if (std::find(kContractionSuffixes.begin(), kContractionSuffixes.end(), suffix) !=
               kContractionSuffixes.end()) {
      sink.emit_word(cursor, p);
      sink.emit(p, q);
      cursor = q;
      p = q - 1;
    }
  }
  sink.emit_word(cursor, b);
}

// Alphanumeric compound starting at `i`; returns its end.
inline std::size_t emit_compound(std::u32string_view s, std::size_t i, std::size_t b,
                                 TokenSink& sink) {
  std::size_t k = i;
  for (;;) {
    while (k < b && (is_alnum(s[k]) || (is_apostrophe(s[k]) && k > i && is_letter(s[k - 1]) &&
                                        k + 1 < b && is_letter(s[k + 1])))) {
      ++k;
    }
    const bool joiner = k + 1 < b && (kNumericJoiners.find(s[k]) != std::u32string_view::npos ||
                                      kDigitOnlyJoiners.find(s[k]) != std::u32string_view::npos);
    if (joiner && is_alnum(s[k + 1])) {
      ++k;
      continue;
    }
    break;
  }
  const bool has_digit = std::any_of(s.begin() + static_cast<std::ptrdiff_t>(i),
                                     s.begin() + static_cast<std::ptrdiff_t>(k), is_ascii_digit);
  std::size_t seg = i;
  for (std::size_t p = i; p < k; ++p) {
    const char32_t c = s[p];
    const bool numeric_joiner = kNumericJoiners.find(c) != std::u32string_view::npos;
    const bool digit_joiner = kDigitOnlyJoiners.find(c) != std::u32string_view::npos;
    if (!numeric_joiner && !digit_joiner) continue;
    const bool keep = has_digit && (numeric_joiner || (is_ascii_digit(s[p - 1]) &&
                                                       is_ascii_digit(s[p + 1])));
    if (keep) continue;
    emit_segment(s, seg, p, sink);
    sink.emit(p, p + 1);
    seg = p + 1;
  }
  emit_segment(s, seg, k, sink);
  return k;
}

inline void tokenize_chunk(std::u32string_view s, std::size_t a, std::size_t b, TokenSink& sink) {
  // Peel openers/trailers to test for a URL or email core.
  std::size_t core_a = a;
  std::size_t core_b = b;
  while (core_a < core_b && is_opener(s[core_a])) ++core_a;
  while (core_b > core_a && is_trailer(s[core_b - 1])) --core_b;
  if (core_a < core_b && is_url_or_email(s.substr(core_a, core_b - core_a))) {
    for (std::size_t p = a; p < core_a; ++p) sink.emit(p, p + 1);
    sink.emit(core_a, core_b);
    for (std::size_t p = core_b; p < b; ++p) sink.emit(p, p + 1);
    return;
  }
  std::size_t i = a;
  while (i < b) {
    if (is_alnum(s[i])) {
      i = emit_compound(s, i, b, sink);
    } else {
      sink.emit(i, i + 1);
      ++i;
    }
  }
}

}  // namespace detail

// Splits `raw` into trimmed sentence ranges (scalar offsets). A sentence ends
// at [.!?] (plus closing quotes/brackets) followed by whitespace and an
// uppercase letter or digit, unless the word ending in '.' is a known
// abbreviation or a single-letter initial.
inline std::vector<TextRange> split_sentences(std::string_view raw,
                                              const SplitterOptions& opts = {}) {
  const std::u32string s = decode_utf8(raw);
  std::vector<TextRange> out;
  const std::size_t n = s.size();
  std::size_t start = n;  // n == no open sentence
  std::size_t last_non_space = 0;

  auto close = [&](std::size_t end) {
    if (start < end) out.push_back({start, end});
    start = n;
  };

  for (std::size_t i = 0; i < n; ++i) {
    const char32_t c = s[i];
    if (is_space(c)) {
      if (opts.split_on_newline && (c == U'\n' || c == U'\r') && start != n) {
        close(last_non_space + 1);
      }
      continue;
    }
    if (start == n) start = i;
    last_non_space = i;
    if (!detail::is_sentence_final(c)) continue;

    std::size_t j = i + 1;
    while (j < n && (detail::is_sentence_final(s[j]) || detail::is_closer(s[j]))) ++j;
    if (j < n && !is_space(s[j])) continue;
    std::size_t k = j;
    while (k < n && is_space(s[k])) ++k;
    if (k < n && !(is_ascii_upper(s[k]) || is_ascii_digit(s[k]) ||
                   (is_letter(s[k]) && !is_ascii_lower(s[k])))) {
      continue;
    }
    if (c == U'.') {
      std::size_t w = i;
      while (w > 0 && !is_space(s[w - 1])) --w;
      const std::u32string word = s.substr(w, i + 1 - w);
      if (opts.abbreviations.count(word)) continue;
      if (word.size() == 2 && is_letter(word[0])) continue;
    }
    last_non_space = j - 1;
    close(j);
    i = j - 1;
  }
  if (start != n) close(last_non_space + 1);
  return out;
}

// Tokenizes one sentence. `base_offset` is the scalar offset of the first
// character of `sentence_text` within its document.
inline Sentence tokenize(std::string_view sentence_text, std::size_t base_offset = 0) {
  const std::u32string s = decode_utf8(sentence_text);
  Sentence out;
  detail::TokenSink sink(s, base_offset, out.tokens);
  std::size_t i = 0;
  while (i < s.size()) {
    if (is_space(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    detail::tokenize_chunk(s, i, j, sink);
    i = j;
  }
  if (out.tokens.empty()) throw InvalidArgument("tokenize: empty sentence");
  return out;
}

inline Document make_document(std::string raw, const SplitterOptions& opts = {}) {
  Document doc;
  doc.raw = std::move(raw);
  const std::u32string s = decode_utf8(doc.raw);
  for (const TextRange& r : split_sentences(doc.raw, opts)) {
    doc.sentences.push_back(tokenize(encode_utf8(std::u32string_view(s).substr(r.start, r.end - r.start)),
                                     r.start));
  }
  return doc;
}

// Scalar substring [start, end) of a UTF-8 string.
inline std::string substr_scalars(std::string_view utf8, std::size_t start, std::size_t end) {
  const std::u32string s = decode_utf8(utf8);
  if (start > end || end > s.size()) throw InvalidArgument("substr_scalars: range out of bounds");
  return encode_utf8(std::u32string_view(s).substr(start, end - start));
}

}  // namespace phiscrub::text
