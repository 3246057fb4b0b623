#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace phiscrub::text {

// Decode UTF-8 into scalar values. Invalid bytes decode to U+FFFD one byte
// at a time.
// When `starts` is given it receives the byte offset of each scalar.
inline std::u32string decode_utf8(std::string_view s,
                                  std::vector<std::size_t>* starts = nullptr) {
  std::u32string out;
  out.reserve(s.size());
  if (starts) starts->clear();
  std::size_t i = 0;
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  while (i < s.size()) {
    const unsigned char c = byte(i);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c >> 5) == 0x6) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c >> 4) == 0xE) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c >> 3) == 0x1E) {
      len = 4;
      cp = c & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const unsigned char cc = byte(i + k);
      if ((cc >> 6) != 0x2) {
        ok = false;
      } else {
        cp = (cp << 6) | (cc & 0x3F);
      }
    }
    if (starts) starts->push_back(i);
    if (!ok) {
      out.push_back(char32_t{0xFFFD});
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) append_utf8(out, cp);
  return out;
}

// Maps between byte offsets of a UTF-8 buffer and scalar offsets.
// byte_of(k) is the byte offset of scalar k; byte_of(size) is the total
// byte length.
class OffsetMap {
 public:
  explicit OffsetMap(std::string_view utf8) {
    decode_utf8(utf8, &byte_of_);
    byte_of_.push_back(utf8.size());
    scalar_of_.assign(utf8.size() + 1, 0);
    for (std::size_t k = 0; k + 1 < byte_of_.size(); ++k) {
      for (std::size_t b = byte_of_[k]; b < byte_of_[k + 1]; ++b) scalar_of_[b] = k;
    }
    scalar_of_[utf8.size()] = byte_of_.size() - 1;
  }

  std::size_t scalars() const noexcept { return byte_of_.size() - 1; }
  std::size_t byte_of(std::size_t scalar) const { return byte_of_.at(scalar); }
  // Scalar index containing byte `b` (for a boundary byte, the scalar that
  // starts there).
  std::size_t scalar_of(std::size_t b) const { return scalar_of_.at(b); }

 private:
  std::vector<std::size_t> byte_of_;
  std::vector<std::size_t> scalar_of_;
};

inline bool is_space(char32_t c) {
  switch (c) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\f': case U'\v':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

inline bool is_ascii_digit(char32_t c) { return c >= U'0' && c <= U'9'; }
inline bool is_ascii_upper(char32_t c) { return c >= U'A' && c <= U'Z'; }
inline bool is_ascii_lower(char32_t c) { return c >= U'a' && c <= U'z'; }
inline bool is_ascii_alpha(char32_t c) { return is_ascii_upper(c) || is_ascii_lower(c); }

// Letters: ASCII letters plus any non-ASCII scalar outside the general
// punctuation/symbol blocks. Coarse, but total and deterministic.
inline bool is_letter(char32_t c) {
  if (c < 0x80) return is_ascii_alpha(c);
  if (c == 0xFFFD) return false;
  if ((c >= 0x2000 && c <= 0x2BFF) || (c >= 0x3000 && c <= 0x303F)) return false;
  if (c >= 0xA0 && c <= 0xBF) return false;
  if (c == 0xD7 || c == 0xF7) return false;
  return !is_space(c);
}

inline bool is_alnum(char32_t c) { return is_ascii_digit(c) || is_letter(c); }

inline char32_t ascii_lower(char32_t c) { return is_ascii_upper(c) ? c + 32 : c; }

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  }
  return out;
}

}  // namespace phiscrub::text
