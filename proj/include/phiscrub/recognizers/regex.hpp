#pragma once

// Small regular-expression engine with linear-time search.
//
// Syntax: literals, escapes (\d \D \w \W \s \S \b \B \n \t and escaped
// punctuation), '.', classes [...] with ranges and \d \w \s inside,
// groups (...) and (?:...), alternation, * + ? {m} {m,} {m,n} (lazy '?'
// suffix accepted), anchors ^ $, single-character lookarounds
// (?<=X) (?<!X) (?=X) (?!X) where X is one class, literal or escape, and a
// leading (?i) for ASCII case-insensitive matching.
//
// Search is leftmost-longest. A reverse lazy DFA marks every position where
// a match can start, a forward lazy DFA finds the longest match from the
// leftmost such start, and a Pike VM recovers group extents inside it.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "phiscrub/error.hpp"
#include "phiscrub/text/unicode.hpp"

namespace phiscrub::recognizers::re {

class RegexError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct CharSet {
  std::vector<std::pair<char32_t, char32_t>> ranges;
  bool letters = false;  // every non-ASCII letter
  bool negated = false;

  bool contains(char32_t c) const {
    bool in = false;
    for (const auto& [lo, hi] : ranges) {
      if (c >= lo && c <= hi) {
        in = true;
        break;
      }
    }
    if (!in && letters && c >= 0x80 && text::is_letter(c)) in = true;
    return in != negated;
  }
};

inline bool operator==(const CharSet& a, const CharSet& b) {
  return a.ranges == b.ranges && a.letters == b.letters && a.negated == b.negated;
}

inline bool is_word_char(char32_t c) {
  return text::is_ascii_alpha(c) || text::is_ascii_digit(c) || c == U'_' || (c >= 0x80 && text::is_letter(c));
}

enum class AssertKind : std::uint8_t {
  kBegin,
  kEnd,
  kWordBoundary,
  kNotWordBoundary,
  kBehind,
  kNotBehind,
  kAhead,
  kNotAhead,
};

struct Assertion {
  AssertKind kind = AssertKind::kBegin;
  int set = -1;  // lookaround class slot
};

// Context bits of the character on one side of a position:
// bit 0 = a character exists, bit 1 = word character, bit 2+k = member of
// lookaround class k.
using ContextMask = std::uint32_t;

inline bool assertion_holds(const Assertion& a, ContextMask prev, ContextMask next) {
  switch (a.kind) {
    case AssertKind::kBegin: return !(prev & 1U);
    case AssertKind::kEnd: return !(next & 1U);
    case AssertKind::kWordBoundary: return ((prev >> 1) & 1U) != ((next >> 1) & 1U);
    case AssertKind::kNotWordBoundary: return ((prev >> 1) & 1U) == ((next >> 1) & 1U);
    case AssertKind::kBehind: return (prev >> (2 + a.set)) & 1U;
    case AssertKind::kNotBehind: return !((prev >> (2 + a.set)) & 1U);
    case AssertKind::kAhead: return (next >> (2 + a.set)) & 1U;
    case AssertKind::kNotAhead: return !((next >> (2 + a.set)) & 1U);
  }
  return false;
}

inline Assertion reversed(Assertion a) {
  switch (a.kind) {
    case AssertKind::kBegin: a.kind = AssertKind::kEnd; break;
    case AssertKind::kEnd: a.kind = AssertKind::kBegin; break;
    case AssertKind::kBehind: a.kind = AssertKind::kAhead; break;
    case AssertKind::kNotBehind: a.kind = AssertKind::kNotAhead; break;
    case AssertKind::kAhead: a.kind = AssertKind::kBehind; break;
    case AssertKind::kNotAhead: a.kind = AssertKind::kNotBehind; break;
    default: break;
  }
  return a;
}

namespace detail {

struct Node {
  enum Kind : std::uint8_t { kEmpty, kSet, kConcat, kAlt, kRepeat, kGroup, kAssert } kind = kEmpty;
  int set = -1;
  std::vector<Node> kids;
  int min = 0;
  int max = -1;  // -1 = unbounded
  bool greedy = true;
  int group = -1;  // capture index, -1 = non-capturing
  Assertion assertion;
};

inline constexpr int kMaxRepeat = 1000;
inline constexpr std::size_t kMaxProgram = 50000;
inline constexpr int kMaxLookaroundSets = 29;

class Parser {
 public:
  Parser(std::u32string_view p, std::vector<CharSet>& sets, std::vector<CharSet>& look_sets)
      : p_(p), sets_(sets), look_sets_(look_sets) {}

  Node parse() {
    if (p_.substr(0, 4) == U"(?i)") {
      icase_ = true;
      i_ = 4;
    }
    Node n = alternation();
    if (i_ < p_.size()) fail("unmatched ')'");
    return n;
  }

  int groups() const { return groups_; }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw RegexError("regex: " + msg + " at offset " + std::to_string(i_));
  }

  bool more() const { return i_ < p_.size(); }
  char32_t peek() const { return p_[i_]; }
  bool eat(char32_t c) {
    if (more() && p_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }

  Node alternation() {
    Node first = concatenation();
    if (!more() || peek() != U'|') return first;
    Node alt;
    alt.kind = Node::kAlt;
    alt.kids.push_back(std::move(first));
    while (eat(U'|')) alt.kids.push_back(concatenation());
    return alt;
  }

  Node concatenation() {
    Node cat;
    cat.kind = Node::kConcat;
    while (more() && peek() != U'|' && peek() != U')') cat.kids.push_back(repetition());
    if (cat.kids.empty()) return Node{};
    if (cat.kids.size() == 1) return std::move(cat.kids.front());
    return cat;
  }

  std::optional<int> number() {
    const std::size_t start = i_;
    long v = 0;
    while (more() && text::is_ascii_digit(peek())) {
      v = v * 10 + static_cast<long>(peek() - U'0');
      if (v > kMaxRepeat) fail("repeat count too large");
      ++i_;
    }
    if (i_ == start) return std::nullopt;
    return static_cast<int>(v);
  }

  Node repetition() {
    Node atom_node = atom();
    if (!more()) return atom_node;
    int lo = 0, hi = -1;
    const char32_t c = peek();
    if (c == U'*') {
      ++i_;
    } else if (c == U'+') {
      ++i_;
      lo = 1;
    } else if (c == U'?') {
      ++i_;
      hi = 1;
    } else if (c == U'{') {
      ++i_;
      const auto m = number();
      if (!m) fail("bad repeat");
      lo = *m;
      hi = *m;
      if (eat(U',')) {
        const auto n = number();
        hi = n ? *n : -1;
      }
      if (!eat(U'}')) fail("bad repeat");
      if (hi != -1 && hi < lo) fail("repeat bounds out of order");
    } else {
      return atom_node;
    }
    if (atom_node.kind == Node::kAssert || atom_node.kind == Node::kEmpty) fail("nothing to repeat");
    Node rep;
    rep.kind = Node::kRepeat;
    rep.min = lo;
    rep.max = hi;
    rep.greedy = !eat(U'?');
    rep.kids.push_back(std::move(atom_node));
    if (more() && (peek() == U'*' || peek() == U'+' || peek() == U'?' || peek() == U'{')) fail("nested quantifier");
    return rep;
  }

  Node set_node(CharSet cs) {
    if (icase_) fold_case(cs);
    sets_.push_back(std::move(cs));
    Node n;
    n.kind = Node::kSet;
    n.set = static_cast<int>(sets_.size() - 1);
    return n;
  }

  static void fold_case(CharSet& cs) {
    std::vector<std::pair<char32_t, char32_t>> extra;
    for (const auto& [lo, hi] : cs.ranges) {
      for (char32_t c = std::max<char32_t>(lo, U'A'); c <= std::min<char32_t>(hi, U'Z'); ++c) {
        extra.push_back({c + 32, c + 32});
      }
      for (char32_t c = std::max<char32_t>(lo, U'a'); c <= std::min<char32_t>(hi, U'z'); ++c) {
        extra.push_back({c - 32, c - 32});
      }
    }
    cs.ranges.insert(cs.ranges.end(), extra.begin(), extra.end());
  }

  static CharSet literal_set(char32_t c) { return CharSet{{{c, c}}, false, false}; }

  static void add_class_escape(char32_t e, CharSet& cs) {
    switch (e) {
      case U'd': cs.ranges.push_back({U'0', U'9'}); break;
      case U'w':
        cs.ranges.insert(cs.ranges.end(), {{U'0', U'9'}, {U'A', U'Z'}, {U'a', U'z'}, {U'_', U'_'}});
        cs.letters = true;
        break;
      case U's':
        cs.ranges.insert(cs.ranges.end(), {{U' ', U' '}, {U'\t', U'\r'}, {0xA0, 0xA0}});
        break;
      default: break;
    }
  }

  // Escaped literal character, after the backslash.
  char32_t escaped_literal(char32_t e) {
    switch (e) {
      case U'n': return U'\n';
      case U't': return U'\t';
      case U'r': return U'\r';
      case U'f': return U'\f';
      case U'v': return U'\v';
      default: break;
    }
    if (text::is_ascii_alpha(e) || text::is_ascii_digit(e)) fail(std::string("unknown escape \\") + static_cast<char>(e));
    return e;
  }

  // One class-like item: used for lookaround bodies.
  CharSet single_set() {
    if (!more()) fail("missing lookaround body");
    const char32_t c = p_[i_++];
    if (c == U'[') return bracket();
    if (c == U'.') return CharSet{{{U'\n', U'\n'}}, false, true};
    if (c == U'\\') {
      if (!more()) fail("trailing backslash");
      const char32_t e = p_[i_++];
      CharSet cs;
      if (e == U'd' || e == U'w' || e == U's' || e == U'D' || e == U'W' || e == U'S') {
        add_class_escape(static_cast<char32_t>(text::ascii_lower(e)), cs);
        cs.negated = text::is_ascii_upper(e);
        return cs;
      }
      return literal_set(escaped_literal(e));
    }
    if (c == U'(' || c == U')' || c == U'|' || c == U'*' || c == U'+' || c == U'?') fail("bad lookaround body");
    return literal_set(c);
  }

  CharSet bracket() {
    CharSet cs;
    if (eat(U'^')) cs.negated = true;
    bool first = true;
    while (true) {
      if (!more()) fail("unterminated class");
      char32_t c = p_[i_++];
      if (c == U']' && !first) break;
      first = false;
      if (c == U'\\') {
        if (!more()) fail("trailing backslash");
        const char32_t e = p_[i_++];
        if (e == U'd' || e == U'w' || e == U's') {
          add_class_escape(e, cs);
          continue;
        }
        if (e == U'D' || e == U'W' || e == U'S') fail("negated escape inside class");
        c = escaped_literal(e);
      }
      if (more() && peek() == U'-' && i_ + 1 < p_.size() && p_[i_ + 1] != U']') {
        ++i_;
        char32_t hi = p_[i_++];
        if (hi == U'\\') {
          if (!more()) fail("trailing backslash");
          hi = escaped_literal(p_[i_++]);
        }
        if (hi < c) fail("class range out of order");
        cs.ranges.push_back({c, hi});
      } else {
        cs.ranges.push_back({c, c});
      }
    }
    return cs;
  }

  Node assert_node(AssertKind k, int set = -1) {
    Node n;
    n.kind = Node::kAssert;
    n.assertion = {k, set};
    return n;
  }

  Node atom() {
    const char32_t c = p_[i_++];
    switch (c) {
      case U'(': {
        Node g;
        g.kind = Node::kGroup;
        if (eat(U'?')) {
          AssertKind kind;
          if (eat(U':')) {
            g.kids.push_back(alternation());
            if (!eat(U')')) fail("missing ')'");
            return g;
          }
          if (eat(U'<')) {
            if (eat(U'=')) kind = AssertKind::kBehind;
            else if (eat(U'!')) kind = AssertKind::kNotBehind;
            else fail("unknown group syntax");
          } else if (eat(U'=')) {
            kind = AssertKind::kAhead;
          } else if (eat(U'!')) {
            kind = AssertKind::kNotAhead;
          } else {
            fail("unknown group syntax");
          }
          CharSet cs = single_set();
          if (icase_) fold_case(cs);
          if (!eat(U')')) fail("lookaround must hold a single character class");
          if (static_cast<int>(look_sets_.size()) >= kMaxLookaroundSets) fail("too many lookarounds");
          look_sets_.push_back(std::move(cs));
          return assert_node(kind, static_cast<int>(look_sets_.size() - 1));
        }
        g.group = ++groups_;
        g.kids.push_back(alternation());
        if (!eat(U')')) fail("missing ')'");
        return g;
      }
      case U'[': return set_node(bracket());
      case U'.': return set_node(CharSet{{{U'\n', U'\n'}}, false, true});
      case U'^': return assert_node(AssertKind::kBegin);
      case U'$': return assert_node(AssertKind::kEnd);
      case U'*':
      case U'+':
      case U'?':
      case U'{': --i_; fail("nothing to repeat");
      case U')': --i_; fail("unmatched ')'");
      case U'\\': {
        if (!more()) fail("trailing backslash");
        const char32_t e = p_[i_++];
        if (e == U'b') return assert_node(AssertKind::kWordBoundary);
        if (e == U'B') return assert_node(AssertKind::kNotWordBoundary);
        if (e == U'd' || e == U'w' || e == U's' || e == U'D' || e == U'W' || e == U'S') {
          CharSet cs;
          add_class_escape(static_cast<char32_t>(text::ascii_lower(e)), cs);
          cs.negated = text::is_ascii_upper(e);
          return set_node(std::move(cs));
        }
        return set_node(literal_set(escaped_literal(e)));
      }
      default: return set_node(literal_set(c));
    }
  }

  std::u32string_view p_;
  std::size_t i_ = 0;
  bool icase_ = false;
  int groups_ = 0;
  std::vector<CharSet>& sets_;
  std::vector<CharSet>& look_sets_;
};

struct Inst {
  enum Op : std::uint8_t { kSet, kSplit, kJmp, kSave, kAssert, kMatch } op = kMatch;
  int x = -1;
  int y = -1;
  int arg = -1;  // set, save slot, assertion, or match label
};

// Compiled NFA together with everything needed to evaluate it.
struct Program {
  std::vector<Inst> code;
  std::vector<Assertion> assertions;
  std::vector<CharSet> sets;
  std::vector<CharSet> look_sets;
  std::vector<int> starts;
  std::array<ContextMask, 128> ascii_context{};

  ContextMask compute_context(char32_t c) const {
    ContextMask m = 1U;
    if (is_word_char(c)) m |= 2U;
    for (std::size_t k = 0; k < look_sets.size(); ++k) {
      if (look_sets[k].contains(c)) m |= 1U << (2 + k);
    }
    return m;
  }

  void finalize() {
    for (char32_t c = 0; c < 128; ++c) ascii_context[c] = compute_context(c);
  }

  ContextMask context_of(char32_t c) const { return c < 128 ? ascii_context[c] : compute_context(c); }
};

class Compiler {
 public:
  explicit Compiler(bool reverse) : reverse_(reverse) {}

  Program compile(const Node& root, const std::vector<CharSet>& sets, const std::vector<CharSet>& look_sets) {
    const int match = push({Inst::kMatch, -1, -1, 0});
    prog_.starts = {emit(root, match)};
    prog_.sets = sets;
    prog_.look_sets = look_sets;
    prog_.finalize();
    return std::move(prog_);
  }

 private:
  int push(Inst i) {
    if (prog_.code.size() >= kMaxProgram) throw RegexError("regex: pattern too large");
    prog_.code.push_back(i);
    return static_cast<int>(prog_.code.size() - 1);
  }

  // Emits `n` so that it continues at `next`; returns the entry point.
  int emit(const Node& n, int next) {
    switch (n.kind) {
      case Node::kEmpty: return next;
      case Node::kSet: return push({Inst::kSet, next, -1, n.set});
      case Node::kAssert: {
        prog_.assertions.push_back(reverse_ ? reversed(n.assertion) : n.assertion);
        return push({Inst::kAssert, next, -1, static_cast<int>(prog_.assertions.size() - 1)});
      }
      case Node::kConcat: {
        if (reverse_) {
          for (const Node& k : n.kids) next = emit(k, next);
        } else {
          for (auto it = n.kids.rbegin(); it != n.kids.rend(); ++it) next = emit(*it, next);
        }
        return next;
      }
      case Node::kAlt: {
        int entry = emit(n.kids.back(), next);
        for (std::size_t k = n.kids.size() - 1; k-- > 0;) entry = push({Inst::kSplit, emit(n.kids[k], next), entry});
        return entry;
      }
      case Node::kGroup: {
        if (n.group < 0 || reverse_) return emit(n.kids.front(), next);
        const int close = push({Inst::kSave, next, -1, 2 * n.group + 1});
        const int body = emit(n.kids.front(), close);
        return push({Inst::kSave, body, -1, 2 * n.group});
      }
      case Node::kRepeat: {
        const Node& kid = n.kids.front();
        int tail = next;
        if (n.max == -1) {
          const int loop = push({Inst::kSplit});
          const int body = emit(kid, loop);
          prog_.code[static_cast<std::size_t>(loop)].x = n.greedy ? body : next;
          prog_.code[static_cast<std::size_t>(loop)].y = n.greedy ? next : body;
          tail = loop;
        } else {
          for (int j = 0; j < n.max - n.min; ++j) {
            const int body = emit(kid, tail);
            tail = n.greedy ? push({Inst::kSplit, body, next}) : push({Inst::kSplit, next, body});
          }
        }
        for (int j = 0; j < n.min; ++j) tail = emit(kid, tail);
        return tail;
      }
    }
    return next;
  }

  bool reverse_;
  Program prog_;
};

// Joins programs into one whose Match instructions carry the member index
// as label. Returns nullopt when the lookaround classes do not fit.
inline std::optional<Program> combine(const std::vector<const Program*>& members) {
  Program out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Program& p = *members[i];
    const int code_off = static_cast<int>(out.code.size());
    const int set_off = static_cast<int>(out.sets.size());
    const int assert_off = static_cast<int>(out.assertions.size());
    std::vector<int> look_map;
    for (const CharSet& cs : p.look_sets) {
      const auto it = std::find(out.look_sets.begin(), out.look_sets.end(), cs);
      if (it != out.look_sets.end()) {
        look_map.push_back(static_cast<int>(it - out.look_sets.begin()));
      } else {
        if (static_cast<int>(out.look_sets.size()) >= kMaxLookaroundSets) return std::nullopt;
        out.look_sets.push_back(cs);
        look_map.push_back(static_cast<int>(out.look_sets.size() - 1));
      }
    }
    for (Inst in : p.code) {
      if (in.x >= 0) in.x += code_off;
      if (in.y >= 0) in.y += code_off;
      if (in.op == Inst::kSet) in.arg += set_off;
      if (in.op == Inst::kAssert) in.arg += assert_off;
      if (in.op == Inst::kMatch) in.arg = static_cast<int>(i);
      out.code.push_back(in);
    }
    for (Assertion a : p.assertions) {
      if (a.set >= 0) a.set = look_map[static_cast<std::size_t>(a.set)];
      out.assertions.push_back(a);
    }
    out.sets.insert(out.sets.end(), p.sets.begin(), p.sets.end());
    for (int st : p.starts) out.starts.push_back(st + code_off);
  }
  out.finalize();
  return out;
}

// Lazily built DFA over sets of NFA states. A state also remembers the
// context of the character just consumed, which assertions need. Each
// cached transition records the successor and the labels of the Match
// instructions reachable just before the consumed character.
class LazyDfa {
 public:
  static constexpr int kDead = -1;
  static constexpr std::size_t kMaxStates = 4096;

  struct Step {
    int next;
    std::uint32_t accept;
  };

  LazyDfa(const Program& prog, bool unanchored)
      : prog_(prog), unanchored_(unanchored), mark_(prog.code.size(), 0) {}

  int start(ContextMask prev) { return intern(prog_.starts, prev); }

  Step transition(int s, char32_t c) {
    if (c < 128) {
      const std::size_t k = static_cast<std::size_t>(s) * 128 + c;
      if (next_[k] != kUnknown) return {next_[k], accept_[k]};
    } else if (const auto it = states_[static_cast<std::size_t>(s)].far.find(c);
               it != states_[static_cast<std::size_t>(s)].far.end()) {
      return it->second;
    }
    if (states_.size() >= kMaxStates) {
      // Keep memory bounded: rebuild from scratch around the current state.
      auto raw = states_[static_cast<std::size_t>(s)].raw;
      const ContextMask prev = states_[static_cast<std::size_t>(s)].prev;
      states_.clear();
      next_.clear();
      accept_.clear();
      index_.clear();
      s = intern(std::move(raw), prev);
    }
    const ContextMask cm = prog_.context_of(c);
    std::uint32_t acc = 0;
    std::vector<int> next_raw;
    {
      const State& st = states_[static_cast<std::size_t>(s)];
      for (int pc : closure(st.raw, st.prev, cm)) {
        const Inst& in = prog_.code[static_cast<std::size_t>(pc)];
        if (in.op == Inst::kMatch) acc |= 1U << in.arg;
        if (in.op == Inst::kSet && prog_.sets[static_cast<std::size_t>(in.arg)].contains(c)) next_raw.push_back(in.x);
      }
    }
    int t = kDead;
    if (!next_raw.empty() || unanchored_) t = intern(std::move(next_raw), cm);
    const Step step{t, acc};
    if (c < 128) {
      const std::size_t k = static_cast<std::size_t>(s) * 128 + c;
      next_[k] = t;
      accept_[k] = acc;
    } else {
      states_[static_cast<std::size_t>(s)].far.emplace(c, step);
    }
    return step;
  }

  // Labels accepting at the end of the text.
  std::uint32_t accept_at_end(int s) {
    std::uint32_t acc = 0;
    const State& st = states_[static_cast<std::size_t>(s)];
    for (int pc : closure(st.raw, st.prev, 0U)) {
      const Inst& in = prog_.code[static_cast<std::size_t>(pc)];
      if (in.op == Inst::kMatch) acc |= 1U << in.arg;
    }
    return acc;
  }

 private:
  static constexpr int kUnknown = -2;

  struct State {
    std::vector<int> raw;
    ContextMask prev = 0;
    std::unordered_map<char32_t, Step> far;
  };

  int intern(std::vector<int> raw, ContextMask prev) {
    if (unanchored_) raw.insert(raw.end(), prog_.starts.begin(), prog_.starts.end());
    std::sort(raw.begin(), raw.end());
    raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
    auto key = std::make_pair(raw, prev);
    if (const auto it = index_.find(key); it != index_.end()) return it->second;
    states_.push_back({std::move(raw), prev, {}});
    next_.resize(next_.size() + 128, kUnknown);
    accept_.resize(accept_.size() + 128, 0U);
    const int id = static_cast<int>(states_.size() - 1);
    index_.emplace(std::move(key), id);
    return id;
  }

  // Consuming and match instructions reachable from `raw` without input.
  std::vector<int> closure(const std::vector<int>& raw, ContextMask prev, ContextMask next) {
    ++generation_;
    if (generation_ == 0) {
      std::fill(mark_.begin(), mark_.end(), 0);
      generation_ = 1;
    }
    std::vector<int> out, stack(raw.rbegin(), raw.rend());
    while (!stack.empty()) {
      const int pc = stack.back();
      stack.pop_back();
      if (mark_[static_cast<std::size_t>(pc)] == generation_) continue;
      mark_[static_cast<std::size_t>(pc)] = generation_;
      const Inst& in = prog_.code[static_cast<std::size_t>(pc)];
      switch (in.op) {
        case Inst::kSet:
        case Inst::kMatch: out.push_back(pc); break;
        case Inst::kSplit:
          stack.push_back(in.y);
          stack.push_back(in.x);
          break;
        case Inst::kJmp:
        case Inst::kSave: stack.push_back(in.x); break;
        case Inst::kAssert:
          if (assertion_holds(prog_.assertions[static_cast<std::size_t>(in.arg)], prev, next)) stack.push_back(in.x);
          break;
      }
    }
    return out;
  }

  const Program& prog_;
  bool unanchored_;
  std::vector<State> states_;
  std::vector<int> next_;              // states x 128 successor cache
  std::vector<std::uint32_t> accept_;  // states x 128 accept labels
  std::map<std::pair<std::vector<int>, ContextMask>, int> index_;
  std::vector<std::uint32_t> mark_;
  std::uint32_t generation_ = 0;
};

// Runs a (possibly combined) reverse program backwards over the text.
// Bit k of result[i] is set when member k can start a match at i.
inline std::vector<std::uint32_t> start_positions(const Program& reverse, std::u32string_view s) {
  const std::size_t n = s.size();
  std::vector<std::uint32_t> starts(n + 1, 0U);
  LazyDfa dfa(reverse, true);
  int st = dfa.start(0U);
  for (std::size_t i = n; i > 0; --i) {
    const LazyDfa::Step step = dfa.transition(st, s[i - 1]);
    starts[i] = step.accept;
    st = step.next;
  }
  starts[0] = dfa.accept_at_end(st);
  return starts;
}

}  // namespace detail

struct Match {
  std::size_t start = 0;  // scalar offsets, end exclusive
  std::size_t end = 0;
  // groups[g] = extent of capture group g (1-based; [0] is the whole match).
  std::vector<std::optional<std::pair<std::size_t, std::size_t>>> groups;
};

class Regex {
 public:
  explicit Regex(std::string_view pattern) : pattern_(pattern) {
    const std::u32string p = text::decode_utf8(pattern);
    std::vector<CharSet> sets, look_sets;
    detail::Parser parser(p, sets, look_sets);
    const detail::Node root = parser.parse();
    groups_ = parser.groups();
    forward_ = detail::Compiler(false).compile(root, sets, look_sets);
    reverse_ = detail::Compiler(true).compile(root, sets, look_sets);
  }

  const std::string& pattern() const noexcept { return pattern_; }
  int group_count() const noexcept { return groups_; }
  const detail::Program& reverse_program() const noexcept { return reverse_; }

  // All non-overlapping, non-empty leftmost-longest matches, left to right.
  std::vector<Match> find_all(std::u32string_view s) const {
    const auto starts = detail::start_positions(reverse_, s);
    return matches_from(s, starts, 0);
  }

  std::vector<Match> find_all(std::string_view utf8) const { return find_all(std::u32string_view(text::decode_utf8(utf8))); }

  // Whole-string match.
  bool full_match(std::string_view utf8) const {
    const std::u32string s = text::decode_utf8(utf8);
    detail::LazyDfa fdfa(forward_, false);
    int st = fdfa.start(0U);
    for (char32_t c : s) {
      st = fdfa.transition(st, c).next;
      if (st == detail::LazyDfa::kDead) return false;
    }
    return fdfa.accept_at_end(st) != 0;
  }

  // Matches given the start-position bitmaps of a reverse pass; bit `bit`
  // belongs to this expression.
  std::vector<Match> matches_from(std::u32string_view s, const std::vector<std::uint32_t>& starts,
                                  unsigned bit) const {
    using detail::LazyDfa;
    const std::size_t n = s.size();
    std::vector<Match> out;
    LazyDfa fdfa(forward_, false);
    std::size_t pos = 0;
    while (pos < n) {
      while (pos < n && !((starts[pos] >> bit) & 1U)) ++pos;
      if (pos >= n) break;
      int st = fdfa.start(pos > 0 ? forward_.context_of(s[pos - 1]) : 0U);
      std::optional<std::size_t> last;
      std::size_t j = pos;
      for (; j < n; ++j) {
        const LazyDfa::Step step = fdfa.transition(st, s[j]);
        if (j > pos && step.accept) last = j;
        st = step.next;
        if (st == LazyDfa::kDead) break;
      }
      if (j == n && st != LazyDfa::kDead && fdfa.accept_at_end(st)) last = n;
      if (!last) {
        ++pos;
        continue;
      }
      Match m{pos, *last, {}};
      m.groups.assign(static_cast<std::size_t>(groups_) + 1, std::nullopt);
      m.groups[0] = std::make_pair(pos, *last);
      if (groups_ > 0) capture(s, m);
      out.push_back(std::move(m));
      pos = *last;
    }
    return out;
  }

 private:
  // Pike VM over [m.start, m.end) with leftmost-first priorities, accepting
  // only at m.end.
  void capture(std::u32string_view s, Match& m) const {
    using Caps = std::vector<long>;
    const std::size_t ncap = 2 * (static_cast<std::size_t>(groups_) + 1);
    const auto& code = forward_.code;
    struct Thread {
      int pc;
      Caps caps;
    };
    std::vector<std::size_t> seen(code.size(), static_cast<std::size_t>(-1));
    const auto ctx_at = [&](std::size_t i) -> ContextMask { return i < s.size() ? forward_.context_of(s[i]) : 0U; };

    std::vector<Thread> clist, nlist;
    std::optional<Caps> matched;
    const auto add = [&](auto&& self, std::vector<Thread>& list, int pc, Caps caps, std::size_t pos,
                         std::size_t stamp) -> void {
      if (seen[static_cast<std::size_t>(pc)] == stamp) return;
      seen[static_cast<std::size_t>(pc)] = stamp;
      const detail::Inst& in = code[static_cast<std::size_t>(pc)];
      switch (in.op) {
        case detail::Inst::kSplit:
          self(self, list, in.x, caps, pos, stamp);
          self(self, list, in.y, std::move(caps), pos, stamp);
          return;
        case detail::Inst::kJmp: self(self, list, in.x, std::move(caps), pos, stamp); return;
        case detail::Inst::kSave:
          caps[static_cast<std::size_t>(in.arg)] = static_cast<long>(pos);
          self(self, list, in.x, std::move(caps), pos, stamp);
          return;
        case detail::Inst::kAssert: {
          const ContextMask prev = pos > 0 ? forward_.context_of(s[pos - 1]) : 0U;
          if (assertion_holds(forward_.assertions[static_cast<std::size_t>(in.arg)], prev, ctx_at(pos))) {
            self(self, list, in.x, std::move(caps), pos, stamp);
          }
          return;
        }
        default: list.push_back({pc, std::move(caps)}); return;
      }
    };

    add(add, clist, forward_.starts.front(), Caps(ncap, -1), m.start, m.start);
    for (std::size_t pos = m.start;; ++pos) {
      if (pos == m.end) {
        for (const Thread& t : clist) {
          if (code[static_cast<std::size_t>(t.pc)].op == detail::Inst::kMatch) {
            matched = t.caps;
            break;
          }
        }
        break;
      }
      nlist.clear();
      for (Thread& t : clist) {
        const detail::Inst& in = code[static_cast<std::size_t>(t.pc)];
        if (in.op == detail::Inst::kSet && forward_.sets[static_cast<std::size_t>(in.arg)].contains(s[pos])) {
          add(add, nlist, in.x, std::move(t.caps), pos + 1, pos + 1);
        }
      }
      std::swap(clist, nlist);
      if (clist.empty()) break;
    }
    if (!matched) return;
    for (int g = 1; g <= groups_; ++g) {
      const long a = (*matched)[2 * static_cast<std::size_t>(g)];
      const long b = (*matched)[2 * static_cast<std::size_t>(g) + 1];
      if (a >= 0 && b >= 0) {
        m.groups[static_cast<std::size_t>(g)] = std::make_pair(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
      }
    }
  }

  std::string pattern_;
  int groups_ = 0;
  detail::Program forward_;
  detail::Program reverse_;
};

// Several expressions searched together: one reverse pass finds candidate
// start positions for all members, then each member runs its own forward
// search. Results equal calling find_all on each member.
class RegexSet {
 public:
  explicit RegexSet(std::vector<std::shared_ptr<const Regex>> members) : members_(std::move(members)) {
    std::vector<const detail::Program*> chunk;
    std::size_t first = 0;
    const auto flush = [&] {
      if (chunk.empty()) return;
      chunks_.push_back({first, chunk.size(), *detail::combine(chunk)});
      first += chunk.size();
      chunk.clear();
    };
    for (const auto& m : members_) {
      chunk.push_back(&m->reverse_program());
      if (chunk.size() > 32 || !detail::combine(chunk)) {
        chunk.pop_back();
        flush();
        chunk.push_back(&m->reverse_program());
      }
    }
    flush();
  }

  std::size_t size() const noexcept { return members_.size(); }

  std::vector<std::vector<Match>> find_all(std::u32string_view s) const {
    std::vector<std::vector<Match>> out(members_.size());
    for (const Chunk& c : chunks_) {
      const auto starts = detail::start_positions(c.reverse, s);
      for (std::size_t k = 0; k < c.count; ++k) {
        out[c.first + k] = members_[c.first + k]->matches_from(s, starts, static_cast<unsigned>(k));
      }
    }
    return out;
  }

 private:
  struct Chunk {
    std::size_t first;
    std::size_t count;
    detail::Program reverse;
  };

  std::vector<std::shared_ptr<const Regex>> members_;
  std::vector<Chunk> chunks_;
};

}  // namespace phiscrub::recognizers::re
