#pragma once

// Regex recognizer bank for the pattern-based identifier classes.

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "phiscrub/labels/bilou.hpp"
#include "phiscrub/recognizers/regex.hpp"

namespace phiscrub::recognizers {

using labels::PhiClass;

// Built-in rule set; identical to data/rules.tsv.
inline constexpr std::string_view kDefaultRulesTsv = R"RULES(# class	priority	pattern
# Higher priority wins on overlap. Group 1, when present, is the reported extent.
SSN	80	(?<![\w-])\d{3}-\d{2}-\d{4}(?![\w-])
SSN	80	(?i)\b(?:ssn|social security)(?!\w)\s*(?:(?:number|num|no\.?|id|#)\s*)?[:#]?\s*(\d{9}|\d{3} \d{2} \d{4})(?![\w-])
FAX	70	(?i)\bfax(?!\w)[^\n\d]{0,10}(?<![\w-])((?:\+?1[-. ]?)?(?:\(\d{3}\) ?|\d{3}[-. ])\d{3}[-. ]\d{4}(?: ?(?:x|ext\.?) ?\d{1,5})?)(?![\w-])
MRN	65	(?i)\b(?:mrn|medical record|chart)(?!\w)\s*(?:(?:number|num|no\.?|id|#)\s*)?[:#]?\s*((?:[a-z]{1,4}-?)?\d[a-z0-9]{2,}(?:-[a-z0-9]+)*)(?![\w-])
HEALTH_PLAN_ID	65	(?i)\b(?:policy|health plan|insurance|member|subscriber|medicaid|medicare)(?!\w)\s*(?:(?:number|num|no\.?|id|#)\s*)?[:#]?\s*((?:[a-z]{1,4}-?)?\d[a-z0-9]{2,}(?:-[a-z0-9]+)*)(?![\w-])
ACCOUNT	65	(?i)\b(?:account|acct\.?)(?!\w)\s*(?:(?:number|num|no\.?|id|#)\s*)?[:#]?\s*((?:[a-z]{1,4}-?)?\d[a-z0-9]{2,}(?:-[a-z0-9]+)*)(?![\w-])
LICENSE	65	(?i)\b(?:license|licence|certificate|dea)(?!\w)\s*(?:(?:number|num|no\.?|id|#)\s*)?[:#]?\s*((?:[a-z]{1,4}-?)?\d[a-z0-9]{2,}(?:-[a-z0-9]+)*)(?![\w-])
VEHICLE_SERIAL	65	(?i)\b(?:vin|plate|vehicle)(?!\w)\s*(?:(?:number|num|no\.?|id|#)\s*)?[:#]?\s*((?:[a-z]{1,4}-?)?\d[a-z0-9]{2,}(?:-[a-z0-9]+)*)(?![\w-])
DEVICE_SERIAL	65	(?i)\b(?:serial|s/n|device|udi)(?!\w)\s*(?:(?:number|num|no\.?|id|#)\s*)?[:#]?\s*((?:[a-z]{1,4}-?)?\d[a-z0-9]{2,}(?:-[a-z0-9]+)*)(?![\w-])
IP	60	(?<![\w.-])((?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)(?:\.(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)){3})(?:(?![\w.-])|\.(?![\w.-]))
EMAIL	58	(?i)(?<![\w.+%-])[a-z0-9_%+-]+(?:\.[a-z0-9_%+-]+)*@[a-z0-9](?:[a-z0-9-]*[a-z0-9])?(?:\.[a-z0-9](?:[a-z0-9-]*[a-z0-9])?)*\.[a-z]{2,24}(?![\w@-])
URL	62	(?i)(?<![\w@.-])(?:(?:https?|ftp)://|www\.)[^\s<>"']*[^\s<>"'.,;:!?)\]]
PHONE	50	(?i)(?<![\w-])(?:\+?1[-. ]?)?(?:\(\d{3}\) ?|\d{3}[-. ])\d{3}[-. ]\d{4}(?: ?(?:x|ext\.?) ?\d{1,5})?(?![\w-])
)RULES";

struct RegexRule {
  PhiClass phi_class = PhiClass::kPhone;
  int priority = 0;
  std::string pattern;
  std::shared_ptr<const re::Regex> regex;
};

struct RegexMatch {
  PhiClass phi_class = PhiClass::kPhone;
  std::size_t start = 0;  // scalar offsets into the raw text, end exclusive
  std::size_t end = 0;
  std::string text;
  int priority = 0;

  friend bool operator==(const RegexMatch&, const RegexMatch&) = default;
};

inline RegexRule make_rule(PhiClass phi_class, int priority, std::string pattern) {
  auto regex = std::make_shared<const re::Regex>(pattern);
  return {phi_class, priority, std::move(pattern), std::move(regex)};
}

// One rule per line: CLASS <TAB> PRIORITY <TAB> PATTERN. Blank lines and
// lines starting with '#' are skipped.
inline std::vector<RegexRule> parse_rules(std::string_view tsv) {
  std::vector<RegexRule> rules;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw DataError("rules: expected CLASS<TAB>PRIORITY<TAB>PATTERN", line_no);
    const auto cls = labels::parse_phi_class(line.substr(0, t1));
    if (!cls) throw DataError("rules: unknown class '" + line.substr(0, t1) + "'", line_no);
    const std::string prio = line.substr(t1 + 1, t2 - t1 - 1);
    int priority = 0;
    const auto [ptr, ec] = std::from_chars(prio.data(), prio.data() + prio.size(), priority);
    if (ec != std::errc() || ptr != prio.data() + prio.size()) {
      throw DataError("rules: bad priority '" + prio + "'", line_no);
    }
    const std::string pattern = line.substr(t2 + 1);
    if (pattern.empty()) throw DataError("rules: empty pattern", line_no);
    try {
      rules.push_back(make_rule(*cls, priority, pattern));
    } catch (const re::RegexError& e) {
      throw DataError(std::string("rules: ") + e.what(), line_no);
    }
  }
  if (rules.empty()) throw DataError("rules: no rules defined");
  return rules;
}

inline std::vector<RegexRule> load_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open rules file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_rules(buf.str());
}

inline std::vector<RegexRule> default_rules() {
  static const std::vector<RegexRule> rules = parse_rules(kDefaultRulesTsv);
  return rules;
}

// Runs every rule over the text. Candidates are taken in order of priority,
// then leftmost, then longest; a candidate overlapping an accepted one is
// dropped. The result is sorted by start offset.
inline std::vector<RegexMatch> scan(std::string_view raw, const std::vector<RegexRule>& rules) {
  const std::u32string s = text::decode_utf8(raw);
  std::vector<RegexMatch> candidates;
  std::vector<std::shared_ptr<const re::Regex>> exprs;
  for (const RegexRule& rule : rules) exprs.push_back(rule.regex);
  const auto found = re::RegexSet(std::move(exprs)).find_all(std::u32string_view(s));
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const RegexRule& rule = rules[r];
    for (const re::Match& m : found[r]) {
      auto [a, b] = *m.groups[0];
      if (m.groups.size() > 1 && m.groups[1]) std::tie(a, b) = *m.groups[1];
      if (a >= b) continue;
      candidates.push_back({rule.phi_class, a, b, {}, rule.priority});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const RegexMatch& x, const RegexMatch& y) {
    if (x.priority != y.priority) return x.priority > y.priority;
    if (x.start != y.start) return x.start < y.start;
    return x.end - x.start > y.end - y.start;
  });
  // Accepted spans never overlap, so among those starting before c.end the
  // last one also ends last.
  std::map<std::size_t, RegexMatch> accepted;
  for (RegexMatch& c : candidates) {
    auto it = accepted.lower_bound(c.end);
    if (it != accepted.begin() && std::prev(it)->second.end > c.start) continue;
    accepted.emplace(c.start, std::move(c));
  }
  std::vector<RegexMatch> kept;
  kept.reserve(accepted.size());
  for (auto& [start, m] : accepted) kept.push_back(std::move(m));
  for (RegexMatch& k : kept) k.text = text::encode_utf8(std::u32string_view(s).substr(k.start, k.end - k.start));
  return kept;
}

}  // namespace phiscrub::recognizers
