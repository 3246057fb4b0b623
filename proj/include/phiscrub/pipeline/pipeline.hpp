#pragma once

// End-to-end scrubber: tokenize, run both taggers and the regex bank,
// filter medical terms, merge overlapping spans, redact.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "phiscrub/disambiguation/disambiguation.hpp"
#include "phiscrub/labels/bilou.hpp"
#include "phiscrub/recognizers/recognizers.hpp"
#include "phiscrub/taggers/model_io.hpp"
#include "phiscrub/text/tokenizer.hpp"

namespace phiscrub::pipeline {

using labels::ModelId;
using labels::PhiClass;

inline constexpr std::string_view kDefaultPlaceholder = "[**PHI-{CLASS}**]";
inline constexpr std::string_view kSourceBiLstm = "bilstm";
inline constexpr std::string_view kSourceIdCnn = "idcnn";
inline constexpr std::string_view kSourceRegex = "regex";

struct PhiSpan {
  PhiClass phi_class = PhiClass::kName;
  std::size_t start = 0;  // scalar offsets, end exclusive
  std::size_t end = 0;
  std::string source;  // "bilstm", "idcnn", "regex", or a '+'-joined set
  std::string text;

  std::size_t length() const noexcept { return end - start; }
  friend bool operator==(const PhiSpan&, const PhiSpan&) = default;
};

struct RedactionReport {
  std::string document_id;
  std::string fingerprint;
  std::vector<PhiSpan> spans;
  std::map<std::pair<std::string, std::string>, std::size_t> counts;  // (class, source) -> n

  std::string to_text() const {
    std::ostringstream out;
    out << "# phiscrub report\n# document\t" << document_id << "\n# fingerprint\t" << fingerprint << "\n";
    out << "# class\tstart\tend\tsource\n";
    for (const PhiSpan& s : spans) {
      out << labels::to_string(s.phi_class) << '\t' << s.start << '\t' << s.end << '\t' << s.source << '\n';
    }
    for (const auto& [key, n] : counts) out << "# count\t" << key.first << '\t' << key.second << '\t' << n << '\n';
    return out.str();
  }
};

struct ScrubResult {
  std::string text;
  RedactionReport report;
};

struct Detectors {
  bool bilstm = true;
  bool idcnn = true;
  bool regex = true;
  bool disambiguation = true;
};

struct ScrubConfig {
  std::string model_bilstm;  // empty: tagger not used
  std::string model_idcnn;
  std::string rules_path;  // empty: built-in resources
  std::string dict_path;
  std::string stems_path;
  std::string placeholder = std::string(kDefaultPlaceholder);
  Detectors detectors;
  std::vector<std::string> precedence = {"regex", "idcnn", "bilstm"};  // highest first
  labels::PhiRouting routing = labels::PhiRouting::defaults();

  bool bilstm_on() const { return detectors.bilstm && !model_bilstm.empty(); }
  bool idcnn_on() const { return detectors.idcnn && !model_idcnn.empty(); }

  void validate() const {
    if (!bilstm_on() && !idcnn_on() && !detectors.regex) throw InvalidArgument("scrub config: no detector enabled");
    if (placeholder.empty()) throw InvalidArgument("scrub config: empty placeholder template");
    for (std::string_view s : {kSourceBiLstm, kSourceIdCnn, kSourceRegex}) {
      if (std::find(precedence.begin(), precedence.end(), s) == precedence.end()) {
        throw InvalidArgument("scrub config: precedence must list " + std::string(s));
      }
    }
  }
};

// 64-bit FNV-1a.
class Fnv1a {
 public:
  Fnv1a& add(std::string_view s) {
    for (unsigned char c : s) {
      h_ ^= c;
      h_ *= 0x100000001b3ULL;
    }
    return add_sep();
  }
  std::string hex() const {
    std::ostringstream o;
    o << std::hex << std::setw(16) << std::setfill('0') << h_;
    return o.str();
  }

 private:
  Fnv1a& add_sep() {
    h_ ^= 0xff;
    h_ *= 0x100000001b3ULL;
    return *this;
  }
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

// Rank of a source under `precedence` (lower is stronger); joined sources
// take their strongest member.
inline std::size_t source_rank(std::string_view source, const std::vector<std::string>& precedence) {
  std::size_t best = precedence.size();
  std::size_t pos = 0;
  while (pos <= source.size()) {
    const auto plus = std::min(source.find('+', pos), source.size());
    const auto part = source.substr(pos, plus - pos);
    const auto it = std::find(precedence.begin(), precedence.end(), part);
    if (it != precedence.end()) best = std::min(best, static_cast<std::size_t>(it - precedence.begin()));
    pos = plus + 1;
  }
  return best;
}

inline std::string join_sources(const std::vector<std::string>& parts) {
  static const std::vector<std::string> order{"bilstm", "idcnn", "regex"};
  std::vector<std::string> sorted;
  for (const auto& p : parts) {
    std::size_t pos = 0;
    while (pos <= p.size()) {
      const auto plus = std::min(p.find('+', pos), p.size());
      sorted.push_back(p.substr(pos, plus - pos));
      pos = plus + 1;
    }
  }
  const auto key = [&](const std::string& s) {
    return static_cast<std::size_t>(std::find(order.begin(), order.end(), s) - order.begin());
  };
  std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
    return key(a) != key(b) ? key(a) < key(b) : a < b;
  });
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::string out;
  for (const auto& s : sorted) out += (out.empty() ? "" : "+") + s;
  return out;
}

// Non-overlapping subset of `spans`, sorted by start. Coextensive spans of
// one class collapse into one with joined sources; otherwise the stronger
// source wins, then the longer span, then the earlier one.
// Tagger spans lose leading/trailing tokens that contain no letter or digit;
// spans with nothing left are dropped.
inline std::vector<labels::EntitySpan> trim_punctuation(const std::vector<labels::EntitySpan>& spans,
                                                        const std::vector<std::string>& words) {
  const auto bare = [&](std::size_t i) {
    const std::u32string w = text::decode_utf8(words.at(i));
    return std::none_of(w.begin(), w.end(), [](char32_t c) { return text::is_alnum(c); });
  };
  std::vector<labels::EntitySpan> out;
  for (labels::EntitySpan e : spans) {
    if (e.end_token >= words.size() || e.start_token > e.end_token) throw InvalidArgument("trim_punctuation: bad span");
    while (e.start_token < e.end_token && bare(e.start_token)) ++e.start_token;
    while (e.end_token > e.start_token && bare(e.end_token)) --e.end_token;
    if (!bare(e.start_token)) out.push_back(e);
  }
  return out;
}

inline std::vector<PhiSpan> merge_spans(std::vector<PhiSpan> spans,
                                        const std::vector<std::string>& precedence = {"regex", "idcnn", "bilstm"}) {
  const auto stronger = [&](const PhiSpan& a, const PhiSpan& b) {
    const auto ra = source_rank(a.source, precedence), rb = source_rank(b.source, precedence);
    if (ra != rb) return ra < rb;
    if (a.length() != b.length()) return a.length() > b.length();
    if (a.start != b.start) return a.start < b.start;
    if (a.phi_class != b.phi_class) return a.phi_class < b.phi_class;
    return a.source < b.source;
  };
  std::sort(spans.begin(), spans.end(), stronger);

  std::vector<PhiSpan> unique;
  std::map<std::tuple<std::size_t, std::size_t, PhiClass>, std::size_t> by_extent;
  for (PhiSpan& s : spans) {
    const auto [it, fresh] = by_extent.try_emplace({s.start, s.end, s.phi_class}, unique.size());
    if (!fresh) {
      PhiSpan& kept = unique[it->second];
      kept.source = join_sources({kept.source, s.source});
      continue;
    }
    unique.push_back(std::move(s));
  }
  std::sort(unique.begin(), unique.end(), stronger);

  std::map<std::size_t, std::size_t> taken;  // start -> end
  std::vector<PhiSpan> out;
  for (PhiSpan& s : unique) {
    if (s.end <= s.start) continue;
    auto next = taken.lower_bound(s.start);
    if (next != taken.end() && next->first < s.end) continue;
    if (next != taken.begin() && std::prev(next)->second > s.start) continue;
    taken.emplace(s.start, s.end);
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const PhiSpan& a, const PhiSpan& b) { return a.start < b.start; });
  return out;
}

inline std::string render_placeholder(std::string_view templ, PhiClass c) {
  std::string out(templ);
  const std::string name(labels::to_string(c));
  for (auto pos = out.find("{CLASS}"); pos != std::string::npos; pos = out.find("{CLASS}", pos + name.size())) {
    out.replace(pos, 7, name);
  }
  return out;
}

// Replaces each span with the placeholder. Spans must be sorted,
// non-overlapping and inside the text.
inline ScrubResult redact(std::string_view raw, const std::vector<PhiSpan>& spans,
                          std::string_view templ = kDefaultPlaceholder, std::string document_id = {},
                          std::string fingerprint = {}) {
  const std::u32string s = text::decode_utf8(raw);
  ScrubResult r;
  r.report.document_id = std::move(document_id);
  r.report.fingerprint = std::move(fingerprint);
  std::u32string out;
  out.reserve(s.size());
  std::size_t cursor = 0;
  for (const PhiSpan& sp : spans) {
    if (sp.start >= sp.end || sp.end > s.size()) throw InvalidArgument("redact: span out of range");
    if (sp.start < cursor) throw InvalidArgument("redact: overlapping or unsorted spans (merge first)");
    out.append(s, cursor, sp.start - cursor);
    out += text::decode_utf8(render_placeholder(templ, sp.phi_class));
    cursor = sp.end;
    PhiSpan entry = sp;
    entry.text = text::encode_utf8(std::u32string_view(s).substr(sp.start, sp.end - sp.start));
    ++r.report.counts[{std::string(labels::to_string(sp.phi_class)), sp.source}];
    r.report.spans.push_back(std::move(entry));
  }
  out.append(s, cursor, std::u32string::npos);
  r.text = text::encode_utf8(out);
  return r;
}

// Blanks existing placeholders so already-scrubbed text yields nothing new.
inline std::u32string blank_placeholders(std::u32string s, std::string_view templ) {
  for (std::size_t k = 0; k < labels::kNumPhiClasses; ++k) {
    const std::u32string p = text::decode_utf8(render_placeholder(templ, static_cast<PhiClass>(k)));
    for (auto pos = s.find(p); pos != std::u32string::npos; pos = s.find(p, pos + p.size())) {
      std::fill(s.begin() + static_cast<long>(pos), s.begin() + static_cast<long>(pos + p.size()), U' ');
    }
  }
  return s;
}

inline std::string read_text_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string("cannot open ") + what + " file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Loaded models and resources; immutable and safe to share across threads.
class Scrubber {
 public:
  explicit Scrubber(ScrubConfig config) : config_(std::move(config)) {
    config_.validate();
    if (config_.bilstm_on()) bilstm_ = load_checked(config_.model_bilstm, ModelId::kBiLstm);
    if (config_.idcnn_on()) idcnn_ = load_checked(config_.model_idcnn, ModelId::kIdCnn);
    const std::string rules_text = config_.rules_path.empty() ? std::string(recognizers::kDefaultRulesTsv)
                                                              : read_text_file(config_.rules_path, "rules");
    const std::string dict_text = config_.dict_path.empty() ? std::string(disambiguation::kDefaultDictionary)
                                                            : read_text_file(config_.dict_path, "dictionary");
    const std::string stems_text = config_.stems_path.empty() ? std::string(disambiguation::kDefaultStems)
                                                              : read_text_file(config_.stems_path, "stems");
    rules_ = recognizers::parse_rules(rules_text);
    dict_ = disambiguation::MedicalDictionary::parse(dict_text);
    stems_ = disambiguation::DrugStemList::parse(stems_text);
    fingerprint_ = compute_fingerprint(rules_text, dict_text, stems_text);
  }

  // In-memory models, built-in resources unless paths are set in `config`.
  Scrubber(ScrubConfig config, std::optional<taggers::TaggerModel> bilstm, std::optional<taggers::TaggerModel> idcnn)
      : Scrubber(with_paths_cleared(config)) {
    if (bilstm && taggers::arch_of(*bilstm) != ModelId::kBiLstm) throw InvalidArgument("bilstm slot holds an idcnn model");
    if (idcnn && taggers::arch_of(*idcnn) != ModelId::kIdCnn) throw InvalidArgument("idcnn slot holds a bilstm model");
    if (config.detectors.bilstm && bilstm) bilstm_ = std::make_shared<const taggers::TaggerModel>(std::move(*bilstm));
    if (config.detectors.idcnn && idcnn) idcnn_ = std::make_shared<const taggers::TaggerModel>(std::move(*idcnn));
    config_.detectors = config.detectors;
    if (!bilstm_ && !idcnn_ && !config_.detectors.regex) throw InvalidArgument("scrub config: no detector enabled");
    fingerprint_ = compute_fingerprint(rules_text_, dict_text_, stems_text_);
  }

  const ScrubConfig& config() const noexcept { return config_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }
  const std::vector<recognizers::RegexRule>& rules() const noexcept { return rules_; }
  const disambiguation::MedicalDictionary& dictionary() const noexcept { return dict_; }
  const disambiguation::DrugStemList& stems() const noexcept { return stems_; }

  // Pre-merge spans from every enabled detector.
  std::vector<PhiSpan> detect(std::string_view raw) const {
    const std::u32string s = blank_placeholders(text::decode_utf8(raw), config_.placeholder);
    const std::string blanked = text::encode_utf8(s);
    std::vector<PhiSpan> out;
    const auto surface = [&](std::size_t a, std::size_t b) {
      return text::encode_utf8(std::u32string_view(s).substr(a, b - a));
    };
    if (bilstm_ || idcnn_) {
      const text::Document doc = text::make_document(blanked);
      for (const text::Sentence& sent : doc.sentences) {
        if (sent.tokens.empty()) continue;
        const auto words = sent.words();
        for (const auto& [model, id, name] : {std::tuple{bilstm_.get(), ModelId::kBiLstm, kSourceBiLstm},
                                              std::tuple{idcnn_.get(), ModelId::kIdCnn, kSourceIdCnn}}) {
          if (!model) continue;
          std::vector<labels::EntitySpan> spans;
          for (const auto& e : labels::decode_bilou(taggers::predict(*model, words))) {
            if (config_.routing.map(e.category, id)) spans.push_back(e);
          }
          spans = trim_punctuation(spans, words);
          if (config_.detectors.disambiguation) spans = disambiguation::filter_entities(spans, words, dict_, stems_);
          for (const auto& e : spans) {
            const std::size_t a = sent.tokens[e.start_token].start, b = sent.tokens[e.end_token].end;
            out.push_back({*config_.routing.map(e.category, id), a, b, std::string(name), surface(a, b)});
          }
        }
      }
    }
    if (config_.detectors.regex) {
      for (const auto& m : recognizers::scan(blanked, rules_)) {
        out.push_back({m.phi_class, m.start, m.end, std::string(kSourceRegex), m.text});
      }
    }
    return out;
  }

  ScrubResult scrub(std::string_view raw, std::string document_id = {}) const {
    return redact(raw, merge_spans(detect(raw), config_.precedence), config_.placeholder, std::move(document_id),
                  fingerprint_);
  }

  // Documents are independent; results keep input order.
  std::vector<ScrubResult> scrub_batch(const std::vector<std::string>& docs, const std::vector<std::string>& ids = {},
                                       unsigned threads = 0) const {
    if (!ids.empty() && ids.size() != docs.size()) throw InvalidArgument("scrub_batch: ids/docs size mismatch");
    if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(docs.size(), 1)));
    std::vector<ScrubResult> out(docs.size());
    std::vector<std::exception_ptr> errors(docs.size());
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < docs.size();) {
        try {
          out[i] = scrub(docs[i], ids.empty() ? std::to_string(i) : ids[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    return out;
  }

 private:
  static ScrubConfig with_paths_cleared(ScrubConfig c) {
    c.model_bilstm.clear();
    c.model_idcnn.clear();
    c.detectors.regex = true;  // validated again once models are attached
    return c;
  }

  static std::shared_ptr<const taggers::TaggerModel> load_checked(const std::string& path, ModelId want) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw DataError("cannot open model file: " + path);
    taggers::TaggerModel m = taggers::load_model(path);
    if (taggers::arch_of(m) != want) {
      throw DataError("model file " + path + " holds a " + std::string(labels::to_string(taggers::arch_of(m))) +
                      " model, expected " + std::string(labels::to_string(want)));
    }
    return std::make_shared<const taggers::TaggerModel>(std::move(m));
  }

  std::string compute_fingerprint(const std::string& rules, const std::string& dict, const std::string& stems) {
    rules_text_ = rules;
    dict_text_ = dict;
    stems_text_ = stems;
    Fnv1a h;
    h.add("phiscrub-config/1").add(text::kTokenizerRulesVersion);
    for (const auto* m : {bilstm_.get(), idcnn_.get()}) {
      if (!m) {
        h.add("-");
        continue;
      }
      std::ostringstream bytes;
      num::write_archive(bytes, taggers::to_archive(*m));
      h.add(bytes.str());
    }
    h.add(config_.detectors.regex ? rules : "-");
    h.add(config_.detectors.disambiguation ? dict + '\x1f' + stems : "-");
    h.add(config_.placeholder);
    for (const auto& p : config_.precedence) h.add(p);
    return h.hex();
  }

  ScrubConfig config_;
  std::shared_ptr<const taggers::TaggerModel> bilstm_;
  std::shared_ptr<const taggers::TaggerModel> idcnn_;
  std::vector<recognizers::RegexRule> rules_;
  disambiguation::MedicalDictionary dict_;
  disambiguation::DrugStemList stems_;
  std::string rules_text_, dict_text_, stems_text_;
  std::string fingerprint_;
};

// One-shot convenience over Scrubber.
inline std::vector<PhiSpan> detect(std::string_view raw, const ScrubConfig& config) { return Scrubber(config).detect(raw); }

inline ScrubResult scrub(std::string_view raw, const ScrubConfig& config, std::string document_id = {}) {
  return Scrubber(config).scrub(raw, std::move(document_id));
}

}  // namespace phiscrub::pipeline
