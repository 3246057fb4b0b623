#include <catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <random>

#include "phiscrub/pipeline/pipeline.hpp"
#include "support/overfit.hpp"

using namespace phiscrub;
using namespace phiscrub::pipeline;
using labels::PhiClass;

namespace {

PhiSpan span(PhiClass c, std::size_t a, std::size_t b, std::string src) { return {c, a, b, std::move(src), {}}; }

bool sorted_disjoint(const std::vector<PhiSpan>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i].start < v[i - 1].end) return false;
  }
  return true;
}

Scrubber overfit_scrubber(ScrubConfig cfg = {}) {
  const auto& m = overfit::models();
  return Scrubber(std::move(cfg), m.bilstm, m.idcnn);
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "phiscrub_pipeline_test";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("merge examples", "[pipeline][merge]") {
  const std::vector<PhiSpan> disjoint{span(PhiClass::kName, 0, 4, "bilstm"), span(PhiClass::kDate, 10, 14, "idcnn")};
  CHECK(merge_spans(disjoint) == disjoint);

  auto out = merge_spans({span(PhiClass::kName, 10, 15, "bilstm"), span(PhiClass::kName, 10, 18, "idcnn")});
  REQUIRE(out.size() == 1);
  CHECK(out[0] == span(PhiClass::kName, 10, 18, "idcnn"));

  out = merge_spans({span(PhiClass::kName, 3, 9, "idcnn"), span(PhiClass::kName, 3, 9, "bilstm")});
  REQUIRE(out.size() == 1);
  CHECK(out[0].source == "bilstm+idcnn");

  out = merge_spans({span(PhiClass::kAddress, 0, 30, "idcnn"), span(PhiClass::kPhone, 5, 17, "regex")});
  REQUIRE(out.size() == 1);
  CHECK(out[0].source == "regex");

  out = merge_spans({span(PhiClass::kName, 0, 5, "bilstm"), span(PhiClass::kName, 3, 8, "bilstm")});
  REQUIRE(out.size() == 1);
  CHECK(out[0].start == 0);

  out = merge_spans({span(PhiClass::kName, 0, 5, "bilstm"), span(PhiClass::kAddress, 0, 5, "idcnn")});
  REQUIRE(out.size() == 1);
  CHECK(out[0].phi_class == PhiClass::kAddress);

  out = merge_spans({span(PhiClass::kName, 10, 15, "bilstm"), span(PhiClass::kName, 10, 18, "idcnn")},
                    {"bilstm", "idcnn", "regex"});
  CHECK(out[0].source == "bilstm");
  CHECK(merge_spans({}).empty());
}

TEST_CASE("merge output is sorted, disjoint and order independent", "[pipeline][merge][property]") {
  std::mt19937 gen(3);
  const std::vector<std::string> sources{"bilstm", "idcnn", "regex"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<PhiSpan> in;
    const int n = static_cast<int>(gen() % 12);
    for (int i = 0; i < n; ++i) {
      const std::size_t a = gen() % 40, len = 1 + gen() % 8;
      in.push_back(span(static_cast<PhiClass>(gen() % 3), a, a + len, sources[gen() % 3]));
    }
    const auto out = merge_spans(in);
    CHECK(sorted_disjoint(out));
    for (const auto& s : out) {
      CHECK(std::any_of(in.begin(), in.end(), [&](const PhiSpan& x) {
        return x.start == s.start && x.end == s.end && x.phi_class == s.phi_class;
      }));
    }
    // Every input overlaps some output (nothing is silently dropped).
    for (const auto& x : in) {
      CHECK(std::any_of(out.begin(), out.end(), [&](const PhiSpan& s) { return s.start < x.end && x.start < s.end; }));
    }
    std::shuffle(in.begin(), in.end(), gen);
    CHECK(merge_spans(in) == out);
  }
}

TEST_CASE("tagger spans are trimmed of bare punctuation", "[pipeline]") {
  using labels::EntityCategory;
  using labels::EntitySpan;
  const std::vector<std::string> w{";", "(", "Boston", ",", "MA", ")", "--", "03/09/2021", "¿"};
  const std::vector<EntitySpan> in{{0, 0, EntityCategory::kGpe},  {1, 5, EntityCategory::kGpe},
                                   {6, 6, EntityCategory::kDate}, {6, 7, EntityCategory::kDate},
                                   {8, 8, EntityCategory::kGpe},  {2, 3, EntityCategory::kGpe}};
  const std::vector<EntitySpan> want{{2, 4, EntityCategory::kGpe}, {7, 7, EntityCategory::kDate},
                                     {2, 2, EntityCategory::kGpe}};
  CHECK(trim_punctuation(in, w) == want);
  CHECK_THROWS_AS(trim_punctuation({{3, 9, EntityCategory::kGpe}}, w), InvalidArgument);
}

TEST_CASE("redact examples", "[pipeline][redact]") {
  auto r = redact("nothing here", {});
  CHECK(r.text == "nothing here");
  CHECK(r.report.spans.empty());

  r = redact("SSN 123-45-6789.", {span(PhiClass::kSsn, 4, 15, "regex")});
  CHECK(r.text == "SSN [**PHI-SSN**].");
  REQUIRE(r.report.spans.size() == 1);
  CHECK(r.report.spans[0].text == "123-45-6789");
  CHECK(r.report.spans[0].start == 4);

  r = redact("JohnSmith", {span(PhiClass::kName, 0, 4, "bilstm"), span(PhiClass::kName, 4, 9, "idcnn")});
  CHECK(r.text == "[**PHI-NAME**][**PHI-NAME**]");
  CHECK(r.report.spans.size() == 2);

  r = redact("caf\xc3\xa9 Zo\xc3\xab ok", {span(PhiClass::kName, 5, 8, "bilstm")}, "<{CLASS}>");
  CHECK(r.text == "caf\xc3\xa9 <NAME> ok");
  CHECK(r.report.spans[0].text == "Zo\xc3\xab");

  CHECK_THROWS_AS(redact("abcdefgh", {span(PhiClass::kName, 0, 4, "x"), span(PhiClass::kName, 3, 6, "x")}),
                  InvalidArgument);
  CHECK_THROWS_AS(redact("abc", {span(PhiClass::kName, 1, 9, "x")}), InvalidArgument);
  CHECK_THROWS_AS(redact("abc", {span(PhiClass::kName, 2, 2, "x")}), InvalidArgument);
}

TEST_CASE("redaction preserves all non-span text", "[pipeline][redact][property]") {
  std::mt19937 gen(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    const std::size_t n = 1 + gen() % 60;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<char>('a' + gen() % 26);
    std::vector<PhiSpan> spans;
    for (std::size_t pos = gen() % 5; pos + 1 < n; pos += 1 + gen() % 6) {
      const std::size_t end = std::min(n, pos + 1 + gen() % 5);
      spans.push_back(span(static_cast<PhiClass>(gen() % labels::kNumPhiClasses), pos, end, "regex"));
      pos = end;
    }
    const auto r = redact(s, spans);
    std::string kept, rebuilt;
    std::size_t cursor = 0;
    for (const auto& sp : spans) {
      kept += s.substr(cursor, sp.start - cursor);
      rebuilt += s.substr(cursor, sp.start - cursor) + render_placeholder(kDefaultPlaceholder, sp.phi_class);
      cursor = sp.end;
    }
    kept += s.substr(cursor);
    rebuilt += s.substr(cursor);
    CHECK(r.text == rebuilt);
    CHECK(r.report.spans.size() == spans.size());
    std::size_t total = 0;
    for (const auto& [key, count] : r.report.counts) total += count;
    CHECK(total == spans.size());
  }
}

TEST_CASE("regex-only scrubbing", "[pipeline][scrub]") {
  ScrubConfig cfg;
  const Scrubber s(cfg);
  CHECK(s.detect("Nothing to see.").empty());

  const auto spans = s.detect("Contact john.doe@x.com today.");
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].phi_class == PhiClass::kEmail);
  CHECK(spans[0].source == "regex");
  CHECK(spans[0].text == "john.doe@x.com");

  const auto empty = s.scrub("");
  CHECK(empty.text.empty());
  CHECK(empty.report.spans.empty());

  const auto r = s.scrub("Call 555-123-4567 re MRN 48213377, SSN 123-45-6789.", "note-1");
  CHECK(r.text == "Call [**PHI-PHONE**] re MRN [**PHI-MRN**], SSN [**PHI-SSN**].");
  CHECK(r.report.document_id == "note-1");
  CHECK(r.report.fingerprint == s.fingerprint());
  const std::string report = r.report.to_text();
  CHECK(report.find("# fingerprint\t" + s.fingerprint()) != std::string::npos);
  CHECK(report.find("PHONE\t5\t17\tregex\n") != std::string::npos);
  CHECK(report.find("# count\tMRN\tregex\t1\n") != std::string::npos);

  CHECK(scrub("a@b.com", cfg).text == "[**PHI-EMAIL**]");
}

TEST_CASE("scrub config validation and fingerprint", "[pipeline][config]") {
  ScrubConfig none;
  none.detectors.regex = false;
  CHECK_THROWS_AS(Scrubber(none), InvalidArgument);
  ScrubConfig bad_prec;
  bad_prec.precedence = {"regex"};
  CHECK_THROWS_AS(Scrubber(bad_prec), InvalidArgument);
  ScrubConfig empty_placeholder;
  empty_placeholder.placeholder.clear();
  CHECK_THROWS_AS(Scrubber(empty_placeholder), InvalidArgument);

  ScrubConfig a, b;
  b.placeholder = "<{CLASS}>";
  CHECK(Scrubber(a).fingerprint() == Scrubber(a).fingerprint());
  CHECK(Scrubber(a).fingerprint() != Scrubber(b).fingerprint());
  CHECK(Scrubber(a).fingerprint().size() == 16);
  CHECK(Scrubber(b).scrub("x 555-123-4567").text == "x <PHONE>");
}

TEST_CASE("model and resource loading errors", "[pipeline][config]") {
  const auto dir = temp_dir();
  const std::string idcnn_path = (dir / "idcnn.model").string();
  taggers::save_model(idcnn_path, overfit::models().idcnn);

  ScrubConfig wrong;
  wrong.model_bilstm = idcnn_path;
  try {
    Scrubber{wrong};
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(idcnn_path) != std::string::npos);
    CHECK(std::string(e.what()).find("expected bilstm") != std::string::npos);
  }

  ScrubConfig missing;
  missing.model_idcnn = (dir / "nope.model").string();
  try {
    Scrubber{missing};
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("nope.model") != std::string::npos);
  }

  ScrubConfig from_file;
  from_file.model_idcnn = idcnn_path;
  from_file.rules_path = std::string(PHISCRUB_DATA_DIR) + "/rules.tsv";
  from_file.dict_path = std::string(PHISCRUB_DATA_DIR) + "/medical_terms.txt";
  from_file.stems_path = std::string(PHISCRUB_DATA_DIR) + "/drug_stems.txt";
  const Scrubber loaded(from_file);
  ScrubConfig only_idcnn;
  only_idcnn.detectors.bilstm = false;
  const Scrubber in_memory(only_idcnn, std::nullopt, overfit::models().idcnn);
  CHECK(loaded.fingerprint() == in_memory.fingerprint());

  ScrubConfig bad_rules;
  bad_rules.rules_path = (dir / "missing_rules.tsv").string();
  CHECK_THROWS_AS(Scrubber{bad_rules}, DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("overfit taggers find a trained name", "[pipeline][scrub][neural]") {
  const auto& m = overfit::models();
  const Scrubber s = overfit_scrubber();
  std::string name;
  for (const auto& r : m.raw) {
    for (const auto& p : r.spans) {
      const std::string t = r.text.substr(p.start, p.end - p.start);
      if (p.category == labels::EntityCategory::kPerson && t.find(' ') != std::string::npos) name = t;
    }
    if (!name.empty()) break;
  }
  REQUIRE_FALSE(name.empty());
  const std::string note = name + " reports chest pain since March 3, 2019.";
  const auto detected = s.detect(note);
  CHECK(std::count_if(detected.begin(), detected.end(), [&](const PhiSpan& p) {
          return p.phi_class == PhiClass::kName && p.text == name;
        }) == 2);
  const auto r = s.scrub(note);
  REQUIRE(!r.report.spans.empty());
  CHECK(r.report.spans[0].text == name);
  CHECK(r.report.spans[0].source == "bilstm+idcnn");
  CHECK(r.text.rfind("[**PHI-NAME**] reports chest pain since ", 0) == 0);
}

TEST_CASE("overfit end-to-end note", "[pipeline][scrub][neural]") {
  const auto& m = overfit::models();
  const Scrubber s = overfit_scrubber();
  // Training sentences with their planted spans, plus regex identifiers.
  std::string note;
  std::vector<std::pair<std::string, PhiClass>> expected;
  std::size_t used = 0;
  for (const auto& r : m.raw) {
    if (r.spans.size() < 2 || used == 2) continue;
    for (const auto& p : r.spans) {
      const auto phi = labels::map_category_to_phi(p.category, labels::ModelId::kIdCnn);
      if (phi) expected.push_back({r.text.substr(p.start, p.end - p.start), *phi});
    }
    note += r.text + "\n";
    ++used;
  }
  note += "Phone 555-234-5678. Email jane.roe@example.org. MRN 77112233.\n";
  expected.push_back({"555-234-5678", PhiClass::kPhone});
  expected.push_back({"jane.roe@example.org", PhiClass::kEmail});
  expected.push_back({"77112233", PhiClass::kMrn});

  const auto r = s.scrub(note, "e2e");
  INFO(r.text);
  CHECK(r.report.spans.size() == expected.size());
  for (const auto& [surface, cls] : expected) {
    INFO(surface);
    CHECK(std::any_of(r.report.spans.begin(), r.report.spans.end(),
                      [&](const PhiSpan& p) { return p.text == surface && p.phi_class == cls; }));
    CHECK(r.text.find(surface) == std::string::npos);
  }
}

TEST_CASE("medical terms survive and scrubbing is idempotent", "[pipeline][scrub][neural]") {
  const Scrubber s = overfit_scrubber();
  const auto clean = s.scrub("Patient has Parkinson's disease.");
  CHECK(clean.report.spans.empty());
  CHECK(clean.text == "Patient has Parkinson's disease.");

  // Regex detectors: a second pass finds nothing.
  const Scrubber rx{ScrubConfig{}};
  for (const auto& r : overfit::models().raw) {
    const auto once = rx.scrub(r.text + " Call 555-123-4567, fax 555-222-3333, SSN 123-45-6789, www.x.org.");
    const auto twice = rx.scrub(once.text);
    INFO(once.text);
    CHECK(twice.report.spans.empty());
    CHECK(twice.text == once.text);
  }
  // With taggers: existing placeholders are never part of a new span.
  for (const auto& r : overfit::models().raw) {
    const auto once = s.scrub(r.text);
    const std::u32string u = text::decode_utf8(once.text);
    std::vector<std::pair<std::size_t, std::size_t>> holders;
    for (std::size_t k = 0; k < labels::kNumPhiClasses; ++k) {
      const auto p = text::decode_utf8(render_placeholder(kDefaultPlaceholder, static_cast<PhiClass>(k)));
      for (auto pos = u.find(p); pos != std::u32string::npos; pos = u.find(p, pos + 1)) holders.push_back({pos, pos + p.size()});
    }
    INFO(once.text);
    for (const auto& sp : s.detect(once.text)) {
      for (const auto& [a, b] : holders) CHECK((sp.end <= a || sp.start >= b));
    }
  }
  const std::string all_placeholders = [] {
    std::string t;
    for (std::size_t k = 0; k < labels::kNumPhiClasses; ++k) {
      t += render_placeholder(kDefaultPlaceholder, static_cast<PhiClass>(k)) + " ";
    }
    return t;
  }();
  CHECK(s.detect(all_placeholders).empty());
}

TEST_CASE("disambiguation can be switched off", "[pipeline][scrub][neural]") {
  const auto& m = overfit::models();
  ScrubConfig cfg;
  cfg.detectors.regex = false;
  const Scrubber with(cfg, m.bilstm, m.idcnn);
  const std::vector<std::string> words{"Parkinson"};
  // Spans the taggers report on a medical word are removed only by the filter.
  const std::string note = "Seen by Dr. Parkinson at Mercy Hospital in Boston, Ohio.";
  cfg.detectors.disambiguation = false;
  const Scrubber without(cfg, m.bilstm, m.idcnn);
  const auto a = with.detect(note), b = without.detect(note);
  CHECK(a.size() <= b.size());
  for (const auto& p : a) CHECK(std::find(b.begin(), b.end(), p) != b.end());
  CHECK(std::none_of(a.begin(), a.end(), [](const PhiSpan& p) { return p.text == "Parkinson"; }));
}

TEST_CASE("batch scrubbing matches sequential", "[pipeline][concurrency]") {
  const Scrubber s = overfit_scrubber();
  std::vector<std::string> docs;
  for (const auto& r : overfit::models().raw) docs.push_back(r.text + " Call 555-123-4567.");
  const auto batch = s.scrub_batch(docs, {}, 4);
  REQUIRE(batch.size() == docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto seq = s.scrub(docs[i], std::to_string(i));
    CHECK(batch[i].text == seq.text);
    CHECK(batch[i].report.to_text() == seq.report.to_text());
  }
  CHECK_THROWS_AS(s.scrub_batch(docs, {"only-one"}), InvalidArgument);
}
