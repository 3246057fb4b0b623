#pragma once

// Medical-term filter for neural NER spans: fuzzy dictionary lookup,
// exact abbreviations and drug-name stems.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "phiscrub/error.hpp"
#include "phiscrub/text/unicode.hpp"

namespace phiscrub::disambiguation {

// Shipped defaults; identical to data/medical_terms.txt and data/drug_stems.txt.
inline constexpr std::string_view kDefaultDictionary = R"DICT(# Medical dictionary: one term per line; "|ABBR" marks an exact-case abbreviation.
parkinson
alzheimer
crohn
hodgkin
hashimoto
raynaud
tourette
asperger
sjogren
wernicke
korsakoff
guillain
diabetes
hypertension
asthma
pneumonia
bronchitis
sepsis
anemia
leukemia
lymphoma
melanoma
carcinoma
sarcoma
arthritis
osteoporosis
hepatitis
cirrhosis
pancreatitis
appendicitis
cholecystitis
diverticulitis
colitis
gastritis
nephritis
dermatitis
psoriasis
eczema
migraine
epilepsy
dementia
schizophrenia
depression
influenza
tuberculosis
malaria
measles
rubella
varicella
shingles
syphilis
gonorrhea
chlamydia
glaucoma
cataract
hypothyroidism
hyperthyroidism
hyperlipidemia
obesity
lupus
scleroderma
fibromyalgia
emphysema
embolism
thrombosis
aneurysm
angina
arrhythmia
fibrillation
tachycardia
bradycardia
cardiomyopathy
myocarditis
endocarditis
pericarditis
neuropathy
sclerosis
dystrophy
meningitis
encephalitis
hydrocephalus
aspirin
ibuprofen
acetaminophen
metformin
insulin
lisinopril
atorvastatin
simvastatin
amlodipine
metoprolol
warfarin
heparin
prednisone
albuterol
amoxicillin
azithromycin
ciprofloxacin
doxycycline
vancomycin
furosemide
omeprazole
gabapentin
sertraline
fluoxetine
levothyroxine
morphine
oxycodone
hydrocodone
tramadol
clopidogrel
digoxin
nitroglycerin
hydralazine
mifepristone
losartan
carvedilol
spironolactone
abdomen
thorax
pelvis
femur
tibia
fibula
humerus
clavicle
scapula
sternum
vertebra
cranium
cerebellum
hippocampus
thalamus
spleen
pancreas
gallbladder
bladder
duodenum
jejunum
esophagus
stomach
trachea
bronchus
aorta
ventricle
atrium
artery
retina
cornea
cochlea
larynx
pharynx
tonsil
thyroid
adrenal
prostate
uterus
ovary
cervix
tendon
ligament
cartilage
COPD|ABBR
CHF|ABBR
HIV|ABBR
AIDS|ABBR
CAD|ABBR
CKD|ABBR
GERD|ABBR
DVT|ABBR
PE|ABBR
UTI|ABBR
ARDS|ABBR
ALS|ABBR
TIA|ABBR
CVA|ABBR
HTN|ABBR
DM|ABBR
T2DM|ABBR
ADHD|ABBR
)DICT";

inline constexpr std::string_view kDefaultStems = R"STEMS(# Drug-name stems: one per line with a leading "-".
-dralazine
-pristone
-opril
-ipril
-epril
-lapril
-napril
-sartan
-olol
-statin
-dipine
-cillin
-mycin
-floxacin
-cycline
-prazole
-tidine
-parin
-profen
-oxetine
-triptan
-setron
-gliptin
-glitazone
-coxib
-azepam
-barbital
-afil
-mab
-nib
-vir
)STEMS";

// Unit-cost edit distance over Unicode scalars.
inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(std::u32string_view(text::decode_utf8(a)), std::u32string_view(text::decode_utf8(b)));
}

// True when the strings are within one edit; linear time.
inline bool within_one_edit(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (a.size() - b.size() > 1) return false;
  std::size_t i = 0;
  while (i < b.size() && a[i] == b[i]) ++i;
  if (i == b.size()) return true;
  if (a.size() == b.size()) return a.substr(i + 1) == b.substr(i + 1);
  return a.substr(i + 1) == b.substr(i);
}

// All-caps short form: 2 to 6 characters of A-Z or 0-9, starting with a letter.
inline bool is_abbreviation(std::u32string_view w) {
  if (w.size() < 2 || w.size() > 6 || !text::is_ascii_upper(w[0])) return false;
  return std::all_of(w.begin(), w.end(), [](char32_t c) { return text::is_ascii_upper(c) || text::is_ascii_digit(c); });
}

inline std::u32string lower(std::u32string_view w) {
  std::u32string out(w);
  for (char32_t& c : out) c = text::ascii_lower(c);
  return out;
}

class MedicalDictionary {
 public:
  MedicalDictionary() = default;

  // One term per line, "TERM|ABBR" for abbreviations; '#' comments and
  // blank lines are skipped.
  static MedicalDictionary parse(std::string_view content) {
    MedicalDictionary d;
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      line = line.substr(first, line.find_last_not_of(" \t") - first + 1);
      const auto bar = line.find('|');
      if (bar == std::string::npos) {
        d.add_term(line);
      } else if (line.substr(bar) == "|ABBR" && bar > 0) {
        d.abbreviations_.insert(text::decode_utf8(line.substr(0, bar)));
      } else {
        throw DataError("dictionary: bad entry '" + line + "'", no);
      }
    }
    return d;
  }

  static MedicalDictionary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dictionary file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  static const MedicalDictionary& defaults() {
    static const MedicalDictionary d = parse(kDefaultDictionary);
    return d;
  }

  void add_term(std::string_view term) {
    std::u32string t = lower(text::decode_utf8(term));
    if (t.empty() || !terms_.insert(t).second) return;
    ordered_.push_back(t);
    buckets_[key(t[0], t.size())].push_back(t);
    tails_.insert(t.substr(1));
  }

  const std::vector<std::u32string>& terms() const noexcept { return ordered_; }
  const std::unordered_set<std::u32string>& abbreviations() const noexcept { return abbreviations_; }
  bool has_abbreviation(std::u32string_view w) const { return abbreviations_.count(std::u32string(w)) > 0; }

  // Some term within edit distance 1 of the lowercased word. Only terms
  // sharing the first character and within one of the length are compared;
  // edits touching the first character are caught by hash lookups.
  bool fuzzy_contains(std::u32string_view word) const {
    const std::u32string w = lower(word);
    if (terms_.count(w) || tails_.count(w)) return true;
    if (w.empty()) return false;
    const std::u32string rest = w.substr(1);
    if (terms_.count(rest) || tails_.count(rest)) return true;
    for (std::size_t len = w.size() > 1 ? w.size() - 1 : 1; len <= w.size() + 1; ++len) {
      const auto it = buckets_.find(key(w[0], len));
      if (it == buckets_.end()) continue;
      for (const auto& t : it->second) {
        if (within_one_edit(w, t)) return true;
      }
    }
    return false;
  }

  // Reference implementation: full scan with the plain edit distance.
  bool fuzzy_contains_naive(std::u32string_view word) const {
    const std::u32string w = lower(word);
    return std::any_of(ordered_.begin(), ordered_.end(), [&](const std::u32string& t) { return levenshtein(w, t) <= 1; });
  }

 private:
  static std::uint64_t key(char32_t first, std::size_t len) { return (static_cast<std::uint64_t>(first) << 32) | len; }

  std::unordered_set<std::u32string> terms_;
  std::vector<std::u32string> ordered_;
  std::unordered_set<std::u32string> tails_;
  std::unordered_map<std::uint64_t, std::vector<std::u32string>> buckets_;
  std::unordered_set<std::u32string> abbreviations_;
};

class DrugStemList {
 public:
  DrugStemList() = default;

  static DrugStemList parse(std::string_view content) {
    DrugStemList d;
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      line = line.substr(first, line.find_last_not_of(" \t") - first + 1);
      if (line.size() < 2 || line[0] != '-') throw DataError("stems: expected '-stem', got '" + line + "'", no);
      d.add(line.substr(1));
    }
    return d;
  }

  static DrugStemList load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open stems file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  static const DrugStemList& defaults() {
    static const DrugStemList d = parse(kDefaultStems);
    return d;
  }

  void add(std::string_view stem) {
    std::u32string s = lower(text::decode_utf8(stem));
    if (!s.empty() && std::find(stems_.begin(), stems_.end(), s) == stems_.end()) stems_.push_back(std::move(s));
  }

  const std::vector<std::u32string>& stems() const noexcept { return stems_; }

  bool matches(std::u32string_view word) const {
    const std::u32string w = lower(word);
    return std::any_of(stems_.begin(), stems_.end(), [&](const std::u32string& s) {
      return w.size() >= s.size() && std::u32string_view(w).substr(w.size() - s.size()) == s;
    });
  }

 private:
  std::vector<std::u32string> stems_;
};

inline bool is_medical_term(std::u32string_view word, const MedicalDictionary& dict, const DrugStemList& stems) {
  if (word.empty()) return false;
  if (stems.matches(word)) return true;
  if (is_abbreviation(word)) return dict.has_abbreviation(word);
  return dict.fuzzy_contains(word);
}

inline bool is_medical_term(std::string_view word, const MedicalDictionary& dict, const DrugStemList& stems) {
  return is_medical_term(std::u32string_view(text::decode_utf8(word)), dict, stems);
}

// Drops spans whose every token is a medical term. Span types expose
// start_token and end_token (inclusive).
template <typename Span>
std::vector<Span> filter_entities(const std::vector<Span>& spans, const std::vector<std::string>& words,
                                  const MedicalDictionary& dict, const DrugStemList& stems) {
  std::vector<Span> out;
  for (const Span& s : spans) {
    if (s.end_token >= words.size() || s.start_token > s.end_token) throw InvalidArgument("filter_entities: span out of range");
    bool all_medical = true;
    for (std::size_t i = s.start_token; i <= s.end_token && all_medical; ++i) {
      all_medical = is_medical_term(words[i], dict, stems);
    }
    if (!all_medical) out.push_back(s);
  }
  return out;
}

}  // namespace phiscrub::disambiguation
