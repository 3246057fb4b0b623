#pragma once

// Entity categories, the BILOU tag alphabet and PHI class routing.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phiscrub/error.hpp"

namespace phiscrub::labels {

enum class EntityCategory : std::uint8_t {
  kPerson,
  kNorp,
  kFacility,
  kOrganization,
  kGpe,
  kLocation,
  kProduct,
  kEvent,
  kWorkOfArt,
  kLaw,
  kLanguage,
  kDate,
  kTime,
  kPercent,
  kMoney,
  kQuantity,
  kOrdinal,
  kCardinal,
};

inline constexpr std::size_t kNumCategories = 18;

inline constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "PERSON", "NORP",     "FACILITY", "ORGANIZATION", "GPE",     "LOCATION",
    "PRODUCT", "EVENT",   "WORK_OF_ART", "LAW",       "LANGUAGE", "DATE",
    "TIME",   "PERCENT",  "MONEY",    "QUANTITY",     "ORDINAL", "CARDINAL"};

inline std::string_view to_string(EntityCategory c) {
  return kCategoryNames[static_cast<std::size_t>(c)];
}

// Accepts the canonical names plus the short CoNLL-2012 spellings FAC/ORG.
inline std::optional<EntityCategory> parse_category(std::string_view s) {
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    if (kCategoryNames[i] == s) return static_cast<EntityCategory>(i);
  }
  if (s == "FAC") return EntityCategory::kFacility;
  if (s == "ORG") return EntityCategory::kOrganization;
  return std::nullopt;
}

enum class Role : std::uint8_t { kB, kI, kL, kU, kO };

inline constexpr std::string_view kRoleLetters = "BILUO";

struct BilouTag {
  Role role = Role::kO;
  EntityCategory category = EntityCategory::kPerson;  // ignored when role == kO

  static BilouTag outside() { return {}; }

  friend bool operator==(const BilouTag& a, const BilouTag& b) {
    if (a.role != b.role) return false;
    return a.role == Role::kO || a.category == b.category;
  }
};

// Tag ids: 0 is O; 1 + 4*category + role for B/I/L/U.
inline constexpr std::size_t kNumTags = kNumCategories * 4 + 1;

using TagId = std::uint16_t;
using TagSequence = std::vector<TagId>;

inline constexpr TagId kOutsideTag = 0;

inline TagId tag_id(const BilouTag& t) {
  if (t.role == Role::kO) return kOutsideTag;
  return static_cast<TagId>(1 + 4 * static_cast<std::size_t>(t.category) +
                            static_cast<std::size_t>(t.role));
}

inline BilouTag tag_from_id(TagId id) {
  if (id == kOutsideTag) return BilouTag::outside();
  if (id >= kNumTags) throw InvalidArgument("tag id out of range: " + std::to_string(id));
  const std::size_t k = id - 1u;
  return {static_cast<Role>(k % 4), static_cast<EntityCategory>(k / 4)};
}

inline std::string tag_string(TagId id) {
  const BilouTag t = tag_from_id(id);
  if (t.role == Role::kO) return "O";
  std::string out(1, kRoleLetters[static_cast<std::size_t>(t.role)]);
  out += '-';
  out += to_string(t.category);
  return out;
}

inline std::optional<TagId> parse_tag(std::string_view s) {
  if (s == "O") return kOutsideTag;
  if (s.size() < 3 || s[1] != '-') return std::nullopt;
  const auto role_pos = kRoleLetters.find(s[0]);
  if (role_pos == std::string_view::npos || role_pos == 4) return std::nullopt;
  const auto cat = parse_category(s.substr(2));
  if (!cat) return std::nullopt;
  return tag_id({static_cast<Role>(role_pos), *cat});
}

struct EntitySpan {
  std::size_t start_token = 0;
  std::size_t end_token = 0;  // inclusive
  EntityCategory category = EntityCategory::kPerson;

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
  friend auto operator<=>(const EntitySpan&, const EntitySpan&) = default;
};

// Throws InvalidArgument on overlapping or out-of-range spans.
inline TagSequence encode_bilou(std::vector<EntitySpan> spans, std::size_t length) {
  TagSequence tags(length, kOutsideTag);
  std::vector<bool> used(length, false);
  for (const auto& s : spans) {
    if (s.start_token > s.end_token || s.end_token >= length) {
      throw InvalidArgument("encode_bilou: span out of range");
    }
    for (std::size_t i = s.start_token; i <= s.end_token; ++i) {
      if (used[i]) throw InvalidArgument("encode_bilou: overlapping spans");
      used[i] = true;
    }
    if (s.start_token == s.end_token) {
      tags[s.start_token] = tag_id({Role::kU, s.category});
      continue;
    }
    tags[s.start_token] = tag_id({Role::kB, s.category});
    for (std::size_t i = s.start_token + 1; i < s.end_token; ++i) {
      tags[i] = tag_id({Role::kI, s.category});
    }
    tags[s.end_token] = tag_id({Role::kL, s.category});
  }
  return tags;
}

// Inverse of encode_bilou that tolerates malformed model output:
//   - a leading I (or L) opens a group as if it were B;
//   - a group interrupted by O, B or U closes at the previous token
//     (B alone becomes a unit span, a trailing I acts as L);
//   - inside a group, the category of the group's first tag wins.
// Returned spans are sorted by start and never overlap.
inline std::vector<EntitySpan> decode_bilou(const TagSequence& tags) {
  std::vector<EntitySpan> spans;
  std::optional<EntitySpan> open;
  auto close_at = [&](std::size_t end) {
    if (!open) return;
    open->end_token = end;
    spans.push_back(*open);
    open.reset();
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const BilouTag t = tag_from_id(tags[i]);
    switch (t.role) {
      case Role::kO:
        if (open) close_at(i - 1);
        break;
      case Role::kB:
        if (open) close_at(i - 1);
        open = EntitySpan{i, i, t.category};
        break;
      case Role::kI:
        if (!open) open = EntitySpan{i, i, t.category};
        break;
      case Role::kL:
        if (!open) open = EntitySpan{i, i, t.category};
        close_at(i);
        break;
      case Role::kU:
        if (open) close_at(i - 1);
        spans.push_back({i, i, t.category});
        break;
    }
  }
  if (open) close_at(tags.size() - 1);
  return spans;
}

enum class PhiClass : std::uint8_t {
  kName,
  kAddress,
  kDate,
  kPhone,
  kFax,
  kEmail,
  kSsn,
  kMrn,
  kHealthPlanId,
  kAccount,
  kLicense,
  kVehicleSerial,
  kDeviceSerial,
  kUrl,
  kIp,
};

inline constexpr std::size_t kNumPhiClasses = 15;

inline constexpr std::array<std::string_view, kNumPhiClasses> kPhiClassNames = {
    "NAME", "ADDRESS", "DATE",    "PHONE",   "FAX",            "EMAIL",         "SSN", "MRN",
    "HEALTH_PLAN_ID", "ACCOUNT", "LICENSE", "VEHICLE_SERIAL", "DEVICE_SERIAL", "URL", "IP"};

inline std::string_view to_string(PhiClass c) { return kPhiClassNames[static_cast<std::size_t>(c)]; }

inline std::optional<PhiClass> parse_phi_class(std::string_view s) {
  for (std::size_t i = 0; i < kNumPhiClasses; ++i) {
    if (kPhiClassNames[i] == s) return static_cast<PhiClass>(i);
  }
  return std::nullopt;
}

enum class ModelId : std::uint8_t { kBiLstm, kIdCnn };

inline std::string_view to_string(ModelId m) { return m == ModelId::kBiLstm ? "bilstm" : "idcnn"; }

// Which entity categories each model is trusted to report, and as what.
class PhiRouting {
 public:
  static PhiRouting defaults() {
    PhiRouting r;
    r.set(ModelId::kBiLstm, EntityCategory::kPerson, PhiClass::kName);
    r.set(ModelId::kIdCnn, EntityCategory::kPerson, PhiClass::kName);
    r.set(ModelId::kIdCnn, EntityCategory::kGpe, PhiClass::kAddress);
    r.set(ModelId::kIdCnn, EntityCategory::kLocation, PhiClass::kAddress);
    r.set(ModelId::kIdCnn, EntityCategory::kFacility, PhiClass::kAddress);
    r.set(ModelId::kIdCnn, EntityCategory::kDate, PhiClass::kDate);
    return r;
  }

  void set(ModelId m, EntityCategory c, std::optional<PhiClass> phi) {
    if (phi) {
      table_[{m, c}] = *phi;
    } else {
      table_.erase({m, c});
    }
  }

  std::optional<PhiClass> map(EntityCategory c, ModelId m) const {
    const auto it = table_.find({m, c});
    if (it == table_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::pair<ModelId, EntityCategory>, PhiClass> table_;
};

inline std::optional<PhiClass> map_category_to_phi(EntityCategory c, ModelId source,
                                                   const PhiRouting& routing = PhiRouting::defaults()) {
  return routing.map(c, source);
}

}  // namespace phiscrub::labels
