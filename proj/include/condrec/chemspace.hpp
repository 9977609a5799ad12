#pragma once

// Domain types for molecules, reaction conditions and discrete reaction
// spaces, plus CSV ingestion and coarse yield labels.

#include <algorithm>
#include <array>
#include <charconv>
#include <compare>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "condrec/error.hpp"

namespace condrec {

/// A molecule identified by its SMILES string. SMILES are opaque tokens:
/// equality is exact string equality and no canonicalization happens here.
class Molecule {
 public:
  explicit Molecule(std::string smiles) : smiles_(std::move(smiles)) {
    if (smiles_.empty()) fail(Errc::EmptyInput, "molecule SMILES must be non-empty");
  }

  const std::string& smiles() const noexcept { return smiles_; }

  friend auto operator<=>(const Molecule&, const Molecule&) = default;
  friend bool operator==(const Molecule&, const Molecule&) = default;

 private:
  std::string smiles_;
};

/// Reaction roles in their fixed concatenation order.
enum class Role : std::size_t { Electrophile = 0, Nucleophile, Catalyst, Ligand, Base, Solvent };

inline constexpr std::size_t kRoleCount = 6;
inline constexpr std::array<Role, kRoleCount> kAllRoles = {Role::Electrophile, Role::Nucleophile,
                                                           Role::Catalyst,     Role::Ligand,
                                                           Role::Base,         Role::Solvent};

constexpr std::string_view role_name(Role role) {
  constexpr std::array<std::string_view, kRoleCount> names = {
      "electrophile", "nucleophile", "catalyst", "ligand", "base", "solvent"};
  return names[static_cast<std::size_t>(role)];
}

inline Role parse_role(std::string_view name) {
  for (Role r : kAllRoles) {
    if (role_name(r) == name) return r;
  }
  fail(Errc::InvalidArgument, "unknown role '" + std::string(name) + "'");
}

/// One point in the discrete reaction space; all six roles populated.
struct ReactionCondition {
  Molecule electrophile;
  Molecule nucleophile;
  std::string catalyst;
  std::string ligand;
  std::string base;
  std::string solvent;

  const std::string& value(Role role) const {
    switch (role) {
      case Role::Electrophile: return electrophile.smiles();
      case Role::Nucleophile: return nucleophile.smiles();
      case Role::Catalyst: return catalyst;
      case Role::Ligand: return ligand;
      case Role::Base: return base;
      case Role::Solvent: return solvent;
    }
    fail(Errc::InvalidArgument, "bad role");
  }

  /// Pipe-joined role values; used as a stable map/CSV key.
  std::string key() const {
    std::string out;
    for (Role r : kAllRoles) {
      if (!out.empty()) out += '|';
      out += value(r);
    }
    return out;
  }

  friend auto operator<=>(const ReactionCondition&, const ReactionCondition&) = default;
  friend bool operator==(const ReactionCondition&, const ReactionCondition&) = default;
};

inline ReactionCondition make_condition(std::string electrophile, std::string nucleophile,
                                        std::string catalyst, std::string ligand, std::string base,
                                        std::string solvent) {
  return ReactionCondition{Molecule(std::move(electrophile)), Molecule(std::move(nucleophile)),
                           std::move(catalyst),              std::move(ligand),
                           std::move(base),                  std::move(solvent)};
}

/// A condition where some roles may be unknown (std::nullopt marks "unset").
struct PartialCondition {
  std::array<std::optional<std::string>, kRoleCount> roles;

  const std::optional<std::string>& get(Role r) const { return roles[static_cast<std::size_t>(r)]; }
  std::optional<std::string>& get(Role r) { return roles[static_cast<std::size_t>(r)]; }

  PartialCondition& set(Role r, std::string v) {
    get(r) = std::move(v);
    return *this;
  }

  bool empty() const {
    for (const auto& v : roles)
      if (v) return false;
    return true;
  }

  bool complete() const {
    for (const auto& v : roles)
      if (!v) return false;
    return true;
  }

  static PartialCondition from(const ReactionCondition& c) {
    PartialCondition p;
    for (Role r : kAllRoles) p.get(r) = c.value(r);
    return p;
  }

  ReactionCondition to_condition() const {
    for (Role r : kAllRoles) {
      if (!get(r)) fail(Errc::IncompleteCondition, "role " + std::string(role_name(r)) + " is unset");
    }
    return make_condition(*get(Role::Electrophile), *get(Role::Nucleophile), *get(Role::Catalyst),
                          *get(Role::Ligand), *get(Role::Base), *get(Role::Solvent));
  }

  bool matches(const ReactionCondition& c) const {
    for (Role r : kAllRoles) {
      if (get(r) && *get(r) != c.value(r)) return false;
    }
    return true;
  }

  friend bool operator==(const PartialCondition&, const PartialCondition&) = default;
};

struct ReactionRecord {
  ReactionCondition condition;
  double yield = 0.0;
};

struct ReactantPair {
  Molecule electrophile;
  Molecule nucleophile;
  friend bool operator==(const ReactantPair&, const ReactantPair&) = default;
};

/// Discrete reaction space. The reactant pairs form a single coupled axis.
struct ReactionSpace {
  std::vector<ReactantPair> reactant_pairs;
  std::vector<std::string> catalysts;
  std::vector<std::string> ligands;
  std::vector<std::string> bases;
  std::vector<std::string> solvents;

  std::size_t size() const {
    return reactant_pairs.size() * catalysts.size() * ligands.size() * bases.size() *
           solvents.size();
  }

  const std::vector<std::string>* axis(Role r) const {
    switch (r) {
      case Role::Catalyst: return &catalysts;
      case Role::Ligand: return &ligands;
      case Role::Base: return &bases;
      case Role::Solvent: return &solvents;
      default: return nullptr;
    }
  }
  std::vector<std::string>* axis(Role r) {
    return const_cast<std::vector<std::string>*>(std::as_const(*this).axis(r));
  }

  bool contains(const ReactionCondition& c) const {
    bool pair_ok = false;
    for (const auto& p : reactant_pairs) {
      if (p.electrophile == c.electrophile && p.nucleophile == c.nucleophile) {
        pair_ok = true;
        break;
      }
    }
    if (!pair_ok) return false;
    for (Role r : {Role::Catalyst, Role::Ligand, Role::Base, Role::Solvent}) {
      const auto& values = *axis(r);
      if (std::find(values.begin(), values.end(), c.value(r)) == values.end()) return false;
    }
    return true;
  }

  friend bool operator==(const ReactionSpace&, const ReactionSpace&) = default;
};

inline void check_axes(const ReactionSpace& space) {
  if (space.reactant_pairs.empty()) fail(Errc::EmptyAxis, "reactant_pairs axis is empty");
  for (Role r : {Role::Catalyst, Role::Ligand, Role::Base, Role::Solvent}) {
    if (space.axis(r)->empty()) fail(Errc::EmptyAxis, std::string(role_name(r)) + " axis is empty");
  }
}

/// All conditions of the space; pairs vary slowest, then catalyst, ligand,
/// base and solvent (fastest).
inline std::vector<ReactionCondition> enumerate_space(const ReactionSpace& space) {
  check_axes(space);
  std::vector<ReactionCondition> out;
  out.reserve(space.size());
  for (const auto& pair : space.reactant_pairs)
    for (const auto& cat : space.catalysts)
      for (const auto& lig : space.ligands)
        for (const auto& base : space.bases)
          for (const auto& solv : space.solvents)
            out.push_back(ReactionCondition{pair.electrophile, pair.nucleophile, cat, lig, base, solv});
  return out;
}

/// Collapses every fixed role to a singleton axis. Fixing a reactant keeps
/// only the pairs that contain it.
inline ReactionSpace restrict_space(const ReactionSpace& space, const PartialCondition& fixed) {
  ReactionSpace out = space;
  for (Role r : {Role::Electrophile, Role::Nucleophile}) {
    if (!fixed.get(r)) continue;
    const std::string& want = *fixed.get(r);
    std::vector<ReactantPair> kept;
    for (const auto& p : out.reactant_pairs) {
      const Molecule& m = r == Role::Electrophile ? p.electrophile : p.nucleophile;
      if (m.smiles() == want) kept.push_back(p);
    }
    if (kept.empty())
      fail(Errc::UnknownCandidate, std::string(role_name(r)) + " '" + want + "' is not in the space");
    out.reactant_pairs = std::move(kept);
  }
  for (Role r : {Role::Catalyst, Role::Ligand, Role::Base, Role::Solvent}) {
    if (!fixed.get(r)) continue;
    const std::string& want = *fixed.get(r);
    auto& values = *out.axis(r);
    if (std::find(values.begin(), values.end(), want) == values.end())
      fail(Errc::UnknownCandidate, std::string(role_name(r)) + " '" + want + "' is not on its axis");
    values = {want};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Coarse labels

enum class CoarseLabel { Low = 0, Medium = 1, High = 2 };

constexpr std::string_view label_name(CoarseLabel l) {
  switch (l) {
    case CoarseLabel::Low: return "low";
    case CoarseLabel::Medium: return "medium";
    case CoarseLabel::High: return "high";
  }
  return "?";
}

struct YieldThresholds {
  double t_low = 1.0 / 3.0;
  double t_high = 2.0 / 3.0;

  void validate() const {
    if (!(0.0 < t_low && t_low < t_high && t_high < 1.0))
      fail(Errc::InvalidArgument, "thresholds must satisfy 0 < t_low < t_high < 1");
  }
};

/// Half-open bins; a yield sitting exactly on a threshold takes the upper class.
inline CoarseLabel assign_coarse_label(double yield, const YieldThresholds& thresholds = {}) {
  thresholds.validate();
  if (!(yield >= 0.0 && yield <= 1.0))
    fail(Errc::OutOfRange, "yield " + std::to_string(yield) + " outside [0,1]");
  if (yield < thresholds.t_low) return CoarseLabel::Low;
  if (yield < thresholds.t_high) return CoarseLabel::Medium;
  return CoarseLabel::High;
}

// ---------------------------------------------------------------------------
// CSV dataset

inline constexpr std::array<std::string_view, 7> kDatasetColumns = {
    "electrophile_smiles", "nucleophile_smiles", "catalyst", "ligand", "base", "solvent", "yield"};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// Shortest decimal text that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_real(std::string_view text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    fail(Errc::SchemaError, "not a number: '" + std::string(text) + "'");
  return v;
}

/// Reads the reaction dataset CSV. Columns are located by header name.
inline std::vector<ReactionRecord> ingest_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(Errc::SchemaError, "missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  std::array<std::size_t, kDatasetColumns.size()> col{};
  for (std::size_t c = 0; c < kDatasetColumns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), kDatasetColumns[c]);
    if (it == header.end())
      fail(Errc::SchemaError, "missing column '" + std::string(kDatasetColumns[c]) + "'");
    col[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<ReactionRecord> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      fail(Errc::SchemaError, "row " + std::to_string(row) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(header.size()));
    const double y = parse_real(fields[col[6]]);
    if (!(y >= 0.0 && y <= 1.0))
      fail(Errc::OutOfRange, "row " + std::to_string(row) + ": yield " + fields[col[6]] +
                                 " outside [0,1]");
    records.push_back({make_condition(fields[col[0]], fields[col[1]], fields[col[2]], fields[col[3]],
                                      fields[col[4]], fields[col[5]]),
                       y});
    ++row;
  }
  return records;
}

inline std::vector<ReactionRecord> ingest_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open dataset '" + path + "'");
  return ingest_dataset(in);
}

inline void write_dataset(std::ostream& out, const std::vector<ReactionRecord>& records) {
  for (std::size_t c = 0; c < kDatasetColumns.size(); ++c) {
    out << (c ? "," : "") << kDatasetColumns[c];
  }
  out << '\n';
  for (const auto& rec : records) {
    for (Role r : kAllRoles) out << detail::csv_escape(rec.condition.value(r)) << ',';
    out << format_real(rec.yield) << '\n';
  }
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const ReactionCondition& c) {
  j = nlohmann::json::object();
  for (Role r : kAllRoles) j[std::string(role_name(r))] = c.value(r);
}

inline void from_json(const nlohmann::json& j, PartialCondition& p) {
  p = PartialCondition{};
  for (Role r : kAllRoles) {
    auto it = j.find(std::string(role_name(r)));
    if (it != j.end() && !it->is_null()) p.get(r) = it->get<std::string>();
  }
}

inline void to_json(nlohmann::json& j, const PartialCondition& p) {
  j = nlohmann::json::object();
  for (Role r : kAllRoles) {
    if (p.get(r)) j[std::string(role_name(r))] = *p.get(r);
  }
}

inline ReactionCondition condition_from_json(const nlohmann::json& j) {
  return j.get<PartialCondition>().to_condition();
}

inline void to_json(nlohmann::json& j, const ReactionSpace& s) {
  j = nlohmann::json::object();
  auto pairs = nlohmann::json::array();
  for (const auto& p : s.reactant_pairs)
    pairs.push_back({p.electrophile.smiles(), p.nucleophile.smiles()});
  j["reactant_pairs"] = pairs;
  j["catalysts"] = s.catalysts;
  j["ligands"] = s.ligands;
  j["bases"] = s.bases;
  j["solvents"] = s.solvents;
}

inline void from_json(const nlohmann::json& j, ReactionSpace& s) {
  try {
    s = ReactionSpace{};
    for (const auto& p : j.at("reactant_pairs"))
      s.reactant_pairs.push_back(
          {Molecule(p.at(0).get<std::string>()), Molecule(p.at(1).get<std::string>())});
    s.catalysts = j.at("catalysts").get<std::vector<std::string>>();
    s.ligands = j.at("ligands").get<std::vector<std::string>>();
    s.bases = j.at("bases").get<std::vector<std::string>>();
    s.solvents = j.at("solvents").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::SchemaError, std::string("reaction space: ") + e.what());
  }
}

}  // namespace condrec
