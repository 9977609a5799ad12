#pragma once

// Molecule encoders and the six-role reaction concatenation.

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "condrec/chemspace.hpp"
#include "condrec/error.hpp"
#include "condrec/rng.hpp"

namespace condrec {

/// Maps a molecule (or a reagent name, treated the same way) to a fixed-length
/// real vector. Implementations must be deterministic.
class MoleculeEncoder {
 public:
  virtual ~MoleculeEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> encode(std::string_view text) const = 0;
  /// Identifies the feature layout; persisted alongside trained models.
  virtual std::uint64_t layout_hash() const = 0;

  std::vector<double> encode(const Molecule& m) const { return encode(m.smiles()); }
};

/// Token table of the built-in count encoder. Index i of the descriptor counts
/// occurrences of entry i. "Cl" and "Br" are read greedily before single
/// characters; "<digit>" matches any ring-closure digit, "<upper>" any other
/// uppercase letter and "<other>" every remaining non-space character.
inline constexpr std::array<std::string_view, 32> kSmilesTokenTable = {
    "C",  "c",  "N", "n", "O", "o", "S", "s", "P", "p", "F", "Cl",      "Br",      "I", "B", "H",
    "=",  "#",  "-", "/", "\\", "(", ")", "[", "]", "+", "@", "<digit>", "%", ".", "<upper>",
    "<other>"};

class TokenCountEncoder final : public MoleculeEncoder {
 public:
  static constexpr std::size_t kDefaultDim = kSmilesTokenTable.size();

  explicit TokenCountEncoder(std::size_t dim = kDefaultDim) : dim_(dim) {
    if (dim_ < kSmilesTokenTable.size())
      fail(Errc::InvalidArgument, "encoder dimension must be >= " +
                                      std::to_string(kSmilesTokenTable.size()));
  }

  std::size_t dim() const override { return dim_; }

  /// Index into kSmilesTokenTable of every token in `text`; whitespace is skipped.
  static std::vector<std::size_t> tokenize(std::string_view text) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < text.size(); ++i) {
      const char c = text[i];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') continue;
      if (i + 1 < text.size()) {
        const std::string_view two = text.substr(i, 2);
        if (two == "Cl" || two == "Br") {
          out.push_back(two == "Cl" ? 11 : 12);
          ++i;
          continue;
        }
      }
      out.push_back(single_char_index(c));
    }
    return out;
  }

  std::vector<double> encode(std::string_view text) const override {
    if (text.empty()) fail(Errc::EmptyInput, "cannot encode an empty SMILES");
    std::vector<double> v(dim_, 0.0);
    for (std::size_t idx : tokenize(text)) v[idx] += 1.0;
    return v;
  }

  std::uint64_t layout_hash() const override {
    std::string joined = "count-encoder/" + std::to_string(dim_);
    for (auto t : kSmilesTokenTable) {
      joined += '\x1f';
      joined += t;
    }
    return fnv1a64(joined);
  }

 private:
  static std::size_t single_char_index(char c) {
    for (std::size_t i = 0; i < kSmilesTokenTable.size(); ++i) {
      const auto& t = kSmilesTokenTable[i];
      if (t.size() == 1 && t[0] == c) return i;
    }
    if (c >= '0' && c <= '9') return 27;
    if (c >= 'A' && c <= 'Z') return 30;
    return 31;
  }

  std::size_t dim_;
};

/// Concatenation of the six role encodings in fixed role order.
struct ReactionEncoding {
  std::vector<double> values;
  std::size_t segment_dim = 0;

  std::vector<double> segment(Role r) const {
    const auto s = static_cast<std::size_t>(r);
    return {values.begin() + static_cast<std::ptrdiff_t>(s * segment_dim),
            values.begin() + static_cast<std::ptrdiff_t>((s + 1) * segment_dim)};
  }
};

inline ReactionEncoding encode_reaction(const ReactionCondition& condition,
                                        const MoleculeEncoder& encoder) {
  ReactionEncoding out;
  out.segment_dim = encoder.dim();
  out.values.reserve(kRoleCount * out.segment_dim);
  for (Role r : kAllRoles) {
    const auto& text = condition.value(r);
    if (text.empty()) fail(Errc::IncompleteCondition, std::string(role_name(r)) + " is empty");
    const auto seg = encoder.encode(text);
    out.values.insert(out.values.end(), seg.begin(), seg.end());
  }
  return out;
}

inline ReactionEncoding encode_reaction(const PartialCondition& condition,
                                        const MoleculeEncoder& encoder) {
  return encode_reaction(condition.to_condition(), encoder);
}

}  // namespace condrec
