#pragma once

// Client interfaces for the external services the pipeline talks to, and
// deterministic in-process mocks that stand in for them.

#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "condrec/chemspace.hpp"
#include "condrec/error.hpp"
#include "condrec/rng.hpp"

namespace condrec {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

struct UsageMetrics {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double latency_ms = 0.0;
  double cost = 0.0;
};

struct LLMResponse {
  std::string text;
  UsageMetrics metrics;
};

/// Per-token prices. Cost is never hard-coded; it always comes from here or
/// from a recorded fixture.
struct Pricing {
  double prompt_per_token = 0.0;
  double completion_per_token = 0.0;

  double cost(const UsageMetrics& m) const {
    return static_cast<double>(m.prompt_tokens) * prompt_per_token +
           static_cast<double>(m.completion_tokens) * completion_per_token;
  }
};

struct GatewayConfig {
  std::string endpoint = "mock:default";  // URL, or "mock:<name>"
  int timeout_ms = 10000;
  int retry_count = 2;

  bool is_mock() const { return endpoint.rfind("mock:", 0) == 0; }
  std::string mock_name() const { return is_mock() ? endpoint.substr(5) : std::string{}; }
};

/// Runs `call` up to retry_count + 1 times. Only GatewayUnavailable failures
/// are retried; the last one is rethrown.
template <typename Fn>
auto with_retries(const GatewayConfig& config, Fn&& call) -> decltype(call()) {
  if (config.retry_count < 0) fail(Errc::InvalidArgument, "retry_count must be >= 0");
  for (int attempt = 0;; ++attempt) {
    try {
      return call();
    } catch (const Error& e) {
      if (e.code() != Errc::GatewayUnavailable || attempt >= config.retry_count) throw;
    }
  }
}

// ---------------------------------------------------------------------------
// Interfaces

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::size_t dimension() const = 0;
};

class LLMClient {
 public:
  virtual ~LLMClient() = default;
  virtual LLMResponse complete(std::string_view prompt) = 0;
};

class SimilarMoleculeProvider {
 public:
  virtual ~SimilarMoleculeProvider() = default;
  /// Most similar first, at most `limit` entries.
  virtual std::vector<Molecule> similar_molecules(const std::string& smiles, std::size_t limit) = 0;
};

class ReactionKnowledgeBase {
 public:
  virtual ~ReactionKnowledgeBase() = default;
  virtual std::optional<std::vector<PartialCondition>> lookup_exact(const std::string& smiles) const = 0;
};

// ---------------------------------------------------------------------------
// Mock embedder

/// Whitespace-delimited, lowercased tokens.
inline std::vector<std::string> bag_of_words_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

/// Hashed bag-of-words: each token adds 1 to bucket FNV-1a(token) mod K, and
/// the accumulator is L2-normalized.
class HashingEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDefaultDimension = 256;

  explicit HashingEmbedder(std::size_t dimension = kDefaultDimension) : dim_(dimension) {
    if (dim_ == 0) fail(Errc::InvalidArgument, "embedding dimension must be positive");
  }

  std::size_t bucket(std::string_view token) const { return fnv1a64(token) % dim_; }

  EmbeddingVector embed(std::string_view text) override {
    const auto tokens = bag_of_words_tokens(text);
    if (tokens.empty()) fail(Errc::EmptyInput, "text has no tokens");
    EmbeddingVector v{std::vector<double>(dim_, 0.0)};
    for (const auto& t : tokens) v.values[bucket(t)] += 1.0;
    double sq = 0.0;
    for (double x : v.values) sq += x * x;
    const double norm = std::sqrt(sq);
    for (double& x : v.values) x /= norm;
    return v;
  }

  std::size_t dimension() const override { return dim_; }

 private:
  std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Scripted LLM

enum class TranscriptMatch { Exact, Ordinal };

struct TranscriptEntry {
  TranscriptMatch match = TranscriptMatch::Ordinal;
  std::string prompt;
  std::string text;
  UsageMetrics usage;
  bool has_cost = false;
};

inline void from_json(const nlohmann::json& j, UsageMetrics& m) {
  m.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
  m.completion_tokens = j.value("completion_tokens", std::int64_t{0});
  m.latency_ms = j.value("latency_ms", 0.0);
  m.cost = j.value("cost", 0.0);
  if (m.prompt_tokens < 0 || m.completion_tokens < 0 || m.latency_ms < 0.0 || m.cost < 0.0)
    fail(Errc::SchemaError, "usage metrics must be non-negative");
}

inline void to_json(nlohmann::json& j, const UsageMetrics& m) {
  j = {{"prompt_tokens", m.prompt_tokens},
       {"completion_tokens", m.completion_tokens},
       {"latency_ms", m.latency_ms},
       {"cost", m.cost}};
}

inline std::vector<TranscriptEntry> parse_transcript(const nlohmann::json& j) {
  if (!j.is_array()) fail(Errc::SchemaError, "transcript must be a JSON array");
  std::vector<TranscriptEntry> entries;
  for (const auto& e : j) {
    TranscriptEntry entry;
    const std::string mode = e.value("match", std::string("ordinal"));
    if (mode == "exact")
      entry.match = TranscriptMatch::Exact;
    else if (mode == "ordinal")
      entry.match = TranscriptMatch::Ordinal;
    else
      fail(Errc::SchemaError, "transcript match must be 'exact' or 'ordinal', got '" + mode + "'");
    entry.prompt = e.value("prompt", std::string{});
    entry.text = e.value("text", std::string{});
    if (auto u = e.find("usage"); u != e.end()) {
      entry.usage = u->get<UsageMetrics>();
      entry.has_cost = u->contains("cost");
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

/// Replays a transcript. Exact entries answer any prompt equal to theirs and
/// may be hit repeatedly; otherwise ordinal entries are consumed in order.
class ScriptedLLM final : public LLMClient {
 public:
  explicit ScriptedLLM(std::vector<TranscriptEntry> entries, std::optional<Pricing> pricing = {})
      : entries_(std::move(entries)), pricing_(pricing) {}

  static ScriptedLLM from_file(const std::string& path, std::optional<Pricing> pricing = {}) {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot open transcript '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::SchemaError, "transcript '" + path + "': " + e.what());
    }
    return ScriptedLLM(parse_transcript(j), pricing);
  }

  LLMResponse complete(std::string_view prompt) override {
    if (prompt.empty()) fail(Errc::EmptyInput, "prompt must be non-empty");
    std::lock_guard lock(mutex_);
    for (const auto& e : entries_) {
      if (e.match == TranscriptMatch::Exact && e.prompt == prompt) return respond(e);
    }
    while (cursor_ < entries_.size()) {
      const auto& e = entries_[cursor_++];
      if (e.match == TranscriptMatch::Ordinal) return respond(e);
    }
    fail(Errc::TranscriptMiss, "no transcript entry for prompt of " +
                                   std::to_string(prompt.size()) + " characters");
  }

  std::size_t consumed() const {
    std::lock_guard lock(mutex_);
    return cursor_;
  }

 private:
  LLMResponse respond(const TranscriptEntry& e) const {
    LLMResponse r{e.text, e.usage};
    if (pricing_) r.metrics.cost = pricing_->cost(r.metrics);
    return r;
  }

  std::vector<TranscriptEntry> entries_;
  std::optional<Pricing> pricing_;
  std::size_t cursor_ = 0;
  mutable std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Similar molecules / knowledge base mocks

class TableSimilarityProvider final : public SimilarMoleculeProvider {
 public:
  TableSimilarityProvider() = default;
  explicit TableSimilarityProvider(std::map<std::string, std::vector<std::string>> table)
      : table_(std::move(table)) {}

  /// {"<smiles>": ["<most similar>", ...], ...}
  static TableSimilarityProvider from_json(const nlohmann::json& j) {
    try {
      return TableSimilarityProvider(j.get<std::map<std::string, std::vector<std::string>>>());
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::SchemaError, std::string("similarity table: ") + e.what());
    }
  }

  std::vector<Molecule> similar_molecules(const std::string& smiles, std::size_t limit) override {
    if (limit == 0) fail(Errc::InvalidLimit, "limit must be >= 1");
    std::vector<Molecule> out;
    auto it = table_.find(smiles);
    if (it == table_.end()) return out;
    for (const auto& s : it->second) {
      if (out.size() >= limit) break;
      out.emplace_back(s);
    }
    return out;
  }

 private:
  std::map<std::string, std::vector<std::string>> table_;
};

class InMemoryKnowledgeBase final : public ReactionKnowledgeBase {
 public:
  InMemoryKnowledgeBase() = default;
  explicit InMemoryKnowledgeBase(std::map<std::string, std::vector<PartialCondition>> entries)
      : entries_(std::move(entries)) {}

  /// {"<product smiles>": [{"base": "...", "solvent": "..."}, ...], ...}
  /// Roles missing from an entry stay unset.
  static InMemoryKnowledgeBase from_json(const nlohmann::json& j) {
    try {
      std::map<std::string, std::vector<PartialCondition>> entries;
      for (const auto& [product, conds] : j.items())
        entries[product] = conds.get<std::vector<PartialCondition>>();
      return InMemoryKnowledgeBase(std::move(entries));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::SchemaError, std::string("knowledge base: ") + e.what());
    }
  }

  std::optional<std::vector<PartialCondition>> lookup_exact(const std::string& smiles) const override {
    auto it = entries_.find(smiles);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void insert(const std::string& product, std::vector<PartialCondition> conditions) {
    entries_[product] = std::move(conditions);
  }

 private:
  std::map<std::string, std::vector<PartialCondition>> entries_;
};

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::SchemaError, "'" + path + "': " + e.what());
  }
}

}  // namespace condrec
