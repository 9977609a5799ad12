#pragma once

// Phase One: hierarchical condition retrieval, document slicing, top match
// slice (TMS) selection and the prompting-strategy trial harness.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "condrec/chemspace.hpp"
#include "condrec/error.hpp"
#include "condrec/gateways.hpp"
#include "condrec/rng.hpp"

namespace condrec {

// ---------------------------------------------------------------------------
// Slicing

struct DocumentSlices {
  std::vector<std::string> slices;
  /// n+1 character offsets; slice i spans [boundaries[i], boundaries[i+1]).
  std::vector<std::size_t> boundaries;

  std::size_t size() const noexcept { return slices.size(); }

  static DocumentSlices from_texts(std::vector<std::string> texts) {
    DocumentSlices d;
    d.boundaries.push_back(0);
    for (const auto& t : texts) d.boundaries.push_back(d.boundaries.back() + t.size());
    d.slices = std::move(texts);
    return d;
  }

  std::string joined() const {
    std::string out;
    for (const auto& s : slices) out += s;
    return out;
  }
};

/// Splits `text` into n pieces of similar character length. Each cut lands
/// on the word start nearest the ideal equal-share offset (lower offset wins
/// a tie); if no word start is admissible the cut falls on the ideal offset.
inline DocumentSlices slice_document(std::string_view text, std::size_t n) {
  if (n == 0) fail(Errc::InvalidArgument, "slice count must be >= 1");
  const std::size_t len = text.size();
  if (n > len)
    fail(Errc::TooManySlices, std::to_string(n) + " slices requested for " + std::to_string(len) +
                                  " characters");
  auto is_space = [&](std::size_t i) { return std::isspace(static_cast<unsigned char>(text[i])) != 0; };
  auto word_start = [&](std::size_t p) { return p > 0 && p < len && is_space(p - 1) && !is_space(p); };

  DocumentSlices d;
  d.boundaries.push_back(0);
  for (std::size_t k = 1; k < n; ++k) {
    const std::size_t prev = d.boundaries.back();
    const std::size_t lo = prev + 1;     // every slice keeps >= 1 character
    const std::size_t hi = len - (n - k);  // leave >= 1 character per remaining slice
    const std::size_t ideal = std::clamp((k * len + n / 2) / n, lo, hi);
    std::size_t cut = ideal;
    for (std::size_t dist = 0;; ++dist) {
      const bool below_ok = ideal >= lo + dist;
      const bool above_ok = ideal + dist <= hi;
      if (!below_ok && !above_ok) break;
      if (below_ok && word_start(ideal - dist)) {
        cut = ideal - dist;
        break;
      }
      if (above_ok && word_start(ideal + dist)) {
        cut = ideal + dist;
        break;
      }
    }
    d.boundaries.push_back(cut);
  }
  d.boundaries.push_back(len);
  for (std::size_t i = 0; i < n; ++i)
    d.slices.emplace_back(text.substr(d.boundaries[i], d.boundaries[i + 1] - d.boundaries[i]));
  return d;
}

// ---------------------------------------------------------------------------
// Similarity

enum class SimilarityMetric { CosineDistance, L2Similarity };

inline std::string_view metric_name(SimilarityMetric m) {
  return m == SimilarityMetric::CosineDistance ? "cosine" : "l2";
}

inline SimilarityMetric parse_metric(std::string_view name) {
  if (name == "cosine") return SimilarityMetric::CosineDistance;
  if (name == "l2") return SimilarityMetric::L2Similarity;
  fail(Errc::InvalidArgument, "metric must be 'cosine' or 'l2', got '" + std::string(name) + "'");
}

/// 1 - cos(a, b), in [0, 2].
inline double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) fail(Errc::DimMismatch, "cosine_distance on vectors of different dimension");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.dim(); ++k) {
    dot += a.values[k] * b.values[k];
    na += a.values[k] * a.values[k];
    nb += b.values[k] * b.values[k];
  }
  if (na == 0.0 || nb == 0.0) fail(Errc::ZeroVector, "cosine_distance of a zero vector");
  return std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0);
}

/// 1 / (1 + |a - b|), in (0, 1].
inline double l2_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) fail(Errc::DimMismatch, "l2_similarity on vectors of different dimension");
  double sq = 0.0;
  for (std::size_t k = 0; k < a.dim(); ++k) {
    const double d = a.values[k] - b.values[k];
    sq += d * d;
  }
  return 1.0 / (1.0 + std::sqrt(sq));
}

struct TMSResult {
  std::size_t index = 0;
  double score = 0.0;
  SimilarityMetric metric = SimilarityMetric::CosineDistance;
  std::vector<double> scores;  // per slice, same metric
};

/// Cosine distance is minimized, L2 similarity maximized. Ties go to the
/// lowest slice index.
inline TMSResult select_tms_from_embeddings(const std::vector<EmbeddingVector>& slice_embeddings,
                                            const EmbeddingVector& query, SimilarityMetric metric) {
  if (slice_embeddings.empty()) fail(Errc::InvalidArgument, "no slices to select from");
  TMSResult r;
  r.metric = metric;
  for (std::size_t i = 0; i < slice_embeddings.size(); ++i) {
    const double s = metric == SimilarityMetric::CosineDistance
                         ? cosine_distance(slice_embeddings[i], query)
                         : l2_similarity(slice_embeddings[i], query);
    r.scores.push_back(s);
    const bool better = metric == SimilarityMetric::CosineDistance ? s < r.score : s > r.score;
    if (i == 0 || better) {
      r.index = i;
      r.score = s;
    }
  }
  return r;
}

inline TMSResult select_tms(const DocumentSlices& slices, std::string_view query,
                            SimilarityMetric metric, Embedder& embedder) {
  if (slices.size() == 0) fail(Errc::InvalidArgument, "no slices to select from");
  const auto q = embedder.embed(query);
  std::vector<EmbeddingVector> embedded;
  embedded.reserve(slices.size());
  for (const auto& s : slices.slices) embedded.push_back(embedder.embed(s));
  return select_tms_from_embeddings(embedded, q, metric);
}

// ---------------------------------------------------------------------------
// Prompt assembly

inline constexpr std::string_view kDefaultPlaceholder = "<...>";

struct PromptTemplate {
  std::string text;
  std::string placeholder = std::string(kDefaultPlaceholder);

  std::size_t placeholder_count() const {
    if (placeholder.empty()) return 0;
    std::size_t count = 0;
    for (auto pos = text.find(placeholder); pos != std::string::npos;
         pos = text.find(placeholder, pos + placeholder.size()))
      ++count;
    return count;
  }

  void validate() const {
    const auto count = placeholder_count();
    if (count != 1)
      fail(Errc::TemplateError, "template must contain the placeholder exactly once, found " +
                                    std::to_string(count));
  }

  /// The template with the placeholder removed.
  std::string fixed_part() const {
    validate();
    std::string out = text;
    out.erase(out.find(placeholder), placeholder.size());
    return out;
  }
};

/// Single-pass substitution: placeholder text inside `flexible` stays literal.
inline std::string assemble_prompt(const PromptTemplate& tmpl, std::string_view flexible) {
  tmpl.validate();
  const auto pos = tmpl.text.find(tmpl.placeholder);
  std::string out = tmpl.text.substr(0, pos);
  out += flexible;
  out += tmpl.text.substr(pos + tmpl.placeholder.size());
  return out;
}

// ---------------------------------------------------------------------------
// Hierarchical matching

enum class Provenance { Exact, SimilarRank, FallThrough };

struct RetrievalOutcome {
  Provenance provenance = Provenance::FallThrough;
  std::size_t rank = 0;  // 0-based position in the similar list (SimilarRank only)
  std::string matched_smiles;
  std::vector<PartialCondition> conditions;

  bool found() const { return provenance != Provenance::FallThrough; }
};

inline std::string provenance_label(const RetrievalOutcome& o) {
  switch (o.provenance) {
    case Provenance::Exact: return "Exact";
    case Provenance::SimilarRank: return "SimilarRank(" + std::to_string(o.rank) + ")";
    case Provenance::FallThrough: return "FallThrough";
  }
  return "?";
}

inline constexpr std::size_t kDefaultMaxCandidates = 10;

/// Exact SMILES hit first; otherwise walk the provider's similar molecules in
/// order and stop at the first one the knowledge base knows.
inline RetrievalOutcome hierarchical_match(const Molecule& target, const ReactionKnowledgeBase& kb,
                                           SimilarMoleculeProvider& provider,
                                           std::size_t max_candidates = kDefaultMaxCandidates) {
  RetrievalOutcome out;
  if (auto hit = kb.lookup_exact(target.smiles())) {
    out.provenance = Provenance::Exact;
    out.matched_smiles = target.smiles();
    out.conditions = std::move(*hit);
    return out;
  }
  if (max_candidates == 0) return out;
  const auto similar = provider.similar_molecules(target.smiles(), max_candidates);
  for (std::size_t k = 0; k < similar.size(); ++k) {
    if (auto hit = kb.lookup_exact(similar[k].smiles())) {
      out.provenance = Provenance::SimilarRank;
      out.rank = k;
      out.matched_smiles = similar[k].smiles();
      out.conditions = std::move(*hit);
      return out;
    }
  }
  return out;
}

inline void to_json(nlohmann::json& j, const RetrievalOutcome& o) {
  j = {{"outcome", o.found() ? "match" : "FallThrough"},
       {"provenance", provenance_label(o)},
       {"matched_smiles", o.matched_smiles},
       {"conditions", o.conditions}};
  if (o.provenance == Provenance::SimilarRank) j["rank"] = o.rank;
}

// ---------------------------------------------------------------------------
// Prompting-strategy trials

enum class PromptStrategy { ZeroShot, AllDocument, RandomSlice, Tms };

inline constexpr std::array<PromptStrategy, 4> kAllStrategies = {
    PromptStrategy::ZeroShot, PromptStrategy::AllDocument, PromptStrategy::RandomSlice,
    PromptStrategy::Tms};

inline std::string_view strategy_name(PromptStrategy s) {
  switch (s) {
    case PromptStrategy::ZeroShot: return "zero-shot";
    case PromptStrategy::AllDocument: return "all-document";
    case PromptStrategy::RandomSlice: return "random-slice";
    case PromptStrategy::Tms: return "tms";
  }
  return "?";
}

using CodeValidator = std::function<bool(const std::string&)>;

/// Accepts a response when it contains a match of `pattern` (ECMAScript regex).
inline CodeValidator api_pattern_validator(const std::string& pattern) {
  return [re = std::regex(pattern)](const std::string& response) {
    return std::regex_search(response, re);
  };
}

struct StrategyStats {
  PromptStrategy strategy = PromptStrategy::ZeroShot;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double mean_prompt_tokens = 0.0;
  double mean_completion_tokens = 0.0;
  double mean_latency_ms = 0.0;
  double mean_cost = 0.0;
};

struct CodeGenReport {
  std::vector<StrategyStats> strategies;  // in kAllStrategies order
  TMSResult tms;
  std::size_t trials = 0;

  const StrategyStats& stats(PromptStrategy s) const {
    for (const auto& st : strategies)
      if (st.strategy == s) return st;
    fail(Errc::InvalidArgument, "strategy not in report");
  }
};

struct CodeGenSetup {
  PromptTemplate prompt_template;
  std::string document;
  std::size_t slices = 8;
  std::string query;  // text compared against slices; usually the template's fixed part
  SimilarityMetric metric = SimilarityMetric::CosineDistance;
};

/// Calls the LLM n_trials times per strategy (strategy-major, trial-minor)
/// and aggregates validator outcomes and usage metrics.
inline CodeGenReport run_codegen_trials(const CodeGenSetup& setup, Embedder& embedder,
                                        LLMClient& llm, const CodeValidator& validator,
                                        std::size_t n_trials, std::uint64_t seed) {
  if (n_trials == 0) fail(Errc::InvalidArgument, "n_trials must be >= 1");
  setup.prompt_template.validate();
  const auto slices = slice_document(setup.document, setup.slices);

  CodeGenReport report;
  report.trials = n_trials;
  report.tms = select_tms(slices, setup.query, setup.metric, embedder);
  Rng rng(seed);

  for (PromptStrategy strategy : kAllStrategies) {
    StrategyStats st;
    st.strategy = strategy;
    st.trials = n_trials;
    double prompt_tokens = 0.0, completion_tokens = 0.0, latency = 0.0, cost = 0.0;
    for (std::size_t t = 0; t < n_trials; ++t) {
      std::string flexible;
      switch (strategy) {
        case PromptStrategy::ZeroShot: break;
        case PromptStrategy::AllDocument: flexible = setup.document; break;
        case PromptStrategy::RandomSlice: flexible = slices.slices[rng.index(slices.size())]; break;
        case PromptStrategy::Tms: flexible = slices.slices[report.tms.index]; break;
      }
      const auto response = llm.complete(assemble_prompt(setup.prompt_template, flexible));
      if (validator(response.text)) ++st.successes;
      prompt_tokens += static_cast<double>(response.metrics.prompt_tokens);
      completion_tokens += static_cast<double>(response.metrics.completion_tokens);
      latency += response.metrics.latency_ms;
      cost += response.metrics.cost;
    }
    const auto n = static_cast<double>(n_trials);
    st.success_rate = static_cast<double>(st.successes) / n;
    st.mean_prompt_tokens = prompt_tokens / n;
    st.mean_completion_tokens = completion_tokens / n;
    st.mean_latency_ms = latency / n;
    st.mean_cost = cost / n;
    report.strategies.push_back(st);
  }
  return report;
}

inline void to_json(nlohmann::json& j, const TMSResult& t) {
  j = {{"index", t.index}, {"score", t.score}, {"metric", metric_name(t.metric)}, {"scores", t.scores}};
}

inline void to_json(nlohmann::json& j, const CodeGenReport& r) {
  auto rows = nlohmann::json::array();
  for (const auto& s : r.strategies) {
    rows.push_back({{"strategy", strategy_name(s.strategy)},
                    {"trials", s.trials},
                    {"successes", s.successes},
                    {"success_rate", s.success_rate},
                    {"mean_prompt_tokens", s.mean_prompt_tokens},
                    {"mean_completion_tokens", s.mean_completion_tokens},
                    {"mean_latency_ms", s.mean_latency_ms},
                    {"mean_cost", s.mean_cost}});
  }
  j = {{"trials", r.trials}, {"tms", r.tms}, {"strategies", rows}};
}

}  // namespace condrec
