#pragma once

// End-to-end orchestration: retrieve -> fill in -> recommend -> simulate ->
// analyze, driven by one JSON config, plus JSON and markdown report emission.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "condrec/analytics.hpp"
#include "condrec/chemspace.hpp"
#include "condrec/encoder.hpp"
#include "condrec/error.hpp"
#include "condrec/gateways.hpp"
#include "condrec/http_gateways.hpp"
#include "condrec/instrument.hpp"
#include "condrec/recommend.hpp"
#include "condrec/retrieval.hpp"
#include "condrec/scl.hpp"
#include "condrec/video.hpp"

namespace condrec {

// ---------------------------------------------------------------------------
// Fill-in

/// Fixes the roles set in `partial` as singleton axes. Every value must exist
/// in the space.
inline ReactionSpace fill_in(const PartialCondition& partial, const ReactionSpace& space) {
  check_axes(space);
  return restrict_space(space, partial);
}

/// First condition wins; an empty list leaves the space unchanged.
inline ReactionSpace fill_in(const std::vector<PartialCondition>& partials, const ReactionSpace& space) {
  if (partials.empty()) {
    check_axes(space);
    return space;
  }
  return fill_in(partials.front(), space);
}

inline bool space_offers(const ReactionSpace& space, Role role, const std::string& value) {
  if (role == Role::Electrophile || role == Role::Nucleophile) {
    for (const auto& p : space.reactant_pairs)
      if ((role == Role::Electrophile ? p.electrophile : p.nucleophile).smiles() == value) return true;
    return false;
  }
  const auto& axis = *space.axis(role);
  return std::find(axis.begin(), axis.end(), value) != axis.end();
}

struct FilterOutcome {
  PartialCondition applied;
  std::vector<std::string> ignored;  // "role=value" entries absent from the space
};

/// Keeps only role values the space offers.
inline FilterOutcome filter_to_space(const PartialCondition& partial, const ReactionSpace& space) {
  FilterOutcome out;
  for (Role r : kAllRoles) {
    const auto& v = partial.get(r);
    if (!v) continue;
    if (space_offers(space, r, *v))
      out.applied.get(r) = *v;
    else
      out.ignored.push_back(std::string(role_name(r)) + "=" + *v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config

struct CodegenSettings {
  std::string document;  // paths
  std::string prompt_template;
  std::string placeholder = std::string(kDefaultPlaceholder);
  std::optional<std::string> query;
  std::size_t slices = 8;
  SimilarityMetric metric = SimilarityMetric::CosineDistance;
  std::string validator;
  std::size_t trials = 10;
  std::uint64_t seed = 0;
};

struct Phase3Settings {
  bool enabled = true;
  std::string instrument;  // path
  std::string video;       // manifest path
  PlannerKind planner = PlannerKind::Deterministic;
  bool strict = true;
  KeyFrameParams key_frames;
  ClickParams clicks;
  std::int64_t max_wait_ms = 1000;
  std::map<std::string, std::string> ocr_corruptions;
};

struct PipelineConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  Molecule target{"C"};
  ReactionSpace space;
  std::string train;
  std::optional<std::string> knowledge_base;
  std::optional<std::string> similar_molecules;
  GatewayConfig similarity_gateway;
  GatewayConfig llm_gateway;
  std::optional<std::string> llm_transcript;
  std::optional<Pricing> llm_pricing;
  GatewayConfig embedder_gateway;
  std::size_t embedder_dimension = HashingEmbedder::kDefaultDimension;
  std::size_t max_candidates = kDefaultMaxCandidates;
  std::optional<CodegenSettings> codegen;
  SCLConfig scl;
  std::string model = "knn";
  RegressorOptions regressor;
  std::size_t batch_size = 5;
  std::vector<std::uint64_t> seeds;
  bool exclude_training = true;
  Phase3Settings phase3;
  bool random_baseline = false;
  std::uint64_t random_seed = 0;
  std::optional<std::string> output_json;
  std::optional<std::string> output_markdown;

  std::string resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path.string() : (base_dir / path).lexically_normal().string();
  }
};

namespace detail {

inline GatewayConfig gateway_from_json(const nlohmann::json& j) {
  GatewayConfig g;
  g.endpoint = j.value("endpoint", g.endpoint);
  g.timeout_ms = j.value("timeout_ms", g.timeout_ms);
  g.retry_count = j.value("retry_count", g.retry_count);
  return g;
}

}  // namespace detail

/// Parses the config document; relative paths are resolved against base_dir.
inline PipelineConfig parse_pipeline_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  c.base_dir = base_dir;
  try {
    c.target = Molecule(j.at("target_smiles").get<std::string>());
    const auto& space = j.at("space");
    c.space = space.is_string() ? read_json_file(c.resolve(space.get<std::string>())).get<ReactionSpace>()
                                : space.get<ReactionSpace>();
    c.train = j.at("train").get<std::string>();
    if (j.contains("knowledge_base")) c.knowledge_base = j.at("knowledge_base").get<std::string>();
    if (j.contains("similar_molecules")) c.similar_molecules = j.at("similar_molecules").get<std::string>();
    if (auto g = j.find("gateways"); g != j.end()) {
      if (g->contains("similarity")) c.similarity_gateway = detail::gateway_from_json(g->at("similarity"));
      if (g->contains("llm")) {
        const auto& l = g->at("llm");
        c.llm_gateway = detail::gateway_from_json(l);
        if (l.contains("transcript")) c.llm_transcript = l.at("transcript").get<std::string>();
        if (l.contains("pricing"))
          c.llm_pricing = Pricing{l.at("pricing").value("prompt_per_token", 0.0),
                                  l.at("pricing").value("completion_per_token", 0.0)};
      }
      if (g->contains("embedder")) {
        c.embedder_gateway = detail::gateway_from_json(g->at("embedder"));
        c.embedder_dimension = g->at("embedder").value("dimension", c.embedder_dimension);
      }
    }
    if (auto r = j.find("retrieval"); r != j.end()) {
      c.max_candidates = r->value("max_candidates", c.max_candidates);
      if (auto cg = r->find("codegen"); cg != r->end()) {
        CodegenSettings s;
        s.document = cg->at("document").get<std::string>();
        s.prompt_template = cg->at("template").get<std::string>();
        s.placeholder = cg->value("placeholder", s.placeholder);
        if (cg->contains("query")) s.query = cg->at("query").get<std::string>();
        s.slices = cg->value("slices", s.slices);
        s.metric = parse_metric(cg->value("metric", std::string("cosine")));
        s.validator = cg->at("validator").get<std::string>();
        s.trials = cg->value("trials", s.trials);
        s.seed = cg->value("seed", s.seed);
        c.codegen = std::move(s);
      }
    }
    if (j.contains("scl")) c.scl = j.at("scl").get<SCLConfig>();
    c.model = j.value("model", c.model);
    if (auto r = j.find("regressor"); r != j.end()) {
      c.regressor.k = r->value("k", c.regressor.k);
      c.regressor.trees = r->value("trees", c.regressor.trees);
      c.regressor.max_depth = r->value("max_depth", c.regressor.max_depth);
      c.regressor.min_samples_split = r->value("min_samples_split", c.regressor.min_samples_split);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    c.exclude_training = j.value("exclude_training", c.exclude_training);
    if (auto p = j.find("phase3"); p != j.end()) {
      auto& s = c.phase3;
      s.enabled = p->value("enabled", true);
      s.instrument = p->value("instrument", std::string{});
      s.video = p->value("video", std::string{});
      const std::string planner = p->value("planner", std::string("deterministic"));
      if (planner == "deterministic")
        s.planner = PlannerKind::Deterministic;
      else if (planner == "llm")
        s.planner = PlannerKind::LlmAssisted;
      else
        fail(Errc::ConfigError, "phase3.planner must be 'deterministic' or 'llm'");
      s.strict = p->value("strict", s.strict);
      s.key_frames.threshold = p->value("key_frame_threshold", s.key_frames.threshold);
      s.key_frames.min_gap = p->value("min_gap", s.key_frames.min_gap);
      s.clicks.dwell_radius = p->value("dwell_radius", s.clicks.dwell_radius);
      s.clicks.min_dwell = p->value("min_dwell", s.clicks.min_dwell);
      s.clicks.require_response = p->value("require_response", s.clicks.require_response);
      s.max_wait_ms = p->value("max_wait_ms", s.max_wait_ms);
      s.ocr_corruptions = p->value("ocr_corruptions", s.ocr_corruptions);
    } else {
      c.phase3.enabled = false;
    }
    if (auto r = j.find("random_baseline"); r != j.end()) {
      c.random_baseline = r->value("enabled", false);
      c.random_seed = r->value("seed", std::uint64_t{0});
    }
    if (auto o = j.find("output"); o != j.end()) {
      if (o->contains("json")) c.output_json = o->at("json").get<std::string>();
      if (o->contains("markdown")) c.output_markdown = o->at("markdown").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigError, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigError) throw;
    fail(Errc::ConfigError, std::string("config: ") + e.what());
  }
  if (c.batch_size < 1) fail(Errc::ConfigError, "batch_size must be >= 1");
  if (c.seeds.empty()) fail(Errc::ConfigError, "at least one seed is required");
  try {
    check_axes(c.space);
    c.scl.validate();
  } catch (const Error& e) {
    fail(Errc::ConfigError, std::string("config: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ConfigError, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigError, "config '" + path + "': " + e.what());
  }
  return parse_pipeline_config(j, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Report

struct ExecutedReaction {
  explicit ExecutedReaction(ReactionCondition c) : condition(std::move(c)) {}

  ReactionCondition condition;
  std::optional<double> predicted_yield;
  double rrf = 0.0;
  double conc_product = 0.0;
  double yield = 0.0;
  bool exceeds_unity = false;
};

struct BatchReport {
  std::string label;  // "Experimental Batch #k" or "Random Batch"
  std::optional<std::uint64_t> seed;
  RecommendationBatch batch;
  std::vector<ExecutedReaction> executed;
  std::optional<double> mu_n;
  std::optional<double> training_loss;
};

struct Phase1Report {
  std::string target;
  RetrievalOutcome outcome;
  PartialCondition applied;
  std::vector<std::string> ignored;
  std::size_t space_size_before = 0;
  std::size_t space_size_after = 0;
  ReactionSpace space;
  std::optional<CodeGenReport> codegen;
};

struct PipelineReport {
  Phase1Report phase1;
  std::vector<BatchReport> batches;
  std::vector<std::string> log;
  bool partial = false;
  std::string failed_phase;
  std::string error_code;
  std::string error;
};

inline void to_json(nlohmann::json& j, const ExecutedReaction& e) {
  j = {{"condition", e.condition},
       {"predicted_yield", e.predicted_yield ? nlohmann::json(*e.predicted_yield) : nlohmann::json()},
       {"rrf", e.rrf},
       {"c_product", e.conc_product},
       {"yield", e.yield},
       {"exceeds_unity", e.exceeds_unity}};
}

inline ExecutedReaction executed_from_json(const nlohmann::json& j) {
  ExecutedReaction e(condition_from_json(j.at("condition")));
  if (!j.at("predicted_yield").is_null()) e.predicted_yield = j.at("predicted_yield").get<double>();
  e.rrf = j.at("rrf").get<double>();
  e.conc_product = j.at("c_product").get<double>();
  e.yield = j.at("yield").get<double>();
  e.exceeds_unity = j.at("exceeds_unity").get<bool>();
  return e;
}

inline void from_json(const nlohmann::json& j, RecommendationBatch& b) {
  b.items.clear();
  for (const auto& e : j) {
    RecommendedItem item{condition_from_json(e.at("condition")), std::nullopt};
    if (e.contains("predicted_yield") && !e.at("predicted_yield").is_null())
      item.predicted_yield = e.at("predicted_yield").get<double>();
    b.items.push_back(std::move(item));
  }
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

inline void to_json(nlohmann::json& j, const PipelineReport& r) {
  auto batches = nlohmann::json::array();
  for (const auto& b : r.batches)
    batches.push_back({{"label", b.label},
                       {"seed", b.seed ? nlohmann::json(*b.seed) : nlohmann::json()},
                       {"recommended", b.batch},
                       {"executed", b.executed},
                       {"mu_n", optional_json(b.mu_n)},
                       {"training_loss", optional_json(b.training_loss)}});
  const auto& p1 = r.phase1;
  j = {{"phase1",
        {{"target", p1.target},
         {"retrieval", p1.outcome},
         {"applied", p1.applied},
         {"ignored", p1.ignored},
         {"space_size_before", p1.space_size_before},
         {"space_size_after", p1.space_size_after},
         {"space", p1.space},
         {"codegen", p1.codegen ? nlohmann::json(*p1.codegen) : nlohmann::json()}}},
       {"batches", batches},
       {"log", r.log},
       {"partial", r.partial},
       {"failed_phase", r.failed_phase},
       {"error_code", r.error_code},
       {"error", r.error}};
}

/// Rebuilds the report; the code-generation block is kept only as raw JSON by
/// callers that need it, so it round-trips through `raw_codegen`.
inline PipelineReport report_from_json(const nlohmann::json& j, nlohmann::json* raw_codegen = nullptr) {
  PipelineReport r;
  try {
    const auto& p1 = j.at("phase1");
    r.phase1.target = p1.at("target").get<std::string>();
    const auto& ret = p1.at("retrieval");
    const std::string prov = ret.at("provenance").get<std::string>();
    if (prov == "Exact")
      r.phase1.outcome.provenance = Provenance::Exact;
    else if (prov.rfind("SimilarRank", 0) == 0)
      r.phase1.outcome.provenance = Provenance::SimilarRank;
    else
      r.phase1.outcome.provenance = Provenance::FallThrough;
    r.phase1.outcome.rank = ret.value("rank", std::size_t{0});
    r.phase1.outcome.matched_smiles = ret.at("matched_smiles").get<std::string>();
    r.phase1.outcome.conditions = ret.at("conditions").get<std::vector<PartialCondition>>();
    r.phase1.applied = p1.at("applied").get<PartialCondition>();
    r.phase1.ignored = p1.at("ignored").get<std::vector<std::string>>();
    r.phase1.space_size_before = p1.at("space_size_before").get<std::size_t>();
    r.phase1.space_size_after = p1.at("space_size_after").get<std::size_t>();
    if (!p1.at("space").at("reactant_pairs").empty()) r.phase1.space = p1.at("space").get<ReactionSpace>();
    if (raw_codegen) *raw_codegen = p1.at("codegen");
    for (const auto& jb : j.at("batches")) {
      BatchReport b;
      b.label = jb.at("label").get<std::string>();
      if (!jb.at("seed").is_null()) b.seed = jb.at("seed").get<std::uint64_t>();
      b.batch = jb.at("recommended").get<RecommendationBatch>();
      for (const auto& je : jb.at("executed")) b.executed.push_back(executed_from_json(je));
      if (!jb.at("mu_n").is_null()) b.mu_n = jb.at("mu_n").get<double>();
      if (!jb.at("training_loss").is_null()) b.training_loss = jb.at("training_loss").get<double>();
      r.batches.push_back(std::move(b));
    }
    r.log = j.at("log").get<std::vector<std::string>>();
    r.partial = j.at("partial").get<bool>();
    r.failed_phase = j.at("failed_phase").get<std::string>();
    r.error_code = j.at("error_code").get<std::string>();
    r.error = j.at("error").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::SchemaError, std::string("report: ") + e.what());
  }
  return r;
}

inline std::string markdown_cell(std::string s) {
  for (std::size_t pos = 0; (pos = s.find('|', pos)) != std::string::npos; pos += 2) s.replace(pos, 1, "\\|");
  return s;
}

/// Human-readable report: one results table in the wet-lab layout (reaction
/// number, batch, roles, yield) and a per-batch mu_N summary.
inline std::string render_markdown(const PipelineReport& r) {
  std::ostringstream md;
  md << "# Reaction condition optimization report\n\n";
  if (!r.phase1.target.empty()) md << "Target: `" << r.phase1.target << "`\n\n";
  if (r.partial)
    md << "**Partial report:** " << r.failed_phase << " failed (" << r.error_code << "): " << r.error << "\n\n";
  if (r.phase1.space_size_before > 0) {
    md << "## Retrieval\n\n";
    md << "- Provenance: " << provenance_label(r.phase1.outcome);
    if (!r.phase1.outcome.matched_smiles.empty()) md << " (`" << r.phase1.outcome.matched_smiles << "`)";
    md << "\n- Applied:";
    bool any = false;
    for (Role role : kAllRoles)
      if (r.phase1.applied.get(role)) {
        md << (any ? ", " : " ") << role_name(role) << " = " << *r.phase1.applied.get(role);
        any = true;
      }
    if (!any) md << " none";
    md << "\n";
    for (const auto& ig : r.phase1.ignored) md << "- Ignored (not in space): " << ig << "\n";
    md << "- Search space: " << r.phase1.space_size_before << " -> " << r.phase1.space_size_after
       << " conditions\n\n";
  }
  md << "## Results\n\n";
  md << "| Reaction No. | Batch | Reactant1 | Reactant2 | Ligand | Base | Solvent | Yield |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  std::size_t number = 0;
  for (const auto& b : r.batches)
    for (const auto& e : b.executed) {
      md << "| " << ++number << " | " << markdown_cell(b.label) << " | "
         << markdown_cell(e.condition.electrophile.smiles()) << " | "
         << markdown_cell(e.condition.nucleophile.smiles()) << " | " << markdown_cell(e.condition.ligand) << " | "
         << markdown_cell(e.condition.base) << " | " << markdown_cell(e.condition.solvent) << " | "
         << format_real(e.yield) << " |\n";
    }
  md << "\n| Batch | Seed | mu_N |\n|---|---|---|\n";
  for (const auto& b : r.batches)
    md << "| " << markdown_cell(b.label) << " | " << (b.seed ? std::to_string(*b.seed) : "-") << " | "
       << (b.mu_n ? format_real(*b.mu_n) : "-") << " |\n";
  return md.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(Errc::IoError, "failed writing '" + path + "'");
}

inline std::string report_json_text(const PipelineReport& r) { return nlohmann::json(r).dump(2) + "\n"; }

inline void emit_report(const PipelineReport& r, const std::optional<std::string>& json_path,
                        const std::optional<std::string>& markdown_path) {
  if (json_path) write_file(*json_path, report_json_text(r));
  if (markdown_path) write_file(*markdown_path, render_markdown(r));
}

// ---------------------------------------------------------------------------
// Batch fixtures (recorded wet-lab results)

struct LabeledBatch {
  std::string label;
  std::vector<ReactionRecord> records;
};

/// Dataset CSV with an extra `batch` column; rows keep file order within
/// each batch and batches keep first-appearance order.
inline std::vector<LabeledBatch> ingest_batches(std::istream& in) {
  std::stringstream copy;
  copy << in.rdbuf();
  const std::string text = copy.str();
  std::istringstream records_in(text);
  const auto records = ingest_dataset(records_in);

  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  const auto it = std::find(header.begin(), header.end(), "batch");
  if (it == header.end()) fail(Errc::SchemaError, "missing column 'batch'");
  const auto col = static_cast<std::size_t>(it - header.begin());

  std::vector<LabeledBatch> batches;
  std::size_t row = 0;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto label = detail::split_csv_line(line)[col];
    auto b = std::find_if(batches.begin(), batches.end(), [&](const auto& x) { return x.label == label; });
    if (b == batches.end()) b = batches.insert(batches.end(), LabeledBatch{label, {}});
    b->records.push_back(records[row++]);
  }
  return batches;
}

inline std::vector<LabeledBatch> ingest_batches_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open '" + path + "'");
  return ingest_batches(in);
}

/// Scores each recorded batch with mu_n against its own observations.
inline PipelineReport report_from_batches(const std::vector<LabeledBatch>& batches) {
  PipelineReport r;
  for (const auto& lb : batches) {
    BatchReport b;
    b.label = lb.label;
    GroundTruth truth;
    for (const auto& rec : lb.records) {
      b.batch.items.push_back({rec.condition, std::nullopt});
      truth[rec.condition] = rec.yield;
      ExecutedReaction e(rec.condition);
      e.yield = rec.yield;
      b.executed.push_back(std::move(e));
    }
    if (!b.batch.items.empty()) b.mu_n = mu_n(b.batch, truth).mu_n;
    r.batches.push_back(std::move(b));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Gateways from config

inline std::unique_ptr<SimilarMoleculeProvider> make_similarity_provider(const PipelineConfig& c) {
  if (!c.similarity_gateway.is_mock()) return std::make_unique<HttpSimilarityProvider>(c.similarity_gateway);
  if (!c.similar_molecules) return std::make_unique<TableSimilarityProvider>();
  return std::make_unique<TableSimilarityProvider>(
      TableSimilarityProvider::from_json(read_json_file(c.resolve(*c.similar_molecules))));
}

inline std::unique_ptr<LLMClient> make_llm_client(const PipelineConfig& c) {
  if (!c.llm_gateway.is_mock()) return std::make_unique<HttpLLMClient>(c.llm_gateway, c.llm_pricing);
  if (!c.llm_transcript) fail(Errc::ConfigError, "mock LLM gateway needs gateways.llm.transcript");
  return std::make_unique<ScriptedLLM>(parse_transcript(read_json_file(c.resolve(*c.llm_transcript))),
                                       c.llm_pricing);
}

inline std::unique_ptr<Embedder> make_embedder(const PipelineConfig& c) {
  if (!c.embedder_gateway.is_mock())
    return std::make_unique<HttpEmbedder>(c.embedder_gateway, c.embedder_dimension);
  return std::make_unique<HashingEmbedder>(c.embedder_dimension);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Phase Three driver

/// Everything needed to run conditions on the instrument: the definition,
/// the replayed initialization and commit scripts, and the OCR readings of
/// every path screen.
struct Phase3Setup {
  InstrumentDefinition instrument;
  ActionScript initialization;
  ActionScript commit;
  std::vector<ScreenReading> readings;
};

inline Phase3Setup prepare_phase3(const InstrumentDefinition& def, const VideoDemo& video,
                                  const Phase3Settings& settings, OcrProvider& ocr,
                                  std::vector<std::string>* log = nullptr) {
  if (!video.initialization || !video.execution)
    fail(Errc::ConfigError, "demonstration video must mark initialization and execution stages");
  if (def.path.empty()) fail(Errc::ConfigError, "instrument has no configuration path");
  Phase3Setup s{def, {}, {}, {}};
  const auto keys = detect_key_frames(video.frames, settings.key_frames);
  const auto clicks = detect_clicks(video, keys, settings.clicks);
  const auto ts = video.timestamps();
  s.initialization = replay_fixed_stages(clicks_in_window(clicks, video, *video.initialization), ts,
                                         settings.max_wait_ms);
  s.commit = replay_fixed_stages(clicks_in_window(clicks, video, *video.execution), ts, settings.max_wait_ms);
  if (log)
    log->push_back("phase3: " + std::to_string(keys.size()) + " key frames, " + std::to_string(clicks.size()) +
                   " clicks; replaying " + std::to_string(s.initialization.click_count()) +
                   " initialization and " + std::to_string(s.commit.click_count()) + " execution clicks");
  VirtualInstrument probe(def, settings.strict);
  execute_script(probe, s.initialization);
  if (probe.state().screen != def.path.front().screen)
    fail(Errc::PlanRejected, "initialization replay ends on screen '" + probe.state().screen + "', expected '" +
                                 def.path.front().screen + "'");
  for (const auto& step : def.path) s.readings.push_back(read_screen(def.screen(step.screen), ocr));
  return s;
}

/// Resets the instrument, replays initialization, plans and executes the
/// condition, and analyzes the emitted chromatogram.
inline ExecutedReaction run_condition(const Phase3Setup& setup, const ReactionCondition& target,
                                      PlannerKind planner, LLMClient* llm, bool strict) {
  for (Role r : kAllRoles) {
    const bool on_path = std::any_of(setup.instrument.path.begin(), setup.instrument.path.end(),
                                     [&](const PathStep& s) {
                                       return std::find(s.roles.begin(), s.roles.end(), r) != s.roles.end();
                                     });
    if (!on_path && setup.instrument.preset.get(r) != target.value(r))
      fail(Errc::PlanRejected, std::string(role_name(r)) + " '" + target.value(r) +
                                   "' cannot be set on this instrument");
  }
  VirtualInstrument instrument(setup.instrument, strict);
  execute_script(instrument, setup.initialization);
  const auto script = plan_actions(PartialCondition::from(target), setup.readings, setup.instrument.path,
                                   setup.commit, planner, llm);
  const auto result = execute_script(instrument, script);
  if (!result.report) fail(Errc::IncompleteSelection, "script finished without starting a run");
  if (!result.final_state.executed || !(*result.final_state.executed == target))
    fail(Errc::PlanRejected, "executed condition differs from the requested one for " + target.key());
  const auto analysis = analyze_chromatogram(*result.report);
  ExecutedReaction e(target);
  e.rrf = analysis.rrf;
  e.conc_product = analysis.conc_product;
  e.yield = analysis.yield.fraction;
  e.exceeds_unity = analysis.yield.exceeds_unity;
  return e;
}

// ---------------------------------------------------------------------------
// run_all

/// Process exit code for an error: 2 config, 3 gateway, 4 other phase failure.
inline int exit_code_for(Errc code) {
  switch (code) {
    case Errc::ConfigError:
    case Errc::SchemaError:
    case Errc::IoError: return 2;
    case Errc::GatewayUnavailable:
    case Errc::TranscriptMiss: return 3;
    default: return 4;
  }
}

inline int exit_code_for(const PipelineReport& r) {
  if (!r.partial) return 0;
  for (int c = 0; c <= static_cast<int>(Errc::ConfigError); ++c)
    if (errc_name(static_cast<Errc>(c)) == r.error_code) return exit_code_for(static_cast<Errc>(c));
  return 4;
}

namespace detail {

inline void require_file(const PipelineConfig& c, const std::string& path, const std::string& what) {
  if (path.empty()) fail(Errc::ConfigError, what + " path is not set");
  if (!std::filesystem::exists(c.resolve(path)))
    fail(Errc::ConfigError, what + " '" + path + "' does not exist");
}

}  // namespace detail

/// Runs every phase. Phase errors never escape: they mark the report partial
/// with the failing phase and error, and whatever was produced is kept. The
/// report is written to the configured outputs in both cases.
inline PipelineReport run_all(const PipelineConfig& c, const MoleculeEncoder& encoder = TokenCountEncoder{},
                              const RegressorRegistry& registry = RegressorRegistry::with_builtins()) {
  PipelineReport report;
  report.phase1.target = c.target.smiles();
  std::string phase = "config";
  auto persist = [&] {
    emit_report(report, c.output_json ? std::optional(c.resolve(*c.output_json)) : std::nullopt,
                c.output_markdown ? std::optional(c.resolve(*c.output_markdown)) : std::nullopt);
  };
  try {
    detail::require_file(c, c.train, "training data");
    if (c.phase3.enabled) {
      phase = "phase3";
      detail::require_file(c, c.phase3.instrument, "phase3 instrument definition");
      detail::require_file(c, c.phase3.video, "phase3 demonstration video");
    }

    // Phase One: hierarchical retrieval and fill-in.
    phase = "phase1";
    std::unique_ptr<LLMClient> llm;
    auto llm_client = [&]() -> LLMClient& {
      if (!llm) llm = make_llm_client(c);
      return *llm;
    };
    InMemoryKnowledgeBase kb;
    if (c.knowledge_base) kb = InMemoryKnowledgeBase::from_json(read_json_file(c.resolve(*c.knowledge_base)));
    auto provider = make_similarity_provider(c);
    if (c.codegen) {
      const auto& cg = *c.codegen;
      CodeGenSetup setup;
      setup.prompt_template = {read_text_file(c.resolve(cg.prompt_template)), cg.placeholder};
      setup.document = read_text_file(c.resolve(cg.document));
      setup.slices = cg.slices;
      setup.metric = cg.metric;
      setup.query = cg.query ? *cg.query : setup.prompt_template.fixed_part();
      auto embedder = make_embedder(c);
      report.phase1.codegen = run_codegen_trials(setup, *embedder, llm_client(), api_pattern_validator(cg.validator),
                                                 cg.trials, cg.seed);
      report.log.push_back("phase1: code-generation trials finished, TMS slice " +
                           std::to_string(report.phase1.codegen->tms.index));
    }
    auto& outcome = report.phase1.outcome;
    outcome = hierarchical_match(c.target, kb, *provider, c.max_candidates);
    report.log.push_back("phase1: retrieval " + provenance_label(outcome));
    report.phase1.space_size_before = enumerate_space(c.space).size();
    ReactionSpace space = c.space;
    if (outcome.found() && !outcome.conditions.empty()) {
      for (std::size_t k = 1; k < outcome.conditions.size(); ++k)
        report.log.push_back("phase1: alternative condition not applied: " +
                             nlohmann::json(outcome.conditions[k]).dump());
      if (outcome.provenance == Provenance::Exact) {
        report.phase1.applied = outcome.conditions.front();
      } else {
        auto filtered = filter_to_space(outcome.conditions.front(), c.space);
        report.phase1.applied = filtered.applied;
        report.phase1.ignored = filtered.ignored;
        for (const auto& ig : filtered.ignored) report.log.push_back("phase1: ignored " + ig + " (not in space)");
      }
      space = fill_in(report.phase1.applied, c.space);
    }
    report.phase1.space = space;
    const auto candidates_all = enumerate_space(space);
    report.phase1.space_size_after = candidates_all.size();

    // Phase Two: contrastive fingerprints, regressor, batch per seed.
    phase = "phase2";
    const auto records = ingest_dataset_file(c.resolve(c.train));
    std::set<ReactionCondition> trained;
    for (const auto& r : records) trained.insert(r.condition);
    std::vector<ReactionCondition> candidates;
    for (const auto& cand : candidates_all)
      if (!c.exclude_training || !trained.count(cand)) candidates.push_back(cand);
    for (std::size_t s = 0; s < c.seeds.size(); ++s) {
      const auto seed = c.seeds[s];
      SCLConfig scl = c.scl;
      scl.seed = seed;
      const auto net = train_scl(records, encoder, scl);
      std::vector<TrainingPair> pairs;
      for (const auto& r : records) pairs.emplace_back(fingerprint(r.condition, net, encoder), r.yield);
      RegressorOptions ropt = c.regressor;
      ropt.seed = seed;
      const auto model = fit_regressor(c.model, pairs, ropt, registry);
      BatchReport b;
      b.label = "Experimental Batch #" + std::to_string(s + 1);
      b.seed = seed;
      b.training_loss = net.metadata().final_loss;
      b.batch = recommend_batch(
          candidates, *model, [&](const ReactionCondition& x) { return fingerprint(x, net, encoder); },
          c.batch_size);
      report.batches.push_back(std::move(b));
    }
    if (c.random_baseline) {
      BatchReport b;
      b.label = "Random Batch";
      b.seed = c.random_seed;
      b.batch = random_baseline(c.space, c.batch_size, c.random_seed);
      report.batches.push_back(std::move(b));
    }
    report.log.push_back("phase2: " + std::to_string(c.seeds.size()) + " batches of " +
                         std::to_string(c.batch_size) + " from " + std::to_string(candidates.size()) +
                         " candidates");

    // Phase Three: plan, execute and analyze every recommended condition.
    if (c.phase3.enabled) {
      phase = "phase3";
      const auto def = instrument_from_json(read_json_file(c.resolve(c.phase3.instrument)));
      const auto video = load_video_manifest(c.resolve(c.phase3.video));
      MockOcr ocr(c.phase3.ocr_corruptions);
      const auto setup = prepare_phase3(def, video, c.phase3, ocr, &report.log);
      LLMClient* planner_llm = c.phase3.planner == PlannerKind::LlmAssisted ? &llm_client() : nullptr;
      for (auto& b : report.batches) {
        GroundTruth recovered;
        for (const auto& item : b.batch.items) {
          auto e = run_condition(setup, item.condition, c.phase3.planner, planner_llm, c.phase3.strict);
          e.predicted_yield = item.predicted_yield;
          if (e.exceeds_unity) report.log.push_back("phase3: yield above 1 for " + e.condition.key());
          recovered[e.condition] = e.yield;
          b.executed.push_back(std::move(e));
        }
        b.mu_n = mu_n(b.batch, recovered).mu_n;
      }
      report.log.push_back("phase3: executed " + std::to_string(report.batches.size()) + " batches");
    }
  } catch (const Error& e) {
    report.partial = true;
    report.failed_phase = phase;
    report.error_code = std::string(errc_name(e.code()));
    report.error = e.what();
  } catch (const std::exception& e) {
    report.partial = true;
    report.failed_phase = phase;
    report.error_code = "InternalError";
    report.error = e.what();
  }
  persist();
  return report;
}

}  // namespace condrec
