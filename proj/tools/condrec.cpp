#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "condrec/condrec.hpp"

using namespace condrec;
using nlohmann::json;

namespace {

void emit_json(const json& j, const std::string& path) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty() || path == "-")
    std::cout << text;
  else
    write_file(path, text);
}

SCLConfig scl_from(const std::string& path) {
  if (path.empty()) return {};
  return read_json_file(path).get<SCLConfig>();
}

std::vector<std::uint64_t> default_seeds(std::vector<std::uint64_t> seeds) {
  if (seeds.empty()) seeds = {0};
  return seeds;
}

int cmd_run(const std::string& config_path, const std::string& report, const std::string& markdown) {
  auto config = load_pipeline_config(config_path);
  if (!report.empty()) config.output_json = std::filesystem::absolute(report).string();
  if (!markdown.empty()) config.output_markdown = std::filesystem::absolute(markdown).string();
  const auto result = run_all(config);
  for (const auto& line : result.log) std::cerr << line << '\n';
  for (const auto& b : result.batches)
    if (b.mu_n) std::cout << b.label << ": mu_" << b.batch.size() << " = " << format_real(*b.mu_n) << '\n';
  if (result.partial) {
    std::cerr << "error [" << result.failed_phase << "] " << result.error_code << ": " << result.error << '\n';
    return exit_code_for(result);
  }
  return 0;
}

struct RetrieveArgs {
  std::string target, kb, similar, endpoint = "mock:table", report;
  std::size_t max_candidates = kDefaultMaxCandidates;
  std::string space;
};

int cmd_retrieve(const RetrieveArgs& a) {
  InMemoryKnowledgeBase kb;
  if (!a.kb.empty()) kb = InMemoryKnowledgeBase::from_json(read_json_file(a.kb));
  std::unique_ptr<SimilarMoleculeProvider> provider;
  GatewayConfig gw;
  gw.endpoint = a.endpoint;
  if (!gw.is_mock())
    provider = std::make_unique<HttpSimilarityProvider>(gw);
  else if (!a.similar.empty())
    provider = std::make_unique<TableSimilarityProvider>(TableSimilarityProvider::from_json(read_json_file(a.similar)));
  else
    provider = std::make_unique<TableSimilarityProvider>();
  const auto outcome = hierarchical_match(Molecule(a.target), kb, *provider, a.max_candidates);
  json out = {{"target", a.target}, {"retrieval", outcome}};
  if (!a.space.empty()) {
    const auto space = read_json_file(a.space).get<ReactionSpace>();
    out["space_size_before"] = enumerate_space(space).size();
    if (!outcome.conditions.empty()) {
      const auto filtered = outcome.provenance == Provenance::Exact
                                ? FilterOutcome{outcome.conditions.front(), {}}
                                : filter_to_space(outcome.conditions.front(), space);
      const auto narrowed = fill_in(filtered.applied, space);
      out["applied"] = filtered.applied;
      out["ignored"] = filtered.ignored;
      out["space"] = narrowed;
      out["space_size_after"] = enumerate_space(narrowed).size();
    } else {
      out["space_size_after"] = out["space_size_before"];
    }
  }
  emit_json(out, a.report);
  return 0;
}

struct TrainArgs {
  std::string train, config, out = "model.json", fingerprints, report;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  const auto records = ingest_dataset_file(a.train);
  auto config = scl_from(a.config);
  if (a.seed) config.seed = *a.seed;
  const TokenCountEncoder encoder;
  const auto net = train_scl(records, encoder, config);
  write_file(a.out, json(net).dump() + "\n");
  if (!a.fingerprints.empty()) {
    std::ofstream csv(a.fingerprints, std::ios::binary);
    if (!csv) fail(Errc::IoError, "cannot write '" + a.fingerprints + "'");
    std::vector<ReactionCondition> conditions;
    for (const auto& r : records) conditions.push_back(r.condition);
    write_fingerprints_csv(csv, conditions, net, encoder);
  }
  const auto& meta = net.metadata();
  json report = {{"records", records.size()},
                 {"seed", meta.seed},
                 {"epochs_run", meta.epochs_run},
                 {"final_loss", meta.final_loss},
                 {"degenerate", meta.degenerate},
                 {"model", a.out}};
  if (!a.report.empty()) emit_json(report, a.report);
  std::cout << "trained " << records.size() << " records, final loss " << format_real(meta.final_loss) << '\n';
  return 0;
}

struct RecommendArgs {
  std::string train, space, model = "knn", truth, config, report;
  std::size_t batch_size = 5;
  std::vector<std::uint64_t> seeds;
  bool include_training = false;
  std::optional<std::uint64_t> random_seed;
};

int cmd_recommend(const RecommendArgs& a) {
  const auto records = ingest_dataset_file(a.train);
  const auto space = read_json_file(a.space).get<ReactionSpace>();
  const auto seeds = default_seeds(a.seeds);
  const TokenCountEncoder encoder;
  const auto registry = RegressorRegistry::with_builtins();
  EvaluationConfig cfg;
  cfg.scl = scl_from(a.config);
  cfg.model = a.model;
  cfg.exclude_training = !a.include_training;
  json out = {{"model", a.model}, {"batch_size", a.batch_size}, {"seeds", json::array()}};

  if (!a.truth.empty()) {
    const auto truth = ground_truth_from(ingest_dataset_file(a.truth));
    const auto eval = evaluate_pipeline(records, truth, space, cfg, a.batch_size, seeds, encoder, registry);
    for (const auto& r : eval.per_seed)
      out["seeds"].push_back({{"seed", r.seed}, {"batch", r.batch}, {"observed", r.observed}, {"mu_n", r.mu_n}});
    out["mean_mu_n"] = eval.mean_mu_n;
    std::cout << "mean mu_" << a.batch_size << " = " << format_real(eval.mean_mu_n) << '\n';
    if (a.random_seed) {
      const auto batch = random_baseline(space, a.batch_size, *a.random_seed);
      const auto scored = mu_n(batch, truth);
      out["random_baseline"] = {{"seed", *a.random_seed}, {"batch", batch}, {"mu_n", scored.mu_n}};
      std::cout << "random mu_" << a.batch_size << " = " << format_real(scored.mu_n) << '\n';
    }
  } else {
    std::set<ReactionCondition> trained;
    for (const auto& r : records) trained.insert(r.condition);
    std::vector<ReactionCondition> candidates;
    for (auto& c : enumerate_space(space))
      if (a.include_training || !trained.count(c)) candidates.push_back(std::move(c));
    for (auto seed : seeds) {
      SCLConfig scl = cfg.scl;
      scl.seed = seed;
      const auto net = train_scl(records, encoder, scl);
      std::vector<TrainingPair> pairs;
      for (const auto& r : records) pairs.emplace_back(fingerprint(r.condition, net, encoder), r.yield);
      RegressorOptions ropt;
      ropt.seed = seed;
      const auto model = fit_regressor(a.model, pairs, ropt, registry);
      const auto batch = recommend_batch(
          candidates, *model, [&](const ReactionCondition& c) { return fingerprint(c, net, encoder); },
          a.batch_size);
      out["seeds"].push_back({{"seed", seed}, {"batch", batch}});
    }
    if (a.random_seed)
      out["random_baseline"] = {{"seed", *a.random_seed},
                                {"batch", random_baseline(space, a.batch_size, *a.random_seed)}};
  }
  emit_json(out, a.report);
  return 0;
}

struct SimulateArgs {
  std::string instrument, video, condition, batch, planner = "deterministic", transcript, report;
  bool lenient = false;
};

int cmd_simulate(const SimulateArgs& a) {
  const auto def = instrument_from_json(read_json_file(a.instrument));
  const auto video = load_video_manifest(a.video);
  Phase3Settings settings;
  settings.strict = !a.lenient;
  settings.planner = a.planner == "llm" ? PlannerKind::LlmAssisted : PlannerKind::Deterministic;
  if (a.planner != "llm" && a.planner != "deterministic")
    fail(Errc::ConfigError, "--planner must be 'deterministic' or 'llm'");
  std::unique_ptr<LLMClient> llm;
  if (settings.planner == PlannerKind::LlmAssisted) {
    if (a.transcript.empty()) fail(Errc::ConfigError, "--planner llm needs --transcript");
    llm = std::make_unique<ScriptedLLM>(parse_transcript(read_json_file(a.transcript)));
  }
  MockOcr ocr;
  std::vector<std::string> log;
  const auto setup = prepare_phase3(def, video, settings, ocr, &log);
  for (const auto& line : log) std::cerr << line << '\n';

  std::vector<ReactionCondition> targets;
  if (!a.condition.empty()) targets.push_back(condition_from_json(json::parse(a.condition)));
  if (!a.batch.empty()) {
    const auto j = read_json_file(a.batch);
    for (const auto& e : j) targets.push_back(condition_from_json(e.contains("condition") ? e.at("condition") : e));
  }
  if (targets.empty()) fail(Errc::InvalidArgument, "give --condition or --batch");
  json out = {{"initialization_script", setup.initialization},
              {"commit_script", setup.commit},
              {"reactions", json::array()}};
  for (const auto& t : targets) {
    const auto e = run_condition(setup, t, settings.planner, llm.get(), settings.strict);
    out["reactions"].push_back(e);
    std::cout << t.key() << " -> yield " << format_real(e.yield) << '\n';
  }
  if (!a.report.empty()) emit_json(out, a.report);
  return 0;
}

struct CodegenArgs {
  std::string document, prompt_template, transcript, validator, query, metric = "cosine", report;
  std::string placeholder = std::string(kDefaultPlaceholder);
  std::size_t slices = 8, trials = 10;
  std::uint64_t seed = 0;
};

int cmd_bench_codegen(const CodegenArgs& a) {
  CodeGenSetup setup;
  setup.prompt_template = {read_text_file(a.prompt_template), a.placeholder};
  setup.document = read_text_file(a.document);
  setup.slices = a.slices;
  setup.metric = parse_metric(a.metric);
  setup.query = a.query.empty() ? setup.prompt_template.fixed_part() : a.query;
  HashingEmbedder embedder;
  ScriptedLLM llm(parse_transcript(read_json_file(a.transcript)));
  const auto report = run_codegen_trials(setup, embedder, llm, api_pattern_validator(a.validator), a.trials, a.seed);
  for (const auto& s : report.strategies)
    std::cout << strategy_name(s.strategy) << ": " << s.successes << "/" << s.trials << " succeeded\n";
  if (!a.report.empty()) emit_json(report, a.report);
  return 0;
}

int cmd_score(const std::string& batches, const std::string& report, const std::string& markdown) {
  const auto r = report_from_batches(ingest_batches_file(batches));
  for (const auto& b : r.batches) std::cout << b.label << ": mu_" << b.batch.size() << " = " << format_real(*b.mu_n) << '\n';
  emit_report(r, report.empty() ? std::nullopt : std::optional(report),
              markdown.empty() ? std::nullopt : std::optional(markdown));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"condrec: retrieval-narrowed, fingerprint-driven reaction condition recommendation"};
  app.require_subcommand(1);

  std::string config_path, run_report, run_markdown;
  auto* run = app.add_subcommand("run", "Run all three phases from a config file");
  run->add_option("--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--report", run_report, "Override the JSON report path");
  run->add_option("--markdown", run_markdown, "Override the markdown report path");

  RetrieveArgs ra;
  auto* retrieve = app.add_subcommand("retrieve", "Hierarchical knowledge-base match for a target molecule");
  retrieve->add_option("--target-smiles", ra.target, "Target product SMILES")->required();
  retrieve->add_option("--kb", ra.kb, "Knowledge base JSON");
  retrieve->add_option("--similar", ra.similar, "Similar-molecule table JSON");
  retrieve->add_option("--similar-endpoint", ra.endpoint, "Similarity gateway (mock:table or URL)");
  retrieve->add_option("--max-candidates", ra.max_candidates, "Similar molecules to try");
  retrieve->add_option("--space", ra.space, "Reaction space JSON to narrow");
  retrieve->add_option("--report", ra.report, "JSON output path (default stdout)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the contrastive fingerprint network");
  train->add_option("--train", ta.train, "Training dataset CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--config", ta.config, "SCL config JSON");
  train->add_option("--seed", ta.seed, "Override the config seed");
  train->add_option("--out", ta.out, "Model output path");
  train->add_option("--fingerprints", ta.fingerprints, "Write training fingerprints as CSV");
  train->add_option("--report", ta.report, "JSON training summary path");

  RecommendArgs rc;
  auto* recommend = app.add_subcommand("recommend", "Recommend top-N batches (and score them against ground truth)");
  recommend->add_option("--train", rc.train, "Training dataset CSV")->required()->check(CLI::ExistingFile);
  recommend->add_option("--space", rc.space, "Reaction space JSON")->required()->check(CLI::ExistingFile);
  recommend->add_option("--model", rc.model, "Regressor kind (knn, bagged-trees)");
  recommend->add_option("--batch-size", rc.batch_size, "N");
  recommend->add_option("--seeds", rc.seeds, "Seeds, one batch each")->delimiter(',');
  recommend->add_option("--truth", rc.truth, "Ground-truth dataset CSV for mu_N scoring");
  recommend->add_option("--config", rc.config, "SCL config JSON");
  recommend->add_option("--random-seed", rc.random_seed, "Also draw a random baseline batch");
  recommend->add_flag("--include-training", rc.include_training, "Allow training conditions as candidates");
  recommend->add_option("--report", rc.report, "JSON output path (default stdout)");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Plan, execute and analyze conditions on the virtual instrument");
  simulate->add_option("--instrument", sa.instrument, "Instrument definition JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--video", sa.video, "Demonstration video manifest")->required()->check(CLI::ExistingFile);
  simulate->add_option("--condition", sa.condition, "Condition as inline JSON object");
  simulate->add_option("--batch", sa.batch, "JSON array of conditions (or recommended items)");
  simulate->add_option("--planner", sa.planner, "deterministic or llm");
  simulate->add_option("--transcript", sa.transcript, "LLM transcript for --planner llm");
  simulate->add_flag("--lenient", sa.lenient, "Ignore clicks that hit no widget");
  simulate->add_option("--report", sa.report, "JSON output path");

  CodegenArgs ca;
  auto* codegen = app.add_subcommand("bench-codegen", "Compare prompting strategies on a scripted LLM");
  codegen->add_option("--document", ca.document, "API documentation text")->required()->check(CLI::ExistingFile);
  codegen->add_option("--template", ca.prompt_template, "Prompt template with a placeholder")->required()->check(CLI::ExistingFile);
  codegen->add_option("--transcript", ca.transcript, "LLM transcript JSON")->required()->check(CLI::ExistingFile);
  codegen->add_option("--validator", ca.validator, "Regex a correct response must contain")->required();
  codegen->add_option("--placeholder", ca.placeholder, "Template placeholder");
  codegen->add_option("--query", ca.query, "Text compared against slices (default: template fixed part)");
  codegen->add_option("--slices", ca.slices, "Number of document slices");
  codegen->add_option("--metric", ca.metric, "cosine or l2");
  codegen->add_option("--trials", ca.trials, "Trials per strategy");
  codegen->add_option("--seed", ca.seed, "Seed for random-slice draws");
  codegen->add_option("--report", ca.report, "JSON output path");

  std::string batches, score_report, score_markdown;
  auto* score = app.add_subcommand("score", "Score recorded batches (CSV with a batch column) by mu_N");
  score->add_option("--batches", batches, "Batch CSV")->required()->check(CLI::ExistingFile);
  score->add_option("--report", score_report, "JSON report path");
  score->add_option("--markdown", score_markdown, "Markdown report path");

  std::string fixture_dir;
  std::uint64_t fixture_seed = 7;
  auto* fixture = app.add_subcommand("synth-fixture", "Write the all-mock closed-loop fixture");
  fixture->add_option("--out", fixture_dir, "Output directory")->required();
  fixture->add_option("--seed", fixture_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_parse = app.exit(e);
    return rc_parse == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(config_path, run_report, run_markdown);
    if (*retrieve) return cmd_retrieve(ra);
    if (*train) return cmd_train(ta);
    if (*recommend) return cmd_recommend(rc);
    if (*simulate) return cmd_simulate(sa);
    if (*codegen) return cmd_bench_codegen(ca);
    if (*score) return cmd_score(batches, score_report, score_markdown);
    if (*fixture) {
      synth::write_closed_loop_fixture(fixture_dir, fixture_seed);
      std::cout << "fixture written to " << fixture_dir << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error " << errc_name(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    std::cerr << "error SchemaError: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
