#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "condrec/pipeline.hpp"
#include "condrec/synth.hpp"
#include "test_util.hpp"

using namespace condrec;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = CONDREC_FIXTURES;

/// Writes the closed-loop fixture once per process; ctest runs tests in parallel processes.
const fs::path& fixture_dir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / ("condrec_pipeline_fixture_" + std::to_string(::getpid()));
    fs::remove_all(d);
    synth::write_closed_loop_fixture(d);
    return d;
  }();
  return dir;
}

nlohmann::json fixture_config() { return read_json_file((fixture_dir() / "config.json").string()); }

/// Config with short training and outputs redirected to `tag`.
PipelineConfig quick_config(nlohmann::json j, const std::string& tag) {
  j["scl"]["epochs"] = 40;
  j["output"] = {{"json", tag + ".json"}, {"markdown", tag + ".md"}};
  return parse_pipeline_config(j, fixture_dir());
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(CONDREC_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// -------------------------------------------------------------------- fill-in

TEST(FillIn, RetrievedBaseAndSolventLeaveHundred) {
  PartialCondition p;
  p.set(Role::Base, "K2CO3").set(Role::Solvent, "Dioxane: H2O = 9:1");
  EXPECT_EQ(fill_in(p, synth::full_space()).size(), 100u);
}

TEST(FillIn, NothingFixedAndEverythingFixed) {
  const auto space = synth::full_space();
  EXPECT_EQ(fill_in(PartialCondition{}, space), space);
  EXPECT_EQ(fill_in(std::vector<PartialCondition>{}, space), space);
  const auto one = enumerate_space(space)[777];
  EXPECT_EQ(enumerate_space(fill_in(PartialCondition::from(one), space)), std::vector<ReactionCondition>{one});
}

TEST(FillIn, UnknownValueRejected) {
  PartialCondition p;
  p.set(Role::Base, "NaH");
  EXPECT_ERRC(fill_in(p, synth::full_space()), Errc::UnknownCandidate);
}

TEST(FillIn, FilterKeepsOnlyOfferedValues) {
  PartialCondition p;
  p.set(Role::Base, "K2CO3").set(Role::Catalyst, "Pd(dppf)Cl2");
  const auto f = filter_to_space(p, synth::full_space());
  EXPECT_EQ(f.applied.get(Role::Base), "K2CO3");
  EXPECT_FALSE(f.applied.get(Role::Catalyst));
  EXPECT_EQ(f.ignored, std::vector<std::string>{"catalyst=Pd(dppf)Cl2"});
}

// --------------------------------------------------------------------- config

TEST(Config, FixtureParses) {
  const auto c = load_pipeline_config((fixture_dir() / "config.json").string());
  EXPECT_EQ(c.space.size(), 10000u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.batch_size, 5u);
  EXPECT_TRUE(c.phase3.enabled);
  EXPECT_EQ(c.resolve("train.csv"), (fixture_dir() / "train.csv").lexically_normal().string());
}

TEST(Config, Errors) {
  auto j = fixture_config();
  j.erase("target_smiles");
  EXPECT_ERRC(parse_pipeline_config(j, fixture_dir()), Errc::ConfigError);
  j = fixture_config();
  j["seeds"] = nlohmann::json::array();
  EXPECT_ERRC(parse_pipeline_config(j, fixture_dir()), Errc::ConfigError);
  j = fixture_config();
  j["batch_size"] = 0;
  EXPECT_ERRC(parse_pipeline_config(j, fixture_dir()), Errc::ConfigError);
  j = fixture_config();
  j["phase3"]["planner"] = "psychic";
  EXPECT_ERRC(parse_pipeline_config(j, fixture_dir()), Errc::ConfigError);
  j = fixture_config();
  j["scl"]["tau"] = -1;
  EXPECT_ERRC(parse_pipeline_config(j, fixture_dir()), Errc::ConfigError);
  EXPECT_ERRC(load_pipeline_config("/nonexistent/config.json"), Errc::ConfigError);
}

TEST(Config, InlineSpaceAndNoPhase3) {
  auto j = fixture_config();
  j["space"] = synth::full_space();
  j.erase("phase3");
  const auto c = parse_pipeline_config(j, fixture_dir());
  EXPECT_EQ(c.space, synth::full_space());
  EXPECT_FALSE(c.phase3.enabled);
}

// -------------------------------------------------------------------- run_all

TEST(RunAll, ClosedLoopShapeAndConsistency) {
  const auto c = quick_config(fixture_config(), "shape");
  const auto r = run_all(c);
  ASSERT_FALSE(r.partial) << r.error;
  EXPECT_EQ(r.phase1.outcome.provenance, Provenance::SimilarRank);
  EXPECT_EQ(r.phase1.outcome.rank, 1u);
  EXPECT_EQ(r.phase1.space_size_before, 10000u);
  EXPECT_EQ(r.phase1.space_size_after, 100u);
  EXPECT_EQ(r.phase1.ignored, std::vector<std::string>{"catalyst=Pd(dppf)Cl2"});
  ASSERT_EQ(r.batches.size(), 4u);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& batch = r.batches[b];
    ASSERT_EQ(batch.batch.size(), 5u);
    ASSERT_EQ(batch.executed.size(), 5u);
    GroundTruth recovered;
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_EQ(batch.executed[i].condition, batch.batch.items[i].condition);
      EXPECT_TRUE(r.phase1.space.contains(batch.batch.items[i].condition));
      EXPECT_GE(batch.executed[i].yield, 0.0);
      EXPECT_LE(batch.executed[i].yield, 1.0);
      recovered[batch.executed[i].condition] = batch.executed[i].yield;
    }
    EXPECT_EQ(*batch.mu_n, mu_n(batch.batch, recovered).mu_n);
  }
  EXPECT_EQ(r.batches[3].label, "Random Batch");
  EXPECT_TRUE(fs::exists(fixture_dir() / "shape.json"));
  EXPECT_TRUE(fs::exists(fixture_dir() / "shape.md"));
}

TEST(RunAll, RecoveredYieldsMatchHiddenModel) {
  const auto c = quick_config(fixture_config(), "hidden");
  const auto r = run_all(c);
  ASSERT_FALSE(r.partial) << r.error;
  const auto def = instrument_from_json(read_json_file((fixture_dir() / "instrument.json").string()));
  for (const auto& b : r.batches)
    for (const auto& e : b.executed) EXPECT_NEAR(e.yield, evaluate_hidden_yield(def.hidden_yield, e.condition), 1e-9);
}

TEST(RunAll, BitDeterministic) {
  const auto c = quick_config(fixture_config(), "det");
  EXPECT_EQ(report_json_text(run_all(c)), report_json_text(run_all(c)));
}

TEST(RunAll, FallThroughKeepsFullSpace) {
  auto j = fixture_config();
  j.erase("knowledge_base");
  j.erase("phase3");
  const auto r = run_all(quick_config(j, "fallthrough"));
  ASSERT_FALSE(r.partial) << r.error;
  EXPECT_EQ(r.phase1.outcome.provenance, Provenance::FallThrough);
  EXPECT_EQ(r.phase1.space_size_after, 10000u);
  EXPECT_EQ(r.batches.size(), 4u);
  EXPECT_TRUE(r.batches[0].executed.empty());
}

TEST(RunAll, MissingInstrumentFailsBeforeExecution) {
  auto j = fixture_config();
  j["phase3"]["instrument"] = "missing.json";
  const auto r = run_all(quick_config(j, "missing"));
  EXPECT_TRUE(r.partial);
  EXPECT_EQ(r.failed_phase, "phase3");
  EXPECT_EQ(r.error_code, "ConfigError");
  EXPECT_TRUE(r.batches.empty());
  EXPECT_EQ(exit_code_for(r), 2);
  const auto persisted = report_from_json(read_json_file((fixture_dir() / "missing.json").string()));
  EXPECT_TRUE(persisted.partial);
}

TEST(RunAll, PlannerFailureIsPhaseTagged) {
  auto j = fixture_config();
  j["phase3"]["ocr_corruptions"] = {{"Amphos", "Arnphos"}, {"SPhos", "5Phos"}, {"PPh3", "PPb3"}, {"Xphos", "XpI1os"},
                                    {"dppp", "dpqp"},     {"dppe", "clppe"},   {"Xantphos", "Xantph0s"},
                                    {"dppf", "dppt"},     {"cataCXium A", "cataCXiurn A"}, {"JohnPhos", "J0hnPhos"}};
  const auto r = run_all(quick_config(j, "corrupt"));
  EXPECT_TRUE(r.partial);
  EXPECT_EQ(r.failed_phase, "phase3");
  EXPECT_EQ(r.error_code, "UnmatchedLabel");
  EXPECT_EQ(exit_code_for(r), 4);
  EXPECT_EQ(r.batches.size(), 4u);  // phase two output is kept
}

TEST(RunAll, CodegenTrialsRecorded) {
  auto j = fixture_config();
  j.erase("phase3");
  j["gateways"] = {{"llm", {{"endpoint", "mock:transcript"}, {"transcript", kFixtures + "/codegen/transcript.json"}}}};
  j["retrieval"]["codegen"] = {{"document", kFixtures + "/codegen/pubchem_api.txt"},
                               {"template", kFixtures + "/codegen/template.txt"},
                               {"validator", "fastsimilarity_2d/smiles"},
                               {"trials", 10}};
  const auto r = run_all(quick_config(j, "codegen"));
  ASSERT_FALSE(r.partial) << r.error;
  ASSERT_TRUE(r.phase1.codegen);
  HashingEmbedder e;
  const PromptTemplate tmpl{read_text_file(kFixtures + "/codegen/template.txt"), std::string(kDefaultPlaceholder)};
  const auto slices = slice_document(read_text_file(kFixtures + "/codegen/pubchem_api.txt"), 8);
  EXPECT_EQ(r.phase1.codegen->tms.index,
            select_tms(slices, tmpl.fixed_part(), SimilarityMetric::CosineDistance, e).index);
  EXPECT_EQ(r.phase1.codegen->stats(PromptStrategy::Tms).success_rate, 0.9);
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(Errc::ConfigError), 2);
  EXPECT_EQ(exit_code_for(Errc::SchemaError), 2);
  EXPECT_EQ(exit_code_for(Errc::GatewayUnavailable), 3);
  EXPECT_EQ(exit_code_for(Errc::TranscriptMiss), 3);
  EXPECT_EQ(exit_code_for(Errc::PlanRejected), 4);
  EXPECT_EQ(exit_code_for(PipelineReport{}), 0);
}

// --------------------------------------------------------------------- report

TEST(Report, TableFixtureMarkdown) {
  const auto r = report_from_batches(ingest_batches_file(kFixtures + "/table3.csv"));
  ASSERT_EQ(r.batches.size(), 4u);
  EXPECT_EQ(r.batches[1].label, "Experimental Batch #2");
  EXPECT_EQ(*r.batches[1].mu_n, 0.986);
  EXPECT_EQ(*r.batches[3].mu_n, 0.515);
  const auto md = render_markdown(r);
  std::size_t rows = 0;
  std::istringstream lines(md);
  for (std::string line; std::getline(lines, line);)
    if (line.rfind("| ", 0) == 0 && std::isdigit(static_cast<unsigned char>(line[2]))) ++rows;
  EXPECT_EQ(rows, 20u);
  EXPECT_NE(md.find("| Reaction No. | Batch | Reactant1 | Reactant2 | Ligand | Base | Solvent | Yield |"),
            std::string::npos);
}

TEST(Report, EmptyReportHasHeadersOnly) {
  const auto md = render_markdown(PipelineReport{});
  EXPECT_NE(md.find("| Reaction No. |"), std::string::npos);
  EXPECT_EQ(md.find("| 1 |"), std::string::npos);
}

TEST(Report, JsonRoundTripIsIdempotent) {
  const auto r = run_all(quick_config(fixture_config(), "roundtrip"));
  const auto text = report_json_text(r);
  EXPECT_EQ(report_json_text(report_from_json(nlohmann::json::parse(text))), text);
  const auto table = report_from_batches(ingest_batches_file(kFixtures + "/table3.csv"));
  const auto t2 = report_json_text(table);
  EXPECT_EQ(report_json_text(report_from_json(nlohmann::json::parse(t2))), t2);
}

TEST(Report, UnwritablePath) {
  EXPECT_ERRC(emit_report(PipelineReport{}, std::string("/nonexistent/dir/r.json"), std::nullopt), Errc::IoError);
}

TEST(Report, BatchCsvNeedsBatchColumn) {
  std::istringstream in("electrophile_smiles,nucleophile_smiles,catalyst,ligand,base,solvent,yield\nA,B,C,D,E,F,0.1\n");
  EXPECT_ERRC(ingest_batches(in), Errc::SchemaError);
}

// ------------------------------------------------------------------------ CLI

TEST(Cli, SubcommandsAndExitCodes) {
  const auto out = fs::temp_directory_path() / ("condrec_cli_test_" + std::to_string(::getpid()));
  fs::remove_all(out);
  fs::create_directories(out);
  const std::string fx = fixture_dir().string();
  EXPECT_EQ(run_cli("score --batches " + kFixtures + "/table3.csv --report " + (out / "score.json").string()), 0);
  EXPECT_EQ(report_from_json(read_json_file((out / "score.json").string())).batches.size(), 4u);
  EXPECT_EQ(run_cli("retrieve --target-smiles '" + std::string(synth::kTargetSmiles) + "' --kb " + fx +
                    "/knowledge_base.json --similar " + fx + "/similar_molecules.json --space " + fx +
                    "/space.json --report " + (out / "retrieve.json").string()),
            0);
  EXPECT_EQ(read_json_file((out / "retrieve.json").string()).at("space_size_after"), 100);
  EXPECT_EQ(run_cli("bench-codegen --document " + kFixtures + "/codegen/pubchem_api.txt --template " + kFixtures +
                    "/codegen/template.txt --transcript " + kFixtures +
                    "/codegen/transcript.json --validator fastsimilarity_2d/smiles --report " +
                    (out / "codegen.json").string()),
            0);
  EXPECT_EQ(run_cli("train --train " + fx + "/train.csv --out " + (out / "model.json").string()), 0);
  EXPECT_TRUE(fs::exists(out / "model.json"));
  EXPECT_EQ(run_cli("recommend --train " + fx + "/train.csv --space " + fx + "/space.json --seeds 1,2 --report " +
                    (out / "rec.json").string()),
            0);
  EXPECT_EQ(run_cli("simulate --instrument " + fx + "/instrument.json --video " + fx +
                    "/video/manifest.json --condition '" +
                    nlohmann::json(enumerate_space(synth::full_space())[5]).dump() + "' --report " +
                    (out / "sim.json").string()),
            0);
  EXPECT_EQ(run_cli("run"), 2);
  EXPECT_EQ(run_cli("recommend --train " + fx + "/train.csv --space " + fx + "/space.json --model xgb"), 4);
  EXPECT_EQ(run_cli("retrieve --target-smiles C --similar-endpoint http://127.0.0.1:1 --kb " + fx +
                    "/knowledge_base.json"),
            3);
}
