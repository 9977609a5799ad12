#include <cmath>

#include "condrec/pipeline.hpp"
#include "condrec/retrieval.hpp"
#include "test_util.hpp"

using namespace condrec;

namespace {

EmbeddingVector ev(std::vector<double> v) { return EmbeddingVector{std::move(v)}; }

const std::string kFixtures = CONDREC_FIXTURES;

/// Returns canned vectors and counts calls.
class TableEmbedder final : public Embedder {
 public:
  explicit TableEmbedder(std::map<std::string, std::vector<double>> t) : table_(std::move(t)) {}
  EmbeddingVector embed(std::string_view text) override { return ev(table_.at(std::string(text))); }
  std::size_t dimension() const override { return table_.begin()->second.size(); }

 private:
  std::map<std::string, std::vector<double>> table_;
};

}  // namespace

TEST(SliceDocument, SingleSliceIsIdentity) {
  const auto d = slice_document("alpha beta gamma", 1);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.slices[0], "alpha beta gamma");
}

TEST(SliceDocument, UniformWordsGiveNearEqualSlices) {
  std::string text;
  while (text.size() < 8000) text += "word ";
  text.resize(8000);
  const auto d = slice_document(text, 8);
  ASSERT_EQ(d.size(), 8u);
  for (const auto& s : d.slices) EXPECT_LE(std::abs(static_cast<long>(s.size()) - 1000), 5);
  EXPECT_EQ(d.joined(), text);
}

TEST(SliceDocument, Errors) {
  EXPECT_ERRC(slice_document("abc", 0), Errc::InvalidArgument);
  EXPECT_ERRC(slice_document("abc", 4), Errc::TooManySlices);
}

TEST(SliceDocument, ConcatenationIdentity) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    std::string text;
    const std::size_t words = 1 + rng.index(60);
    for (std::size_t w = 0; w < words; ++w) {
      text += std::string(1 + rng.index(9), static_cast<char>('a' + rng.index(26)));
      text += rng.uniform(0, 1) < 0.2 ? "\n" : " ";
    }
    for (std::size_t n = 1; n <= words; ++n) {
      const auto d = slice_document(text, n);
      ASSERT_EQ(d.size(), n);
      EXPECT_EQ(d.joined(), text);
      for (const auto& s : d.slices) EXPECT_FALSE(s.empty());
    }
  }
}

TEST(CosineDistance, Examples) {
  EXPECT_DOUBLE_EQ(cosine_distance(ev({0.3, 2.0}), ev({0.3, 2.0})), 0.0);
  EXPECT_DOUBLE_EQ(cosine_distance(ev({1, 0}), ev({0, 5})), 1.0);
  EXPECT_NEAR(cosine_distance(ev({1, 0}), ev({1, 1})), 1.0 - 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(CosineDistance, Errors) {
  EXPECT_ERRC(cosine_distance(ev({0, 0}), ev({1, 1})), Errc::ZeroVector);
  EXPECT_ERRC(cosine_distance(ev({1, 0}), ev({1, 1, 1})), Errc::DimMismatch);
}

TEST(CosineDistance, SymmetricAndScaleInvariant) {
  Rng rng(4);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> a(1 + rng.index(32)), b(a.size());
    for (auto& x : a) x = rng.uniform(-1, 1);
    for (auto& x : b) x = rng.uniform(-1, 1);
    const double alpha = rng.uniform(0.01, 100), beta = rng.uniform(0.01, 100);
    auto sa = a, sb = b;
    for (auto& x : sa) x *= alpha;
    for (auto& x : sb) x *= beta;
    const double d = cosine_distance(ev(a), ev(b));
    EXPECT_NEAR(d, cosine_distance(ev(b), ev(a)), 1e-9);
    EXPECT_NEAR(d, cosine_distance(ev(sa), ev(sb)), 1e-9);
  }
}

TEST(L2Similarity, Examples) {
  EXPECT_EQ(l2_similarity(ev({1, 2}), ev({1, 2})), 1.0);
  EXPECT_DOUBLE_EQ(l2_similarity(ev({0, 0}), ev({1, 0})), 0.5);
  EXPECT_NEAR(l2_similarity(ev({0, 0}), ev({3, 4})), 1.0 / 6.0, 1e-15);
  EXPECT_ERRC(l2_similarity(ev({1}), ev({1, 2})), Errc::DimMismatch);
}

TEST(L2Similarity, StrictlyDecreasingInDistance) {
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(4), dir(4);
    for (auto& x : a) x = rng.uniform(-1, 1);
    for (auto& x : dir) x = rng.uniform(-1, 1);
    double prev = 1.0;
    for (double s = 0.1; s < 3; s += 0.1) {
      auto b = a;
      for (std::size_t k = 0; k < 4; ++k) b[k] += s * dir[k];
      const double v = l2_similarity(ev(a), ev(b));
      EXPECT_LT(v, prev);
      prev = v;
    }
  }
}

TEST(SelectTms, SingleSlice) {
  HashingEmbedder e;
  EXPECT_EQ(select_tms(DocumentSlices::from_texts({"only slice"}), "query", SimilarityMetric::CosineDistance, e).index,
            0u);
}

TEST(SelectTms, MetricDirections) {
  TableEmbedder e({{"q", {1, 0}}, {"s0", {0, 1}}, {"s1", {1, 0.1}}, {"s2", {1, 1}}});
  const auto slices = DocumentSlices::from_texts({"s0", "s1", "s2"});
  const auto cos = select_tms(slices, "q", SimilarityMetric::CosineDistance, e);
  const auto l2 = select_tms(slices, "q", SimilarityMetric::L2Similarity, e);
  EXPECT_EQ(cos.index, 1u);
  EXPECT_EQ(l2.index, 1u);
  EXPECT_EQ(cos.scores.size(), 3u);
}

TEST(SelectTms, TiesGoToLowestIndex) {
  TableEmbedder e({{"q", {1, 0}}, {"a", {0, 1}}, {"b", {2, 0}}, {"c", {2, 0}}});
  const auto slices = DocumentSlices::from_texts({"a", "b", "c"});
  EXPECT_EQ(select_tms(slices, "q", SimilarityMetric::CosineDistance, e).index, 1u);
  EXPECT_EQ(select_tms(slices, "q", SimilarityMetric::L2Similarity, e).index, 1u);
}

TEST(SelectTms, CosineArgminInvariantToRescaling) {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    std::vector<EmbeddingVector> slices;
    for (int s = 0; s < 6; ++s) {
      std::vector<double> v(5);
      for (auto& x : v) x = rng.uniform(-1, 1);
      slices.push_back(ev(v));
    }
    std::vector<double> q(5);
    for (auto& x : q) x = rng.uniform(-1, 1);
    const auto base = select_tms_from_embeddings(slices, ev(q), SimilarityMetric::CosineDistance).index;
    for (auto& s : slices) {
      const double k = rng.uniform(0.1, 10);
      for (auto& x : s.values) x *= k;
    }
    EXPECT_EQ(select_tms_from_embeddings(slices, ev(q), SimilarityMetric::CosineDistance).index, base);
  }
}

TEST(SelectTms, BundledDocumentMatchesDirectArgmin) {
  HashingEmbedder e;
  const PromptTemplate tmpl{read_text_file(kFixtures + "/codegen/template.txt"), std::string(kDefaultPlaceholder)};
  const auto slices = slice_document(read_text_file(kFixtures + "/codegen/pubchem_api.txt"), 8);
  const auto q = e.embed(tmpl.fixed_part()).values;
  std::size_t best = 0;
  long double best_d = 3;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto s = e.embed(slices.slices[i]).values;
    long double dot = 0, nq = 0, ns = 0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      dot += static_cast<long double>(q[k]) * s[k];
      nq += static_cast<long double>(q[k]) * q[k];
      ns += static_cast<long double>(s[k]) * s[k];
    }
    const long double d = 1 - dot / std::sqrt(nq * ns);
    if (d < best_d) best_d = d, best = i;
  }
  const auto sel = select_tms(slices, tmpl.fixed_part(), SimilarityMetric::CosineDistance, e);
  EXPECT_EQ(sel.index, best);
  EXPECT_NEAR(sel.score, static_cast<double>(best_d), 1e-12);
}

TEST(AssemblePrompt, Examples) {
  EXPECT_EQ(assemble_prompt({"Q <X>", "<X>"}, "E"), "Q E");
  EXPECT_ERRC(assemble_prompt({"Q only", "<X>"}, "E"), Errc::TemplateError);
  EXPECT_ERRC(assemble_prompt({"<X> Q <X>", "<X>"}, "E"), Errc::TemplateError);
  EXPECT_EQ(assemble_prompt({"Q <X>!", "<X>"}, "a <X> b"), "Q a <X> b!");
}

TEST(HierarchicalMatch, ExactHit) {
  PartialCondition c;
  c.set(Role::Base, "K2CO3");
  InMemoryKnowledgeBase kb({{"T", {c}}});
  TableSimilarityProvider p(std::map<std::string, std::vector<std::string>>{{"T", {"S1"}}});
  const auto out = hierarchical_match(Molecule("T"), kb, p);
  EXPECT_EQ(out.provenance, Provenance::Exact);
  EXPECT_EQ(out.conditions, std::vector<PartialCondition>{c});
}

TEST(HierarchicalMatch, SimilarRank) {
  PartialCondition c;
  c.set(Role::Solvent, "THF");
  InMemoryKnowledgeBase kb({{"S2", {c}}});
  TableSimilarityProvider p({{"T", {"S1", "S2", "S3"}}});
  const auto out = hierarchical_match(Molecule("T"), kb, p);
  EXPECT_EQ(out.provenance, Provenance::SimilarRank);
  EXPECT_EQ(out.rank, 1u);
  EXPECT_EQ(out.matched_smiles, "S2");
  EXPECT_EQ(provenance_label(out), "SimilarRank(1)");
}

TEST(HierarchicalMatch, FallThrough) {
  InMemoryKnowledgeBase kb;
  TableSimilarityProvider p;
  EXPECT_EQ(hierarchical_match(Molecule("T"), kb, p).provenance, Provenance::FallThrough);
}

TEST(HierarchicalMatch, AgreesWithNaiveOracle) {
  Rng rng(21);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = rng.index(11);
    std::vector<std::string> similar;
    for (std::size_t k = 0; k < n; ++k) similar.push_back("S" + std::to_string(k));
    std::map<std::string, std::vector<PartialCondition>> entries;
    PartialCondition c;
    c.set(Role::Ligand, "L");
    if (rng.uniform(0, 1) < 0.2) entries["T"] = {c};
    for (const auto& s : similar)
      if (rng.uniform(0, 1) < 0.25) entries[s] = {c};
    InMemoryKnowledgeBase kb(entries);
    TableSimilarityProvider p({{"T", similar}});
    const std::size_t limit = rng.index(12);
    const auto got = hierarchical_match(Molecule("T"), kb, p, limit);

    std::string expect = "FallThrough";
    if (entries.count("T")) {
      expect = "Exact";
    } else {
      for (std::size_t k = 0; k < std::min(limit, n); ++k)
        if (entries.count(similar[k])) {
          expect = "SimilarRank(" + std::to_string(k) + ")";
          break;
        }
    }
    EXPECT_EQ(provenance_label(got), expect);
  }
}

TEST(CodegenTrials, CountsSuccesses) {
  std::vector<TranscriptEntry> entries;
  for (int i = 0; i < 40; ++i) entries.push_back({TranscriptMatch::Ordinal, "", i % 10 < 7 ? "good" : "bad", {}});
  ScriptedLLM llm(entries);
  HashingEmbedder e;
  CodeGenSetup setup{{"ask <...>", "<...>"}, "one two three four five six seven eight nine ten", 4, "ask", {}};
  const auto r = run_codegen_trials(setup, e, llm, api_pattern_validator("good"), 10, 1);
  for (auto s : kAllStrategies) EXPECT_DOUBLE_EQ(r.stats(s).success_rate, 0.7);
}

TEST(CodegenTrials, MeanTokens) {
  std::vector<TranscriptEntry> entries;
  for (int i = 0; i < 8; ++i) entries.push_back({TranscriptMatch::Ordinal, "", "x", {i % 2 ? 200 : 100, 1, 2.0, 0.5}});
  ScriptedLLM llm(entries);
  HashingEmbedder e;
  CodeGenSetup setup{{"ask <...>", "<...>"}, "alpha beta gamma delta", 2, "ask", {}};
  const auto r = run_codegen_trials(setup, e, llm, api_pattern_validator("x"), 2, 1);
  EXPECT_EQ(r.stats(PromptStrategy::Tms).mean_prompt_tokens, 150.0);
  EXPECT_EQ(r.stats(PromptStrategy::ZeroShot).mean_cost, 0.5);
}

TEST(CodegenTrials, ZeroTrials) {
  ScriptedLLM llm({});
  HashingEmbedder e;
  CodeGenSetup setup{{"ask <...>", "<...>"}, "alpha beta", 2, "ask", {}};
  EXPECT_ERRC(run_codegen_trials(setup, e, llm, api_pattern_validator("x"), 0, 1), Errc::InvalidArgument);
}

/// Records prompts so the strategy prompts can be inspected.
class RecordingLLM final : public LLMClient {
 public:
  std::vector<std::string> prompts;
  LLMResponse complete(std::string_view p) override {
    prompts.emplace_back(p);
    return {"ok", {}};
  }
};

TEST(CodegenTrials, PromptsPerStrategyAndSeededRandomSlice) {
  HashingEmbedder e;
  const std::string doc = "aa bb cc dd ee ff gg hh ii jj kk ll";
  CodeGenSetup setup{{"Q: <...>", "<...>"}, doc, 4, "Q: ", {}};
  RecordingLLM a, b;
  run_codegen_trials(setup, e, a, api_pattern_validator("ok"), 3, 42);
  run_codegen_trials(setup, e, b, api_pattern_validator("ok"), 3, 42);
  ASSERT_EQ(a.prompts.size(), 12u);
  EXPECT_EQ(a.prompts, b.prompts);
  EXPECT_EQ(a.prompts[0], "Q: ");
  EXPECT_EQ(a.prompts[3], "Q: " + doc);
  const auto slices = slice_document(doc, 4);
  for (int t = 6; t < 9; ++t)
    EXPECT_NE(std::find(slices.slices.begin(), slices.slices.end(), a.prompts[t].substr(3)), slices.slices.end());
}
