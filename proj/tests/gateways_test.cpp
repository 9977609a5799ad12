#include <atomic>
#include <cmath>
#include <thread>

#include "condrec/gateways.hpp"
#include "condrec/http_gateways.hpp"
#include "condrec/retrieval.hpp"
#include "test_util.hpp"

using namespace condrec;

namespace {

// Independent FNV-1a for checking bucket assignments.
std::uint64_t ref_fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

TEST(HashingEmbedder, Deterministic) {
  HashingEmbedder e;
  EXPECT_EQ(e.embed("suzuki coupling of aryl halides"), e.embed("suzuki coupling of aryl halides"));
  HashingEmbedder other;
  EXPECT_EQ(e.embed("x y z"), other.embed("x y z"));
}

TEST(HashingEmbedder, OrderFree) {
  HashingEmbedder e;
  EXPECT_EQ(e.embed("a b"), e.embed("b a"));
  EXPECT_EQ(e.embed("A  b"), e.embed("b\ta"));
}

TEST(HashingEmbedder, DisjointTokensAreOrthogonalWithoutCollisions) {
  HashingEmbedder e;
  const std::vector<std::string> left = {"palladium", "ligand", "base"}, right = {"solvent", "water", "yield"};
  std::set<std::size_t> lb;
  for (const auto& t : left) lb.insert(ref_fnv(t) % 256);
  bool collide = false;
  for (const auto& t : right) collide = collide || lb.count(ref_fnv(t) % 256);
  for (const auto& t : left) EXPECT_EQ(e.bucket(t), ref_fnv(t) % 256);
  ASSERT_FALSE(collide);
  EXPECT_NEAR(cosine_distance(e.embed("palladium ligand base"), e.embed("solvent water yield")), 1.0, 1e-12);
}

TEST(HashingEmbedder, UnitNorm) {
  HashingEmbedder e(64);
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::string text;
    for (std::size_t k = 0; k <= rng.index(30); ++k) text += "tok" + std::to_string(rng.index(100)) + " ";
    const auto v = e.embed(text);
    double sq = 0;
    for (double x : v.values) sq += x * x;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);
  }
}

TEST(HashingEmbedder, EmptyInput) {
  HashingEmbedder e;
  EXPECT_ERRC(e.embed("   \n "), Errc::EmptyInput);
}

TEST(ScriptedLLM, PlaybackUsesFixtureMetrics) {
  ScriptedLLM llm({{TranscriptMatch::Exact, "P", "T", {120, 30, 5.0, 0.01}}});
  const auto r = llm.complete("P");
  EXPECT_EQ(r.text, "T");
  EXPECT_EQ(r.metrics.prompt_tokens, 120);
  EXPECT_EQ(r.metrics.completion_tokens, 30);
}

TEST(ScriptedLLM, OrdinalEntriesConsumedInOrder) {
  ScriptedLLM llm({{TranscriptMatch::Ordinal, "", "first", {}}, {TranscriptMatch::Ordinal, "", "second", {}}});
  EXPECT_EQ(llm.complete("anything").text, "first");
  EXPECT_EQ(llm.complete("anything").text, "second");
  EXPECT_ERRC(llm.complete("anything"), Errc::TranscriptMiss);
}

TEST(ScriptedLLM, KeyedMiss) {
  ScriptedLLM llm({{TranscriptMatch::Exact, "P", "T", {}}});
  EXPECT_ERRC(llm.complete("Q"), Errc::TranscriptMiss);
  EXPECT_ERRC(llm.complete(""), Errc::EmptyInput);
}

TEST(ScriptedLLM, PricingOverridesFixtureCost) {
  ScriptedLLM llm({{TranscriptMatch::Exact, "P", "T", {100, 10, 1.0, 99.0}}}, Pricing{0.001, 0.002});
  EXPECT_DOUBLE_EQ(llm.complete("P").metrics.cost, 100 * 0.001 + 10 * 0.002);
}

TEST(ScriptedLLM, TranscriptJson) {
  const auto entries = parse_transcript(nlohmann::json::parse(
      R"([{"match":"exact","prompt":"p","text":"t","usage":{"prompt_tokens":3,"completion_tokens":4,"latency_ms":1.5,"cost":0.2}},
          {"match":"ordinal","text":"u","label":"ignored"}])"));
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].usage.completion_tokens, 4);
  EXPECT_EQ(entries[1].match, TranscriptMatch::Ordinal);
  EXPECT_ERRC(parse_transcript(nlohmann::json::parse(R"([{"match":"fuzzy"}])")), Errc::SchemaError);
}

TEST(ScriptedLLM, ConcurrentCallersEachGetOneEntry) {
  std::vector<TranscriptEntry> entries;
  for (int i = 0; i < 64; ++i) entries.push_back({TranscriptMatch::Ordinal, "", std::to_string(i), {}});
  ScriptedLLM llm(entries);
  std::vector<std::thread> threads;
  std::mutex m;
  std::set<std::string> seen;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int k = 0; k < 8; ++k) {
        auto text = llm.complete("q").text;
        std::lock_guard lock(m);
        seen.insert(text);
      }
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(seen.size(), 64u);
}

TEST(SimilarMolecules, Truncation) {
  TableSimilarityProvider p({{"S", {"S1", "S2", "S3"}}});
  const auto out = p.similar_molecules("S", 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].smiles(), "S1");
  EXPECT_EQ(out[1].smiles(), "S2");
}

TEST(SimilarMolecules, UnknownIsEmpty) {
  TableSimilarityProvider p(std::map<std::string, std::vector<std::string>>{{"S", {"S1"}}});
  EXPECT_TRUE(p.similar_molecules("X", 3).empty());
}

TEST(SimilarMolecules, ZeroLimit) {
  TableSimilarityProvider p;
  EXPECT_ERRC(p.similar_molecules("S", 0), Errc::InvalidLimit);
}

TEST(KnowledgeBase, LookupHitAndMiss) {
  PartialCondition c1, c2;
  c1.set(Role::Ligand, "SPhos");
  c2.set(Role::Ligand, "XPhos");
  InMemoryKnowledgeBase kb({{"P", {c1, c2}}});
  const auto hit = kb.lookup_exact("P");
  ASSERT_TRUE(hit);
  EXPECT_EQ(*hit, (std::vector<PartialCondition>{c1, c2}));
  EXPECT_FALSE(kb.lookup_exact("Q"));
}

TEST(KnowledgeBase, PartialEntryReturnedIntact) {
  const auto kb = InMemoryKnowledgeBase::from_json(
      nlohmann::json::parse(R"({"P": [{"base": "K2CO3", "solvent": "Dioxane: H2O = 9:1"}]})"));
  const auto hit = kb.lookup_exact("P");
  ASSERT_TRUE(hit);
  ASSERT_EQ(hit->size(), 1u);
  const auto& c = hit->front();
  EXPECT_EQ(c.get(Role::Base), "K2CO3");
  EXPECT_EQ(c.get(Role::Solvent), "Dioxane: H2O = 9:1");
  EXPECT_FALSE(c.get(Role::Ligand));
  EXPECT_FALSE(c.get(Role::Catalyst));
}

TEST(Retries, NeverExceedsRetryCountPlusOne) {
  for (int retries = 0; retries <= 4; ++retries) {
    int calls = 0;
    GatewayConfig cfg;
    cfg.retry_count = retries;
    EXPECT_ERRC(with_retries(cfg, [&]() -> int {
                  ++calls;
                  fail(Errc::GatewayUnavailable, "down");
                }),
                Errc::GatewayUnavailable);
    EXPECT_EQ(calls, retries + 1);
  }
}

TEST(Retries, NonTransientErrorsAreNotRetried) {
  int calls = 0;
  GatewayConfig cfg;
  cfg.retry_count = 3;
  EXPECT_ERRC(with_retries(cfg, [&]() -> int {
                ++calls;
                fail(Errc::SchemaError, "bad");
              }),
              Errc::SchemaError);
  EXPECT_EQ(calls, 1);
}

class HttpGatewayTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      if (embed_failures_-- > 0) {
        res.status = 503;
        return;
      }
      const auto text = nlohmann::json::parse(req.body).at("text").get<std::string>();
      res.set_content(nlohmann::json{{"vector", {1.0, static_cast<double>(text.size()), 0.0}}}.dump(),
                      "application/json");
    });
    server_.Post("/complete", [](const httplib::Request& req, httplib::Response& res) {
      const auto prompt = nlohmann::json::parse(req.body).at("prompt").get<std::string>();
      res.set_content(nlohmann::json{{"text", "echo " + prompt},
                                     {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 2}, {"latency_ms", 1.0}}}}
                          .dump(),
                      "application/json");
    });
    server_.Get("/similar", [](const httplib::Request& req, httplib::Response& res) {
      const auto smiles = req.get_param_value("smiles");
      res.set_content(nlohmann::json{{"molecules", {smiles + "F", smiles + "Cl", smiles + "Br"}}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  GatewayConfig config(int retries = 2) const {
    GatewayConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_);
    c.retry_count = retries;
    c.timeout_ms = 2000;
    return c;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> embed_failures_{0};
};

TEST_F(HttpGatewayTest, EmbedRetriesTransientFailures) {
  embed_failures_ = 2;
  HttpEmbedder e(config(2), 3);
  EXPECT_EQ(e.embed("abc").values, (std::vector<double>{1.0, 3.0, 0.0}));
}

TEST_F(HttpGatewayTest, EmbedGivesUpAfterRetries) {
  embed_failures_ = 5;
  HttpEmbedder e(config(1), 3);
  EXPECT_ERRC(e.embed("abc"), Errc::GatewayUnavailable);
  EXPECT_EQ(embed_failures_.load(), 3);  // two attempts were made
}

TEST_F(HttpGatewayTest, EmbedDimensionChecked) {
  HttpEmbedder e(config(), 4);
  EXPECT_ERRC(e.embed("abc"), Errc::DimMismatch);
}

TEST_F(HttpGatewayTest, CompleteWithPricing) {
  HttpLLMClient llm(config(), Pricing{0.5, 1.0});
  const auto r = llm.complete("hi");
  EXPECT_EQ(r.text, "echo hi");
  EXPECT_EQ(r.metrics.prompt_tokens, 7);
  EXPECT_DOUBLE_EQ(r.metrics.cost, 7 * 0.5 + 2 * 1.0);
}

TEST_F(HttpGatewayTest, SimilarTruncates) {
  HttpSimilarityProvider p(config());
  const auto out = p.similar_molecules("CC", 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1].smiles(), "CCCl");
}

TEST(HttpGateway, UnreachableIsGatewayUnavailable) {
  GatewayConfig c;
  c.endpoint = "http://127.0.0.1:1";
  c.retry_count = 0;
  c.timeout_ms = 200;
  HttpLLMClient llm(c);
  EXPECT_ERRC(llm.complete("x"), Errc::GatewayUnavailable);
}
