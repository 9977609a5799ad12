#pragma once

// Live-mode gateway clients speaking JSON over HTTP:
//   POST /embed    {"text": ...}   -> {"vector": [...]}
//   POST /complete {"prompt": ...} -> {"text": ..., "usage": {...}}
//   GET  /similar?smiles=...&limit=N -> {"molecules": [...]}

#include <chrono>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "condrec/gateways.hpp"

namespace condrec {

namespace detail {

inline std::unique_ptr<httplib::Client> make_http_client(const GatewayConfig& config) {
  if (config.is_mock()) fail(Errc::InvalidArgument, "endpoint '" + config.endpoint + "' is a mock");
  auto client = std::make_unique<httplib::Client>(config.endpoint);
  const auto timeout = std::chrono::milliseconds(config.timeout_ms);
  client->set_connection_timeout(timeout);
  client->set_read_timeout(timeout);
  client->set_write_timeout(timeout);
  return client;
}

inline nlohmann::json parse_body(const httplib::Result& res, std::string_view what) {
  if (!res) fail(Errc::GatewayUnavailable, std::string(what) + ": " + httplib::to_string(res.error()));
  if (res->status >= 500)
    fail(Errc::GatewayUnavailable, std::string(what) + ": HTTP " + std::to_string(res->status));
  if (res->status != 200)
    fail(Errc::InvalidArgument, std::string(what) + ": HTTP " + std::to_string(res->status));
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::SchemaError, std::string(what) + ": " + e.what());
  }
}

}  // namespace detail

class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(GatewayConfig config, std::size_t dimension)
      : config_(std::move(config)), dim_(dimension), client_(detail::make_http_client(config_)) {}

  EmbeddingVector embed(std::string_view text) override {
    if (bag_of_words_tokens(text).empty()) fail(Errc::EmptyInput, "text has no tokens");
    const std::string body = nlohmann::json{{"text", text}}.dump();
    return with_retries(config_, [&] {
      auto j = detail::parse_body(client_->Post("/embed", body, "application/json"), "embed");
      EmbeddingVector v{j.at("vector").get<std::vector<double>>()};
      if (v.dim() != dim_)
        fail(Errc::DimMismatch, "embedder returned dimension " + std::to_string(v.dim()) +
                                    ", expected " + std::to_string(dim_));
      for (double x : v.values)
        if (!std::isfinite(x)) fail(Errc::SchemaError, "embedding has non-finite component");
      return v;
    });
  }

  std::size_t dimension() const override { return dim_; }

 private:
  GatewayConfig config_;
  std::size_t dim_;
  std::unique_ptr<httplib::Client> client_;
};

class HttpLLMClient final : public LLMClient {
 public:
  explicit HttpLLMClient(GatewayConfig config, std::optional<Pricing> pricing = {})
      : config_(std::move(config)), pricing_(pricing), client_(detail::make_http_client(config_)) {}

  LLMResponse complete(std::string_view prompt) override {
    if (prompt.empty()) fail(Errc::EmptyInput, "prompt must be non-empty");
    const std::string body = nlohmann::json{{"prompt", prompt}}.dump();
    return with_retries(config_, [&] {
      auto j = detail::parse_body(client_->Post("/complete", body, "application/json"), "complete");
      LLMResponse r{j.at("text").get<std::string>(), {}};
      if (auto u = j.find("usage"); u != j.end()) r.metrics = u->get<UsageMetrics>();
      if (pricing_) r.metrics.cost = pricing_->cost(r.metrics);
      return r;
    });
  }

 private:
  GatewayConfig config_;
  std::optional<Pricing> pricing_;
  std::unique_ptr<httplib::Client> client_;
};

class HttpSimilarityProvider final : public SimilarMoleculeProvider {
 public:
  explicit HttpSimilarityProvider(GatewayConfig config)
      : config_(std::move(config)), client_(detail::make_http_client(config_)) {}

  std::vector<Molecule> similar_molecules(const std::string& smiles, std::size_t limit) override {
    if (limit == 0) fail(Errc::InvalidLimit, "limit must be >= 1");
    httplib::Params params{{"smiles", smiles}, {"limit", std::to_string(limit)}};
    return with_retries(config_, [&] {
      auto j = detail::parse_body(client_->Get("/similar", params, httplib::Headers{}), "similar");
      std::vector<Molecule> out;
      for (const auto& s : j.at("molecules")) {
        if (out.size() >= limit) break;
        out.emplace_back(s.get<std::string>());
      }
      return out;
    });
  }

 private:
  GatewayConfig config_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace condrec
