#pragma once

// Yield regressors over fingerprints, greedy top-N batch recommendation,
// the max-observed-yield figure of merit and the random-sampling baseline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "condrec/chemspace.hpp"
#include "condrec/encoder.hpp"
#include "condrec/error.hpp"
#include "condrec/rng.hpp"
#include "condrec/scl.hpp"

namespace condrec {

using TrainingPair = std::pair<Fingerprint, double>;

class YieldRegressor {
 public:
  virtual ~YieldRegressor() = default;
  virtual void fit(const std::vector<TrainingPair>& data) = 0;
  /// Prediction clamped to [0, 1]; only valid after fit().
  virtual double predict(const Fingerprint& fp) const = 0;
  virtual std::string kind() const = 0;
};

struct RegressorOptions {
  std::size_t k = 5;
  std::size_t trees = 25;
  std::size_t max_depth = 6;
  std::size_t min_samples_split = 2;
  std::uint64_t seed = 0;
};

namespace detail {

inline void check_training(const std::vector<TrainingPair>& data) {
  if (data.empty()) fail(Errc::EmptyTrainingSet, "regressor needs at least one training pair");
  for (const auto& [fp, y] : data)
    if (fp.z.size() != data.front().first.z.size())
      fail(Errc::DimMismatch, "training fingerprints differ in dimension");
}

inline double squared_distance(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) fail(Errc::DimMismatch, "fingerprint dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

}  // namespace detail

/// Inverse-distance weighted mean of the k nearest training yields
/// (Euclidean; ties in distance resolved by training order). Neighbors at
/// distance zero, when present, are averaged on their own.
class KnnRegressor final : public YieldRegressor {
 public:
  explicit KnnRegressor(std::size_t k = 5) : k_(k) {
    if (k_ == 0) fail(Errc::InvalidArgument, "k must be >= 1");
  }

  void fit(const std::vector<TrainingPair>& data) override {
    detail::check_training(data);
    data_ = data;
  }

  double predict(const Fingerprint& fp) const override {
    if (data_.empty()) fail(Errc::InvalidArgument, "predict called before fit");
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i)
      dist.emplace_back(std::sqrt(detail::squared_distance(fp.z, data_[i].first.z)), i);
    const std::size_t k = std::min(k_, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    double exact_sum = 0.0;
    std::size_t exact = 0;
    double wsum = 0.0, ysum = 0.0;
    for (std::size_t n = 0; n < k; ++n) {
      const auto [d, i] = dist[n];
      if (d == 0.0) {
        exact_sum += data_[i].second;
        ++exact;
      } else {
        wsum += 1.0 / d;
        ysum += data_[i].second / d;
      }
    }
    const double y = exact ? exact_sum / static_cast<double>(exact) : ysum / wsum;
    return std::clamp(y, 0.0, 1.0);
  }

  std::string kind() const override { return "knn"; }

 private:
  std::size_t k_;
  std::vector<TrainingPair> data_;
};

/// Bootstrap-aggregated CART regression trees (variance-reduction splits on
/// every feature, midpoint thresholds).
class BaggedTreesRegressor final : public YieldRegressor {
 public:
  explicit BaggedTreesRegressor(RegressorOptions options = {}) : opt_(options) {
    if (opt_.trees == 0) fail(Errc::InvalidArgument, "tree count must be >= 1");
  }

  void fit(const std::vector<TrainingPair>& data) override {
    detail::check_training(data);
    trees_.clear();
    Rng rng(opt_.seed);
    for (std::size_t t = 0; t < opt_.trees; ++t) {
      std::vector<std::size_t> sample(data.size());
      for (auto& s : sample) s = rng.index(data.size());
      Tree tree;
      grow(tree, data, sample, 0);
      trees_.push_back(std::move(tree));
    }
  }

  double predict(const Fingerprint& fp) const override {
    if (trees_.empty()) fail(Errc::InvalidArgument, "predict called before fit");
    double sum = 0.0;
    for (const auto& tree : trees_) {
      std::size_t n = 0;
      while (!tree[n].leaf) {
        const auto& node = tree[n];
        if (node.feature >= fp.z.size()) fail(Errc::DimMismatch, "fingerprint dimension mismatch");
        n = fp.z[node.feature] <= node.threshold ? node.left : node.right;
      }
      sum += tree[n].value;
    }
    return std::clamp(sum / static_cast<double>(trees_.size()), 0.0, 1.0);
  }

  std::string kind() const override { return "bagged-trees"; }

 private:
  struct Node {
    bool leaf = true;
    std::size_t feature = 0;
    double threshold = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  std::size_t grow(Tree& tree, const std::vector<TrainingPair>& data,
                   std::vector<std::size_t> rows, std::size_t depth) {
    const std::size_t id = tree.size();
    tree.emplace_back();
    double mean = 0.0;
    for (auto r : rows) mean += data[r].second;
    mean /= static_cast<double>(rows.size());
    tree[id].value = mean;

    if (depth >= opt_.max_depth || rows.size() < opt_.min_samples_split) return id;
    const std::size_t dims = data.front().first.z.size();
    double best_gain = 0.0;
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    bool found = false;
    double total_sum = 0.0, total_sq = 0.0;
    for (auto r : rows) {
      total_sum += data[r].second;
      total_sq += data[r].second * data[r].second;
    }
    const double n = static_cast<double>(rows.size());
    const double parent_sse = total_sq - total_sum * total_sum / n;
    if (parent_sse <= 1e-15) return id;

    std::vector<std::size_t> sorted = rows;
    for (std::size_t f = 0; f < dims; ++f) {
      std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
        return data[a].first.z[f] < data[b].first.z[f];
      });
      double left_sum = 0.0, left_sq = 0.0;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const double y = data[sorted[i]].second;
        left_sum += y;
        left_sq += y * y;
        const double a = data[sorted[i]].first.z[f];
        const double b = data[sorted[i + 1]].first.z[f];
        if (!(a < b)) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = n - nl;
        const double right_sum = total_sum - left_sum;
        const double right_sq = total_sq - left_sq;
        const double sse = (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
        const double gain = parent_sse - sse;
        if (gain > best_gain + 1e-15) {
          best_gain = gain;
          best_feature = f;
          best_threshold = a + (b - a) / 2.0;
          found = true;
        }
      }
    }
    if (!found) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows) (data[r].first.z[best_feature] <= best_threshold ? left : right).push_back(r);
    const std::size_t l = grow(tree, data, std::move(left), depth + 1);
    const std::size_t r = grow(tree, data, std::move(right), depth + 1);
    tree[id].leaf = false;
    tree[id].feature = best_feature;
    tree[id].threshold = best_threshold;
    tree[id].left = l;
    tree[id].right = r;
    return id;
  }

  RegressorOptions opt_;
  std::vector<Tree> trees_;
};

/// Name -> factory. External model kinds plug in through add().
class RegressorRegistry {
 public:
  using Factory = std::function<std::unique_ptr<YieldRegressor>(const RegressorOptions&)>;

  static RegressorRegistry with_builtins() {
    RegressorRegistry reg;
    reg.add("knn", [](const RegressorOptions& o) { return std::make_unique<KnnRegressor>(o.k); });
    reg.add("bagged-trees",
            [](const RegressorOptions& o) { return std::make_unique<BaggedTreesRegressor>(o); });
    return reg;
  }

  void add(const std::string& kind, Factory factory) { factories_[kind] = std::move(factory); }

  bool contains(const std::string& kind) const { return factories_.count(kind) != 0; }

  std::vector<std::string> kinds() const {
    std::vector<std::string> out;
    for (const auto& [k, f] : factories_) out.push_back(k);
    return out;
  }

  std::unique_ptr<YieldRegressor> create(const std::string& kind, const RegressorOptions& opt) const {
    auto it = factories_.find(kind);
    if (it == factories_.end()) fail(Errc::UnknownModel, "no regressor registered as '" + kind + "'");
    return it->second(opt);
  }

 private:
  std::map<std::string, Factory> factories_;
};

inline std::unique_ptr<YieldRegressor> fit_regressor(const std::string& kind,
                                                     const std::vector<TrainingPair>& data,
                                                     const RegressorOptions& options = {},
                                                     const RegressorRegistry& registry =
                                                         RegressorRegistry::with_builtins()) {
  auto model = registry.create(kind, options);
  model->fit(data);
  return model;
}

// ---------------------------------------------------------------------------
// Batches

struct RecommendedItem {
  ReactionCondition condition;
  std::optional<double> predicted_yield;  // unset for random baseline picks
};

struct RecommendationBatch {
  std::vector<RecommendedItem> items;

  std::size_t size() const noexcept { return items.size(); }

  RecommendationBatch prefix(std::size_t n) const {
    RecommendationBatch b;
    b.items.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(std::min(n, items.size())));
    return b;
  }
};

using Fingerprinter = std::function<Fingerprint(const ReactionCondition&)>;

/// The n candidates with the highest predicted yield, descending; equal
/// predictions keep candidate order.
inline RecommendationBatch recommend_batch(const std::vector<ReactionCondition>& candidates,
                                           const YieldRegressor& regressor,
                                           const Fingerprinter& fingerprinter, std::size_t n) {
  if (n == 0) fail(Errc::InvalidArgument, "batch size must be >= 1");
  if (n > candidates.size())
    fail(Errc::InsufficientCandidates, "batch of " + std::to_string(n) + " requested from " +
                                           std::to_string(candidates.size()) + " candidates");
  std::vector<double> predicted;
  predicted.reserve(candidates.size());
  for (const auto& c : candidates) predicted.push_back(regressor.predict(fingerprinter(c)));
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predicted[a] > predicted[b]; });
  RecommendationBatch batch;
  for (std::size_t i = 0; i < n; ++i) batch.items.push_back({candidates[order[i]], predicted[order[i]]});
  return batch;
}

using GroundTruth = std::map<ReactionCondition, double>;

inline GroundTruth ground_truth_from(const std::vector<ReactionRecord>& records) {
  GroundTruth gt;
  for (const auto& r : records) gt[r.condition] = r.yield;
  return gt;
}

struct EvaluationResult {
  double mu_n = 0.0;
  std::uint64_t seed = 0;
  RecommendationBatch batch;
  std::vector<double> observed;  // per batch item
};

/// Maximum observed yield over the batch.
inline EvaluationResult mu_n(const RecommendationBatch& batch, const GroundTruth& ground_truth) {
  if (batch.items.empty()) fail(Errc::InvalidArgument, "cannot score an empty batch");
  EvaluationResult r;
  r.batch = batch;
  r.mu_n = -1.0;
  for (const auto& item : batch.items) {
    auto it = ground_truth.find(item.condition);
    if (it == ground_truth.end())
      fail(Errc::MissingObservation, "no observed yield for " + item.condition.key());
    r.observed.push_back(it->second);
    r.mu_n = std::max(r.mu_n, it->second);
  }
  return r;
}

/// n distinct conditions drawn uniformly without replacement.
inline RecommendationBatch random_baseline(const ReactionSpace& space, std::size_t n, std::uint64_t seed) {
  if (n == 0) fail(Errc::InvalidArgument, "batch size must be >= 1");
  auto all = enumerate_space(space);
  if (n > all.size())
    fail(Errc::InsufficientCandidates, "random batch of " + std::to_string(n) + " from a space of " +
                                           std::to_string(all.size()));
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) std::swap(all[i], all[i + rng.index(all.size() - i)]);
  RecommendationBatch batch;
  for (std::size_t i = 0; i < n; ++i) batch.items.push_back({all[i], std::nullopt});
  return batch;
}

// ---------------------------------------------------------------------------
// Multi-seed evaluation

struct EvaluationConfig {
  SCLConfig scl;
  std::string model = "knn";
  RegressorOptions regressor;
  bool exclude_training = true;
};

struct PipelineEvaluation {
  std::vector<EvaluationResult> per_seed;
  double mean_mu_n = 0.0;
};

/// Trains fingerprint + regressor on `records` once per seed (the seed drives
/// both), recommends n conditions from the space restricted to conditions with
/// known ground truth, and scores them.
inline EvaluationResult evaluate_seed(const std::vector<ReactionRecord>& records, const GroundTruth& truth,
                                      const ReactionSpace& space, const EvaluationConfig& config,
                                      std::size_t n, std::uint64_t seed, const MoleculeEncoder& encoder,
                                      const RegressorRegistry& registry) {
  SCLConfig scl = config.scl;
  scl.seed = seed;
  const auto net = train_scl(records, encoder, scl);
  std::vector<TrainingPair> pairs;
  std::set<ReactionCondition> trained;
  for (const auto& r : records) {
    pairs.emplace_back(fingerprint(r.condition, net, encoder), r.yield);
    trained.insert(r.condition);
  }
  RegressorOptions ropt = config.regressor;
  ropt.seed = seed;
  const auto model = fit_regressor(config.model, pairs, ropt, registry);
  std::vector<ReactionCondition> candidates;
  for (auto& c : enumerate_space(space)) {
    if (!truth.count(c)) continue;
    if (config.exclude_training && trained.count(c)) continue;
    candidates.push_back(std::move(c));
  }
  const auto batch = recommend_batch(
      candidates, *model, [&](const ReactionCondition& c) { return fingerprint(c, net, encoder); }, n);
  auto result = mu_n(batch, truth);
  result.seed = seed;
  return result;
}

inline PipelineEvaluation evaluate_pipeline(const std::vector<ReactionRecord>& records,
                                            const GroundTruth& truth, const ReactionSpace& space,
                                            const EvaluationConfig& config, std::size_t n,
                                            const std::vector<std::uint64_t>& seeds,
                                            const MoleculeEncoder& encoder = TokenCountEncoder{},
                                            const RegressorRegistry& registry =
                                                RegressorRegistry::with_builtins()) {
  if (seeds.empty()) fail(Errc::InvalidArgument, "at least one seed is required");
  PipelineEvaluation out;
  for (auto seed : seeds) {
    out.per_seed.push_back(evaluate_seed(records, truth, space, config, n, seed, encoder, registry));
    out.mean_mu_n += out.per_seed.back().mu_n;
  }
  out.mean_mu_n /= static_cast<double>(seeds.size());
  return out;
}

inline void to_json(nlohmann::json& j, const RecommendationBatch& b) {
  j = nlohmann::json::array();
  for (const auto& item : b.items) {
    nlohmann::json e = {{"condition", item.condition}};
    e["predicted_yield"] = item.predicted_yield ? nlohmann::json(*item.predicted_yield) : nlohmann::json();
    j.push_back(std::move(e));
  }
}

}  // namespace condrec
