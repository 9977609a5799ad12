#pragma once

// Supervised contrastive learning over reaction encodings with coarse yield
// labels, and extraction of the trained embedding as a reaction fingerprint.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "condrec/chemspace.hpp"
#include "condrec/encoder.hpp"
#include "condrec/error.hpp"
#include "condrec/rng.hpp"

namespace condrec {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

namespace detail {

inline void check_batch(const std::vector<Vec>& z, const std::vector<CoarseLabel>& labels, double tau) {
  if (z.size() != labels.size())
    fail(Errc::DimMismatch, "batch has " + std::to_string(z.size()) + " embeddings and " +
                                std::to_string(labels.size()) + " labels");
  if (z.size() < 2) fail(Errc::InvalidArgument, "contrastive batch needs at least 2 samples");
  if (!(tau > 0.0)) fail(Errc::InvalidArgument, "temperature must be positive");
  for (const auto& v : z)
    if (v.size() != z.front().size()) fail(Errc::DimMismatch, "embeddings differ in dimension");
}

// Per-anchor pieces shared by the loss and its gradient: logits s_ik = z_i.z_k / tau,
// positives P_i and log-sum-exp over k != i.
struct AnchorTerms {
  std::vector<double> logits;
  std::vector<std::size_t> positives;
  double lse = 0.0;
};

inline AnchorTerms anchor_terms(const std::vector<Vec>& z, const std::vector<CoarseLabel>& labels,
                                double tau, std::size_t i) {
  AnchorTerms t;
  const std::size_t n = z.size();
  t.logits.assign(n, 0.0);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    if (k == i) continue;
    t.logits[k] = dot(z[i], z[k]) / tau;
    m = std::max(m, t.logits[k]);
    if (labels[k] == labels[i]) t.positives.push_back(k);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (k != i) sum += std::exp(t.logits[k] - m);
  t.lse = m + std::log(sum);
  return t;
}

}  // namespace detail

/// Supervised contrastive loss summed over anchors. Each anchor's term is
/// normalized by its positive count (same label, anchor excluded); anchors
/// without positives contribute zero.
inline double scl_loss(const std::vector<Vec>& z, const std::vector<CoarseLabel>& labels, double tau) {
  detail::check_batch(z, labels, tau);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto t = detail::anchor_terms(z, labels, tau, i);
    if (t.positives.empty()) continue;
    double term = 0.0;
    for (std::size_t j : t.positives) term += t.logits[j] - t.lse;
    loss += -term / static_cast<double>(t.positives.size());
  }
  return loss;
}

/// dL/dz_i for scl_loss. With p_ik the softmax of the anchor's logits,
/// dL/ds_ik = p_ik - [k in P_i] / |P_i|.
inline std::vector<Vec> scl_loss_grad(const std::vector<Vec>& z, const std::vector<CoarseLabel>& labels,
                                      double tau) {
  detail::check_batch(z, labels, tau);
  const std::size_t n = z.size();
  const std::size_t dim = z.front().size();
  std::vector<Vec> grad(n, Vec(dim, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = detail::anchor_terms(z, labels, tau, i);
    if (t.positives.empty()) continue;
    const double inv_pos = 1.0 / static_cast<double>(t.positives.size());
    std::vector<double> g(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) g[k] = std::exp(t.logits[k] - t.lse);
    for (std::size_t j : t.positives) g[j] -= inv_pos;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i || g[k] == 0.0) continue;
      const double c = g[k] / tau;
      for (std::size_t d = 0; d < dim; ++d) {
        grad[i][d] += c * z[k][d];
        grad[k][d] += c * z[i][d];
      }
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Network

struct SCLConfig {
  std::vector<std::size_t> hidden_sizes = {64, 64};
  std::size_t embed_dim = 16;
  double tau = 0.1;
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool normalize_z = true;
  YieldThresholds thresholds;

  void validate() const {
    if (!(tau > 0.0)) fail(Errc::InvalidArgument, "tau must be > 0");
    if (!(learning_rate > 0.0)) fail(Errc::InvalidArgument, "learning_rate must be > 0");
    if (batch_size < 2) fail(Errc::InvalidArgument, "batch_size must be >= 2");
    if (embed_dim == 0) fail(Errc::InvalidArgument, "embed_dim must be >= 1");
    for (auto h : hidden_sizes)
      if (h == 0) fail(Errc::InvalidArgument, "hidden layer width must be >= 1");
    thresholds.validate();
  }
};

/// Fully connected layer, weights row-major [out][in].
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  Vec weights;
  Vec bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct LayerGradient {
  Vec weights;
  Vec bias;
};

struct TrainingMetadata {
  double final_loss = 0.0;
  std::size_t epochs_run = 0;
  std::uint64_t seed = 0;
  bool degenerate = false;  // every record shared one coarse label
  std::vector<double> loss_history;  // mean per-sample batch loss, one entry per epoch
};

/// tanh MLP mapping a reaction encoding to an embedding z. Inputs are
/// standardized with stored per-feature shift/scale; the last layer is
/// linear and z is L2-normalized when normalize_z is set.
class SCLNetwork {
 public:
  SCLNetwork() = default;

  /// Glorot-uniform weights and zero biases drawn from Rng(seed).
  static SCLNetwork initialize(std::size_t input_dim, const SCLConfig& config) {
    config.validate();
    if (input_dim == 0) fail(Errc::InvalidArgument, "input dimension must be >= 1");
    SCLNetwork net;
    net.config_ = config;
    net.input_shift_.assign(input_dim, 0.0);
    net.input_scale_.assign(input_dim, 1.0);
    Rng rng(config.seed);
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), config.hidden_sizes.begin(), config.hidden_sizes.end());
    sizes.push_back(config.embed_dim);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      DenseLayer layer{sizes[l], sizes[l + 1], Vec(sizes[l] * sizes[l + 1]), Vec(sizes[l + 1], 0.0)};
      const double a = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
      for (double& w : layer.weights) w = rng.uniform(-a, a);
      net.layers_.push_back(std::move(layer));
    }
    net.meta_.seed = config.seed;
    return net;
  }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
  const SCLConfig& config() const { return config_; }
  const TrainingMetadata& metadata() const { return meta_; }
  TrainingMetadata& metadata() { return meta_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const Vec& input_shift() const { return input_shift_; }
  const Vec& input_scale() const { return input_scale_; }
  std::uint64_t encoder_hash() const { return encoder_hash_; }
  void set_encoder_hash(std::uint64_t h) { encoder_hash_ = h; }

  /// Sets the standardization from a set of raw inputs (scale 1 on constant features).
  void fit_standardization(const std::vector<Vec>& inputs) {
    const std::size_t d = input_dim();
    input_shift_.assign(d, 0.0);
    input_scale_.assign(d, 1.0);
    if (inputs.empty()) return;
    const double n = static_cast<double>(inputs.size());
    for (const auto& x : inputs)
      for (std::size_t k = 0; k < d; ++k) input_shift_[k] += x[k];
    for (double& m : input_shift_) m /= n;
    for (std::size_t k = 0; k < d; ++k) {
      double var = 0.0;
      for (const auto& x : inputs) var += (x[k] - input_shift_[k]) * (x[k] - input_shift_[k]);
      var /= n;
      input_scale_[k] = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }

  Vec forward(const Vec& raw) const { return run(raw).z; }

  struct BatchResult {
    double loss = 0.0;
    std::vector<LayerGradient> grads;
  };

  /// Loss of the batch and its gradient with respect to every weight and bias.
  BatchResult loss_and_gradients(const std::vector<Vec>& raw_inputs,
                                 const std::vector<CoarseLabel>& labels) const {
    std::vector<Trace> traces;
    traces.reserve(raw_inputs.size());
    std::vector<Vec> z;
    for (const auto& x : raw_inputs) {
      traces.push_back(run(x));
      z.push_back(traces.back().z);
    }
    BatchResult res;
    res.loss = scl_loss(z, labels, config_.tau);
    const auto dz = scl_loss_grad(z, labels, config_.tau);
    res.grads.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      res.grads[l].weights.assign(layers_[l].weights.size(), 0.0);
      res.grads[l].bias.assign(layers_[l].bias.size(), 0.0);
    }
    for (std::size_t s = 0; s < traces.size(); ++s) backward(traces[s], dz[s], res.grads);
    return res;
  }

  void apply_gradients(const std::vector<LayerGradient>& grads, double step) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      for (std::size_t k = 0; k < layers_[l].weights.size(); ++k)
        layers_[l].weights[k] -= step * grads[l].weights[k];
      for (std::size_t k = 0; k < layers_[l].bias.size(); ++k)
        layers_[l].bias[k] -= step * grads[l].bias[k];
    }
  }

  friend void to_json(nlohmann::json& j, const SCLNetwork& net);
  friend void from_json(const nlohmann::json& j, SCLNetwork& net);

 private:
  struct Trace {
    std::vector<Vec> activations;  // activations[0] = standardized input, then each layer output
    Vec pre_norm;                  // last layer output before normalization
    Vec z;
  };

  Trace run(const Vec& raw) const {
    if (raw.size() != input_dim())
      fail(Errc::DimMismatch, "network expects input of dimension " + std::to_string(input_dim()) +
                                  ", got " + std::to_string(raw.size()));
    Trace t;
    Vec x(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) x[k] = (raw[k] - input_shift_[k]) * input_scale_[k];
    t.activations.push_back(std::move(x));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      const Vec& in = t.activations.back();
      Vec out(layer.out);
      for (std::size_t o = 0; o < layer.out; ++o) {
        double s = layer.bias[o];
        const double* w = &layer.weights[o * layer.in];
        for (std::size_t i = 0; i < layer.in; ++i) s += w[i] * in[i];
        out[o] = l + 1 < layers_.size() ? std::tanh(s) : s;
      }
      t.activations.push_back(std::move(out));
    }
    t.pre_norm = t.activations.back();
    t.z = t.pre_norm;
    if (config_.normalize_z) {
      const double norm = std::sqrt(dot(t.z, t.z));
      if (norm > 0.0)
        for (double& v : t.z) v /= norm;
    }
    return t;
  }

  void backward(const Trace& t, const Vec& dz, std::vector<LayerGradient>& grads) const {
    Vec delta = dz;
    if (config_.normalize_z) {
      const double norm = std::sqrt(dot(t.pre_norm, t.pre_norm));
      if (norm > 0.0) {
        const double zg = dot(t.z, dz);
        for (std::size_t k = 0; k < delta.size(); ++k) delta[k] = (dz[k] - t.z[k] * zg) / norm;
      }
    }
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& layer = layers_[l];
      const Vec& in = t.activations[l];
      if (l + 1 < layers_.size()) {
        const Vec& out = t.activations[l + 1];
        for (std::size_t o = 0; o < layer.out; ++o) delta[o] *= 1.0 - out[o] * out[o];
      }
      for (std::size_t o = 0; o < layer.out; ++o) {
        grads[l].bias[o] += delta[o];
        double* gw = &grads[l].weights[o * layer.in];
        for (std::size_t i = 0; i < layer.in; ++i) gw[i] += delta[o] * in[i];
      }
      if (l == 0) break;
      Vec prev(layer.in, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double* w = &layer.weights[o * layer.in];
        for (std::size_t i = 0; i < layer.in; ++i) prev[i] += w[i] * delta[o];
      }
      delta = std::move(prev);
    }
  }

  SCLConfig config_;
  std::vector<DenseLayer> layers_;
  Vec input_shift_;
  Vec input_scale_;
  TrainingMetadata meta_;
  std::uint64_t encoder_hash_ = 0;
};

/// Mini-batch gradient descent on the contrastive loss. Each epoch reshuffles
/// with the network's Rng stream; a trailing single-sample batch is merged
/// into the previous one. Steps use the batch loss divided by batch size.
inline SCLNetwork train_scl(const std::vector<ReactionRecord>& records, const MoleculeEncoder& encoder,
                            const SCLConfig& config) {
  config.validate();
  if (records.size() < 2) fail(Errc::EmptyTrainingSet, "contrastive training needs >= 2 records");
  std::vector<Vec> inputs;
  std::vector<CoarseLabel> labels;
  for (const auto& r : records) {
    inputs.push_back(encode_reaction(r.condition, encoder).values);
    labels.push_back(assign_coarse_label(r.yield, config.thresholds));
  }
  SCLNetwork net = SCLNetwork::initialize(inputs.front().size(), config);
  net.set_encoder_hash(encoder.layout_hash());
  net.fit_standardization(inputs);

  const bool degenerate =
      std::all_of(labels.begin(), labels.end(), [&](CoarseLabel l) { return l == labels.front(); });
  auto& meta = net.metadata();
  meta.degenerate = degenerate;
  if (degenerate) {
    meta.epochs_run = config.epochs;
    meta.loss_history.assign(config.epochs, 0.0);
    return net;
  }

  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size)
      batches.emplace_back(start, std::min(order.size(), start + config.batch_size));
    if (batches.size() > 1 && batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }
    double epoch_loss = 0.0;
    for (const auto& [begin, end] : batches) {
      std::vector<Vec> bx;
      std::vector<CoarseLabel> by;
      for (std::size_t k = begin; k < end; ++k) {
        bx.push_back(inputs[order[k]]);
        by.push_back(labels[order[k]]);
      }
      const double n = static_cast<double>(bx.size());
      auto res = net.loss_and_gradients(bx, by);
      net.apply_gradients(res.grads, config.learning_rate / n);
      epoch_loss += res.loss / n;
    }
    epoch_loss /= static_cast<double>(batches.size());
    meta.loss_history.push_back(epoch_loss);
    meta.final_loss = epoch_loss;
    meta.epochs_run = epoch + 1;
  }
  return net;
}

inline SCLNetwork train_scl(const std::vector<ReactionRecord>& records, const MoleculeEncoder& encoder,
                            const YieldThresholds& thresholds, SCLConfig config) {
  config.thresholds = thresholds;
  return train_scl(records, encoder, config);
}

// ---------------------------------------------------------------------------
// Fingerprints

struct Fingerprint {
  Vec z;
  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

inline Fingerprint fingerprint(const ReactionCondition& condition, const SCLNetwork& network,
                               const MoleculeEncoder& encoder) {
  return Fingerprint{network.forward(encode_reaction(condition, encoder).values)};
}

inline Fingerprint fingerprint(const PartialCondition& condition, const SCLNetwork& network,
                               const MoleculeEncoder& encoder) {
  return fingerprint(condition.to_condition(), network, encoder);
}

/// CSV: condition key followed by z components.
inline void write_fingerprints_csv(std::ostream& out, const std::vector<ReactionCondition>& conditions,
                                   const SCLNetwork& network, const MoleculeEncoder& encoder) {
  out << "condition";
  for (std::size_t k = 0; k < network.output_dim(); ++k) out << ",z" << k;
  out << '\n';
  for (const auto& c : conditions) {
    out << detail::csv_escape(c.key());
    for (double v : fingerprint(c, network, encoder).z) out << ',' << format_real(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kModelFormatVersion = 1;

inline void to_json(nlohmann::json& j, const SCLConfig& c) {
  j = {{"hidden_sizes", c.hidden_sizes}, {"embed_dim", c.embed_dim},   {"tau", c.tau},
       {"learning_rate", c.learning_rate}, {"epochs", c.epochs},     {"batch_size", c.batch_size},
       {"seed", c.seed},                 {"normalize_z", c.normalize_z},
       {"t_low", c.thresholds.t_low},    {"t_high", c.thresholds.t_high}};
}

inline void from_json(const nlohmann::json& j, SCLConfig& c) {
  const SCLConfig d;
  c.hidden_sizes = j.value("hidden_sizes", d.hidden_sizes);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.tau = j.value("tau", d.tau);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.normalize_z = j.value("normalize_z", d.normalize_z);
  c.thresholds.t_low = j.value("t_low", d.thresholds.t_low);
  c.thresholds.t_high = j.value("t_high", d.thresholds.t_high);
}

inline void to_json(nlohmann::json& j, const SCLNetwork& net) {
  std::vector<std::size_t> sizes;
  if (!net.layers_.empty()) sizes.push_back(net.layers_.front().in);
  auto layers = nlohmann::json::array();
  for (const auto& l : net.layers_) {
    sizes.push_back(l.out);
    layers.push_back({{"weights", l.weights}, {"bias", l.bias}});
  }
  j = {{"format", "condrec-scl-model"},
       {"version", kModelFormatVersion},
       {"layer_sizes", sizes},
       {"layers", layers},
       {"input_shift", net.input_shift_},
       {"input_scale", net.input_scale_},
       {"config", net.config_},
       {"seed", net.meta_.seed},
       {"token_table_hash", net.encoder_hash_},
       {"final_loss", net.meta_.final_loss},
       {"epochs_run", net.meta_.epochs_run},
       {"degenerate", net.meta_.degenerate}};
}

inline void from_json(const nlohmann::json& j, SCLNetwork& net) {
  try {
    if (j.at("format").get<std::string>() != "condrec-scl-model")
      fail(Errc::SchemaError, "not a condrec model document");
    if (j.at("version").get<int>() != kModelFormatVersion)
      fail(Errc::SchemaError, "unsupported model version " + j.at("version").dump());
    net = SCLNetwork{};
    net.config_ = j.at("config").get<SCLConfig>();
    const auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    const auto& layers = j.at("layers");
    if (sizes.size() != layers.size() + 1) fail(Errc::SchemaError, "layer_sizes/layers mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      DenseLayer layer{sizes[l], sizes[l + 1], layers[l].at("weights").get<Vec>(),
                       layers[l].at("bias").get<Vec>()};
      if (layer.weights.size() != layer.in * layer.out || layer.bias.size() != layer.out)
        fail(Errc::SchemaError, "layer " + std::to_string(l) + " has wrong weight count");
      net.layers_.push_back(std::move(layer));
    }
    net.input_shift_ = j.at("input_shift").get<Vec>();
    net.input_scale_ = j.at("input_scale").get<Vec>();
    if (net.input_shift_.size() != sizes.front() || net.input_scale_.size() != sizes.front())
      fail(Errc::SchemaError, "standardization vectors have wrong length");
    net.meta_.seed = j.at("seed").get<std::uint64_t>();
    net.encoder_hash_ = j.at("token_table_hash").get<std::uint64_t>();
    net.meta_.final_loss = j.value("final_loss", 0.0);
    net.meta_.epochs_run = j.value("epochs_run", std::size_t{0});
    net.meta_.degenerate = j.value("degenerate", false);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::SchemaError, std::string("model document: ") + e.what());
  }
}

}  // namespace condrec
