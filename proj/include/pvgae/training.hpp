#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pvgae/adam.hpp"
#include "pvgae/graph.hpp"
#include "pvgae/objectives.hpp"

namespace pvgae {

struct TrainConfig {
  double beta = 1.0;
  std::size_t epochs = 500;
  std::size_t inner_epochs = 1;  // sensitive-branch steps per outer epoch
  double lr_sensitive = 0.005;
  double lr_graph = 0.005;
  std::size_t latent_dim = 32;
  std::size_t hidden_dim = 64;
  std::uint64_t seed = 1;
  double observed_ratio = 1.0;

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (inner_epochs < 1) throw ConfigError("train: inner_epochs must be >= 1");
    if (lr_sensitive <= 0.0 || lr_graph <= 0.0) {
      throw ConfigError("train: learning rates must be positive");
    }
    if (beta < 0.0) throw ConfigError("train: beta must be >= 0");
    if (latent_dim < 1) throw ConfigError("train: latent_dim must be >= 1");
    if (hidden_dim < 1) throw ConfigError("train: hidden_dim must be >= 1");
    if (!(observed_ratio > 0.0 && observed_ratio <= 1.0)) {
      throw ConfigError("train: observed_ratio must be in (0, 1]");
    }
  }
};

struct TrainHistory {
  std::vector<LossBreakdown> epochs;
  std::vector<double> seconds;  // wall clock per epoch; never serialized
};

// Posterior means of the non-sensitive encoder, with provenance.
struct EmbeddingMatrix {
  Tensor z;  // [N, d]
  std::size_t num_nodes = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::string config_hash = "0";
};

struct TrainResult {
  PvgaeModel model;
  TrainHistory history;
  bool aborted = false;
  std::size_t abort_epoch = 0;
  std::string abort_reason;
};

struct VgaeTrainResult {
  VgaeModel model;
  TrainHistory history;
  bool aborted = false;
  std::size_t abort_epoch = 0;
  std::string abort_reason;
};

using EpochCallback = std::function<void(std::size_t, const LossBreakdown&)>;

namespace detail {

inline bool breakdown_finite(const LossBreakdown& b) {
  return std::isfinite(b.total_graph) && std::isfinite(b.total_sensitive) &&
         std::isfinite(b.penalty);
}

}  // namespace detail

// Alternating optimization: per outer epoch, inner_epochs Adam steps on the
// sensitive branch (theta_s, phi_s) followed by one Adam step on the graph
// branch (theta_g, theta_x). Deterministic given (graph, config, seed): all
// randomness comes from child streams of `rng` derived by tag.
inline TrainResult train_pvgae(const Graph& g, const NodeAnnotations& ann,
                               const TrainConfig& cfg, RandomSource& rng,
                               const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (ann.observed_count() == 0) {
    throw ContractError("train_pvgae: observed sensitive mask is empty");
  }
  if (ann.size() != g.num_nodes) {
    throw ConsistencyError("train_pvgae: annotations cover " +
                           std::to_string(ann.size()) + " nodes, graph has " +
                           std::to_string(g.num_nodes));
  }

  auto init_rng = rng.child(stream::kInit);
  auto latent_x_rng = rng.child(stream::kLatentX);
  auto latent_s_rng = rng.child(stream::kLatentS);

  const Tensor ahat = normalize_adjacency(g);
  const auto num_classes =
      static_cast<std::size_t>(ann.num_sensitive_classes());

  TrainResult out;
  out.model = PvgaeModel::init(g.feature_dim(), cfg.hidden_dim, cfg.latent_dim,
                               num_classes, init_rng);

  auto graph_params = out.model.graph_parameters();
  auto sensitive_params = out.model.sensitive_parameters();
  AdamState graph_state = AdamState::for_params(graph_params);
  AdamState sensitive_state = AdamState::for_params(sensitive_params);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    LossBreakdown breakdown;

    for (std::size_t j = 0; j < cfg.inner_epochs; ++j) {
      GradientTape tape;
      auto loss = loss_sensitive(tape, out.model, ahat, g.features,
                                 ann.sensitive, ann.observed_mask,
                                 latent_s_rng);
      auto grads = tape.backward(loss.objective, sensitive_params);
      adam_step(sensitive_params, grads, sensitive_state, cfg.lr_sensitive);
      breakdown.kl_s = loss.breakdown.kl_s;
      breakdown.recon_s = loss.breakdown.recon_s;
      breakdown.total_sensitive = loss.breakdown.total_sensitive;
    }

    {
      GradientTape tape;
      auto loss = loss_graph(tape, out.model, ahat, g.features, g.adjacency,
                             cfg.beta, latent_x_rng, latent_s_rng);
      auto grads = tape.backward(loss.objective, graph_params);
      adam_step(graph_params, grads, graph_state, cfg.lr_graph);
      breakdown.kl_x = loss.breakdown.kl_x;
      breakdown.recon_x = loss.breakdown.recon_x;
      breakdown.penalty = loss.breakdown.penalty;
      breakdown.total_graph = loss.breakdown.total_graph;
    }

    const auto t1 = std::chrono::steady_clock::now();
    if (!detail::breakdown_finite(breakdown)) {
      out.aborted = true;
      out.abort_epoch = epoch;
      out.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
      break;
    }
    out.history.epochs.push_back(breakdown);
    out.history.seconds.push_back(
        std::chrono::duration<double>(t1 - t0).count());
    if (on_epoch) on_epoch(epoch, breakdown);
  }
  return out;
}

// Plain VGAE baseline trained on the negated evidence lower bound. Seeded
// the same way as train_pvgae, so its initial trunk and head match PVGAE's.
inline VgaeTrainResult train_vgae_baseline(const Graph& g,
                                           const TrainConfig& cfg,
                                           RandomSource& rng,
                                           const EpochCallback& on_epoch = {}) {
  cfg.validate();
  auto init_rng = rng.child(stream::kInit);
  auto latent_rng = rng.child(stream::kLatentX);

  const Tensor ahat = normalize_adjacency(g);

  VgaeTrainResult out;
  out.model =
      VgaeModel::init(g.feature_dim(), cfg.hidden_dim, cfg.latent_dim, init_rng);
  auto params = out.model.parameters();
  AdamState state = AdamState::for_params(params);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    GradientTape tape;
    auto loss = vgae_loss(tape, out.model, ahat, g.features, g.adjacency,
                          latent_rng);
    auto grads = tape.backward(loss.objective, params);
    adam_step(params, grads, state, cfg.lr_graph);
    const auto t1 = std::chrono::steady_clock::now();

    if (!detail::breakdown_finite(loss.breakdown)) {
      out.aborted = true;
      out.abort_epoch = epoch;
      out.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
      break;
    }
    out.history.epochs.push_back(loss.breakdown);
    out.history.seconds.push_back(
        std::chrono::duration<double>(t1 - t0).count());
    if (on_epoch) on_epoch(epoch, loss.breakdown);
  }
  return out;
}

namespace detail {

inline Tensor encoder_mean(const Tensor& ahat, const Tensor& features,
                           const Tensor& w1, const Tensor& w2,
                           const EncoderHead& head) {
  GradientTape tape;
  const Tensor h = gnn_forward(tape, ahat, features, w1, w2);
  return tape.add(tape.matmul(h, head.w_mu), head.b_mu).detached();
}

}  // namespace detail

// Deterministic export: posterior means of the non-sensitive encoder
// (no sampling).
inline EmbeddingMatrix export_embeddings(const PvgaeModel& model,
                                         const Graph& g, std::uint64_t seed = 0,
                                         std::string config_hash = "0") {
  const Tensor ahat = normalize_adjacency(g);
  EmbeddingMatrix emb;
  emb.z = detail::encoder_mean(ahat, g.features, model.gnn_w1, model.gnn_w2,
                               model.head_x);
  emb.num_nodes = g.num_nodes;
  emb.dim = model.latent_dim;
  emb.seed = seed;
  emb.config_hash = std::move(config_hash);
  check_finite(emb.z, "export_embeddings");
  return emb;
}

inline EmbeddingMatrix export_embeddings(const VgaeModel& model,
                                         const Graph& g, std::uint64_t seed = 0,
                                         std::string config_hash = "0") {
  const Tensor ahat = normalize_adjacency(g);
  EmbeddingMatrix emb;
  emb.z = detail::encoder_mean(ahat, g.features, model.gnn_w1, model.gnn_w2,
                               model.head);
  emb.num_nodes = g.num_nodes;
  emb.dim = model.latent_dim;
  emb.seed = seed;
  emb.config_hash = std::move(config_hash);
  check_finite(emb.z, "export_embeddings");
  return emb;
}

// ---- file formats ----

namespace detail {

inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Embedding file: header "N d seed config_hash", then N rows of d values.
inline void write_embedding_file(const std::string& path,
                                 const EmbeddingMatrix& emb) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embedding file: " + path);
  out << emb.num_nodes << ' ' << emb.dim << ' ' << emb.seed << ' '
      << emb.config_hash << '\n';
  for (std::size_t i = 0; i < emb.num_nodes; ++i) {
    for (std::size_t j = 0; j < emb.dim; ++j) {
      if (j) out << ' ';
      out << detail::fmt17(emb.z.at(i, j));
    }
    out << '\n';
  }
}

inline EmbeddingMatrix read_embedding_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file: " + path);
  EmbeddingMatrix emb;
  std::string header;
  if (!std::getline(in, header)) {
    throw ParseError(path + ": missing header line");
  }
  {
    std::istringstream is(header);
    if (!(is >> emb.num_nodes >> emb.dim >> emb.seed >> emb.config_hash)) {
      throw ParseError(path + ": malformed header, expected 'N d seed hash'");
    }
  }
  emb.z = Tensor::zeros({emb.num_nodes, emb.dim});
  for (std::size_t i = 0; i < emb.num_nodes; ++i) {
    std::string line;
    if (!std::getline(in, line)) {
      throw ParseError(path + ": expected " + std::to_string(emb.num_nodes) +
                       " embedding rows, got " + std::to_string(i));
    }
    std::istringstream is(line);
    for (std::size_t j = 0; j < emb.dim; ++j) {
      if (!(is >> emb.z.at(i, j))) {
        throw ParseError(path + ": row " + std::to_string(i) + " has fewer than " +
                         std::to_string(emb.dim) + " values");
      }
    }
    double extra;
    if (is >> extra) {
      throw ParseError(path + ": row " + std::to_string(i) +
                       " has more values than the header dimension " +
                       std::to_string(emb.dim));
    }
  }
  return emb;
}

// History file: one CSV row per epoch.
inline void write_history_csv(const std::string& path,
                              const TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history file: " + path);
  out << "epoch,kl_x,recon_x,kl_s,recon_s,penalty,total_graph,total_sensitive\n";
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    const auto& b = history.epochs[e];
    out << e << ',' << detail::fmt17(b.kl_x) << ',' << detail::fmt17(b.recon_x)
        << ',' << detail::fmt17(b.kl_s) << ',' << detail::fmt17(b.recon_s)
        << ',' << detail::fmt17(b.penalty) << ','
        << detail::fmt17(b.total_graph) << ','
        << detail::fmt17(b.total_sensitive) << '\n';
  }
}

// Checkpoint: versioned textual dump of the named parameter tensors plus the
// training configuration that produced them.
namespace detail {

inline void write_checkpoint_body(
    std::ofstream& out, const std::string& model_type, const TrainConfig& cfg,
    std::size_t feature_dim, std::size_t hidden_dim, std::size_t latent_dim,
    std::size_t num_classes,
    const std::vector<std::pair<std::string, Tensor>>& named) {
  out << "pvgae-checkpoint v1\n";
  out << "model " << model_type << '\n';
  out << "config beta=" << detail::fmt17(cfg.beta) << " epochs=" << cfg.epochs
      << " inner_epochs=" << cfg.inner_epochs
      << " lr_sensitive=" << detail::fmt17(cfg.lr_sensitive)
      << " lr_graph=" << detail::fmt17(cfg.lr_graph)
      << " latent_dim=" << cfg.latent_dim << " hidden_dim=" << cfg.hidden_dim
      << " seed=" << cfg.seed
      << " observed_ratio=" << detail::fmt17(cfg.observed_ratio) << '\n';
  out << "dims feature_dim=" << feature_dim << " hidden_dim=" << hidden_dim
      << " latent_dim=" << latent_dim
      << " num_sensitive_classes=" << num_classes << '\n';
  for (const auto& [name, t] : named) {
    out << "tensor " << name;
    for (std::size_t d : t.shape()) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < t.size(); ++i) {
      out << detail::fmt17(t[i]) << (i + 1 == t.size() ? '\n' : ' ');
    }
  }
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const PvgaeModel& model,
                             const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  detail::write_checkpoint_body(out, "pvgae", cfg, model.feature_dim,
                                model.hidden_dim, model.latent_dim,
                                model.num_sensitive_classes,
                                model.named_parameters());
}

inline void write_checkpoint(const std::string& path, const VgaeModel& model,
                             const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  detail::write_checkpoint_body(out, "vgae", cfg, model.feature_dim,
                                model.hidden_dim, model.latent_dim, 0,
                                model.named_parameters());
}

struct Checkpoint {
  std::string model_type;  // "pvgae" or "vgae"
  PvgaeModel model;        // populated when model_type == "pvgae"
  VgaeModel vgae;          // populated when model_type == "vgae"
  TrainConfig config;
};

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "pvgae-checkpoint v1") {
    throw ParseError(path + ": unknown checkpoint format tag");
  }
  Checkpoint ckpt;
  if (!std::getline(in, line) || line.rfind("model ", 0) != 0) {
    throw ParseError(path + ": expected 'model' line");
  }
  ckpt.model_type = line.substr(6);
  if (ckpt.model_type != "pvgae" && ckpt.model_type != "vgae") {
    throw ParseError(path + ": unknown model type '" + ckpt.model_type + "'");
  }
  auto parse_kv = [&](const std::string& text, const std::string& prefix)
      -> std::vector<std::pair<std::string, std::string>> {
    if (text.rfind(prefix + " ", 0) != 0) {
      throw ParseError(path + ": expected '" + prefix + "' line");
    }
    std::vector<std::pair<std::string, std::string>> kvs;
    std::istringstream is(text.substr(prefix.size()));
    std::string tok;
    while (is >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) {
        throw ParseError(path + ": malformed key=value token '" + tok + "'");
      }
      kvs.push_back({tok.substr(0, eq), tok.substr(eq + 1)});
    }
    return kvs;
  };

  if (!std::getline(in, line)) throw ParseError(path + ": truncated");
  for (auto& [k, v] : parse_kv(line, "config")) {
    if (k == "beta") ckpt.config.beta = std::stod(v);
    else if (k == "epochs") ckpt.config.epochs = std::stoul(v);
    else if (k == "inner_epochs") ckpt.config.inner_epochs = std::stoul(v);
    else if (k == "lr_sensitive") ckpt.config.lr_sensitive = std::stod(v);
    else if (k == "lr_graph") ckpt.config.lr_graph = std::stod(v);
    else if (k == "latent_dim") ckpt.config.latent_dim = std::stoul(v);
    else if (k == "hidden_dim") ckpt.config.hidden_dim = std::stoul(v);
    else if (k == "seed") ckpt.config.seed = std::stoull(v);
    else if (k == "observed_ratio") ckpt.config.observed_ratio = std::stod(v);
    else throw ParseError(path + ": unknown config key '" + k + "'");
  }
  if (!std::getline(in, line)) throw ParseError(path + ": truncated");
  std::size_t feature_dim = 0, hidden_dim = 0, latent_dim = 0, classes = 0;
  for (auto& [k, v] : parse_kv(line, "dims")) {
    if (k == "feature_dim") feature_dim = std::stoul(v);
    else if (k == "hidden_dim") hidden_dim = std::stoul(v);
    else if (k == "latent_dim") latent_dim = std::stoul(v);
    else if (k == "num_sensitive_classes") classes = std::stoul(v);
    else throw ParseError(path + ": unknown dims key '" + k + "'");
  }
  RandomSource dummy(0);
  std::vector<std::pair<std::string, Tensor>> named;
  if (ckpt.model_type == "pvgae") {
    ckpt.model = PvgaeModel::init(feature_dim, hidden_dim, latent_dim,
                                  std::max<std::size_t>(classes, 1), dummy);
    named = ckpt.model.named_parameters();
  } else {
    ckpt.vgae = VgaeModel::init(feature_dim, hidden_dim, latent_dim, dummy);
    named = ckpt.vgae.named_parameters();
  }
  for (auto& [name, tensor] : named) {
    if (!std::getline(in, line)) {
      throw ParseError(path + ": missing tensor '" + name + "'");
    }
    std::istringstream is(line);
    std::string tag, got;
    is >> tag >> got;
    if (tag != "tensor" || got != name) {
      throw ParseError(path + ": expected tensor '" + name + "', got '" + got +
                       "'");
    }
    Shape shape;
    std::size_t d;
    while (is >> d) shape.push_back(d);
    if (shape != tensor.shape()) {
      throw ParseError(path + ": tensor '" + name + "' has shape " +
                       shape_str(shape) + ", expected " +
                       shape_str(tensor.shape()));
    }
    if (!std::getline(in, line)) {
      throw ParseError(path + ": missing values for tensor '" + name + "'");
    }
    std::istringstream vs(line);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      if (!(vs >> tensor[i])) {
        throw ParseError(path + ": tensor '" + name + "' has fewer than " +
                         std::to_string(tensor.size()) + " values");
      }
    }
  }
  return ckpt;
}

}  // namespace pvgae
