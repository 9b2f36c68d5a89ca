#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pvgae/random.hpp"
#include "pvgae/tensor.hpp"

namespace pvgae {

using Edge = std::pair<int, int>;  // canonical: first < second

// Undirected graph: node features plus a dense symmetric 0/1 adjacency with
// zero diagonal. Immutable after construction.
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;  // canonical, sorted, unique
  Tensor adjacency;         // [N,N]
  Tensor features;          // [N,D]

  std::size_t num_edges() const { return edges.size(); }
  std::size_t feature_dim() const { return features.cols(); }

  static Graph from_edges(std::size_t num_nodes, std::vector<Edge> raw_edges,
                          Tensor features) {
    if (features.ndim() != 2 || features.rows() != num_nodes) {
      throw ConsistencyError("Graph: feature matrix has " +
                             std::to_string(features.rows()) +
                             " rows for " + std::to_string(num_nodes) +
                             " nodes");
    }
    Graph g;
    g.num_nodes = num_nodes;
    g.features = std::move(features);
    std::set<Edge> unique_edges;
    for (auto [u, v] : raw_edges) {
      if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= num_nodes ||
          static_cast<std::size_t>(v) >= num_nodes) {
        throw ConsistencyError("Graph: edge (" + std::to_string(u) + "," +
                               std::to_string(v) + ") references a node >= " +
                               std::to_string(num_nodes));
      }
      if (u == v) {
        throw ConsistencyError("Graph: self-loop at node " + std::to_string(u));
      }
      unique_edges.insert({std::min(u, v), std::max(u, v)});
    }
    g.edges.assign(unique_edges.begin(), unique_edges.end());
    g.adjacency = Tensor::zeros({num_nodes, num_nodes});
    for (auto [u, v] : g.edges) {
      g.adjacency.at(u, v) = 1.0;
      g.adjacency.at(v, u) = 1.0;
    }
    return g;
  }
};

// Per-node labels, sensitive attribute and masks. label -1 = unlabeled.
struct NodeAnnotations {
  std::vector<int> labels;
  std::vector<int> sensitive;
  std::vector<std::uint8_t> observed_mask;      // sensitive attribute shared
  std::vector<std::uint8_t> utility_test_mask;  // node-classification test set

  std::size_t size() const { return sensitive.size(); }

  bool has_labels() const {
    return std::any_of(labels.begin(), labels.end(),
                       [](int y) { return y >= 0; });
  }

  int num_label_classes() const {
    int c = 0;
    for (int y : labels) c = std::max(c, y + 1);
    return c;
  }

  int num_sensitive_classes() const {
    int c = 0;
    for (int s : sensitive) c = std::max(c, s + 1);
    return c;
  }

  std::size_t observed_count() const {
    return static_cast<std::size_t>(
        std::count(observed_mask.begin(), observed_mask.end(), 1));
  }
};

// Link-prediction split: held-out positive/negative pairs plus the training
// adjacency with test edges removed.
struct LinkSplit {
  Tensor train_adjacency;  // [N,N], symmetric
  std::vector<Edge> train_edges;
  std::vector<Edge> test_positives;
  std::vector<Edge> test_negatives;
};

// Planted-partition generator standing in for non-redistributable data.
// Node blocks drive both the edge structure and the sensitive attribute.
// A second, independent partition provides class labels; label_strength
// modulates edge probabilities around the block baseline so that label
// communities are detectable without changing the expected degree.
struct SbmConfig {
  std::size_t num_nodes = 300;
  std::size_t num_blocks = 2;
  double p_in = 0.05;
  double p_out = 0.005;
  std::size_t feature_dim = 16;
  double feature_noise = 0.3;
  double flip_prob = 0.1;      // P(sensitive attribute != block)
  double label_strength = 0.0; // 0 disables the label-partition edge signal

  void validate() const {
    if (num_nodes < 2) throw ConfigError("sbm: need at least 2 nodes");
    if (num_blocks < 2 || num_blocks > num_nodes) {
      throw ConfigError("sbm: block count must be in [2, num_nodes]");
    }
    if (!(p_out >= 0.0 && p_out <= p_in && p_in <= 1.0)) {
      throw ConfigError("sbm: need 0 <= p_out <= p_in <= 1, got p_in=" +
                        std::to_string(p_in) + " p_out=" +
                        std::to_string(p_out));
    }
    if (flip_prob < 0.0 || flip_prob > 0.5) {
      throw ConfigError("sbm: flip_prob must be in [0, 0.5]");
    }
    if (feature_dim < num_blocks) {
      throw ConfigError("sbm: feature_dim must be >= num_blocks");
    }
    if (feature_noise < 0.0) throw ConfigError("sbm: feature_noise < 0");
    if (label_strength < 0.0 || label_strength >= 1.0) {
      throw ConfigError("sbm: label_strength must be in [0, 1)");
    }
  }
};

// Symmetric GCN normalization with self-loops:
// Ahat = Dtilde^{-1/2} (A + I) Dtilde^{-1/2}.
inline Tensor normalize_adjacency(const Graph& g) {
  const std::size_t n = g.num_nodes;
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 1.0;  // self-loop
    for (std::size_t j = 0; j < n; ++j) deg += g.adjacency.at(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  Tensor ahat = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = g.adjacency.at(i, j) + (i == j ? 1.0 : 0.0);
      if (a != 0.0) ahat.at(i, j) = a * inv_sqrt_deg[i] * inv_sqrt_deg[j];
    }
  }
  return ahat;
}

// Removes round(test_fraction * |E|) edges as held-out positives and samples
// an equal number of non-edges as negatives.
inline LinkSplit split_links(const Graph& g, double test_fraction,
                             RandomSource& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 0.5)) {
    throw ContractError("split_links: test_fraction must be in (0, 0.5)");
  }
  if (g.num_edges() < 10) {
    throw ContractError("split_links: graph has fewer than 10 edges");
  }
  const std::size_t n = g.num_nodes;
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(g.num_edges())));
  const std::size_t all_pairs = n * (n - 1) / 2;
  const std::size_t non_edges = all_pairs - g.num_edges();
  if (non_edges < n_test || n_test == 0) {
    throw InfeasibleSplitError(
        "split_links: cannot sample " + std::to_string(n_test) +
        " negative pairs from " + std::to_string(non_edges) + " non-edges");
  }

  std::vector<std::size_t> order(g.num_edges());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  LinkSplit split;
  split.test_positives.reserve(n_test);
  for (std::size_t i = 0; i < n_test; ++i) {
    split.test_positives.push_back(g.edges[order[i]]);
  }
  split.train_edges.reserve(g.num_edges() - n_test);
  for (std::size_t i = n_test; i < order.size(); ++i) {
    split.train_edges.push_back(g.edges[order[i]]);
  }
  std::sort(split.train_edges.begin(), split.train_edges.end());
  std::sort(split.test_positives.begin(), split.test_positives.end());

  split.train_adjacency = Tensor::zeros({n, n});
  for (auto [u, v] : split.train_edges) {
    split.train_adjacency.at(u, v) = 1.0;
    split.train_adjacency.at(v, u) = 1.0;
  }

  // Negatives: uniform over non-edges of the *full* graph, no self-loops.
  std::set<Edge> seen;
  const bool dense_fallback = non_edges < 4 * n_test;
  if (dense_fallback) {
    std::vector<Edge> candidates;
    candidates.reserve(non_edges);
    for (std::size_t u = 0; u + 1 < n; ++u) {
      for (std::size_t v = u + 1; v < n; ++v) {
        if (g.adjacency.at(u, v) == 0.0) {
          candidates.push_back({static_cast<int>(u), static_cast<int>(v)});
        }
      }
    }
    rng.shuffle(candidates);
    split.test_negatives.assign(candidates.begin(), candidates.begin() + n_test);
  } else {
    while (split.test_negatives.size() < n_test) {
      int u = static_cast<int>(rng.index(n));
      int v = static_cast<int>(rng.index(n));
      if (u == v) continue;
      Edge e{std::min(u, v), std::max(u, v)};
      if (g.adjacency.at(e.first, e.second) != 0.0) continue;
      if (!seen.insert(e).second) continue;
      split.test_negatives.push_back(e);
    }
  }
  std::sort(split.test_negatives.begin(), split.test_negatives.end());
  return split;
}

// Marks round(test_fraction * N) nodes, sampled uniformly, as the
// node-classification test set.
inline void split_nodes(NodeAnnotations& ann, double test_fraction,
                        RandomSource& rng) {
  if (!ann.has_labels()) {
    throw ContractError("split_nodes: annotations carry no labels");
  }
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    throw ContractError("split_nodes: test_fraction must be in [0, 1)");
  }
  const std::size_t n = ann.size();
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  ann.utility_test_mask.assign(n, 0);
  for (std::size_t i = 0; i < n_test; ++i) ann.utility_test_mask[order[i]] = 1;
}

// Marks round(observed_ratio * N) nodes as having shared their sensitive
// attribute (the set S_k available during training).
inline void mask_sensitive(NodeAnnotations& ann, double observed_ratio,
                           RandomSource& rng) {
  if (!(observed_ratio > 0.0 && observed_ratio <= 1.0)) {
    throw ContractError("mask_sensitive: observed_ratio must be in (0, 1]");
  }
  const std::size_t n = ann.size();
  const auto n_obs = static_cast<std::size_t>(
      std::llround(observed_ratio * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  ann.observed_mask.assign(n, 0);
  for (std::size_t i = 0; i < n_obs; ++i) ann.observed_mask[order[i]] = 1;
}

struct SbmResult {
  Graph graph;
  NodeAnnotations annotations;
  std::vector<int> blocks;  // ground-truth block of each node
};

inline SbmResult generate_sbm(const SbmConfig& cfg, RandomSource& rng) {
  cfg.validate();
  const std::size_t n = cfg.num_nodes;
  const std::size_t b = cfg.num_blocks;

  auto edge_rng = rng.child(stream::kSbmEdges);
  auto label_rng = rng.child(stream::kSbmLabels);
  auto flip_rng = rng.child(stream::kSbmFlips);
  auto feature_rng = rng.child(stream::kSbmFeatures);

  // Contiguous, balanced blocks.
  std::vector<int> blocks(n);
  for (std::size_t i = 0; i < n; ++i) {
    blocks[i] = static_cast<int>(i * b / n);
  }

  // Independent balanced label partition.
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  label_rng.shuffle(perm);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[perm[i]] = static_cast<int>(i * b / n);
  }

  // Edges: block partition sets the baseline probability; the label
  // partition scales it so that the expectation over label assignments is
  // unchanged: (1/B)(1+gamma) + (1-1/B)(1-gamma/(B-1)) = 1.
  const double gamma = cfg.label_strength;
  const double same_label_factor = 1.0 + gamma;
  const double cross_label_factor =
      1.0 - gamma / static_cast<double>(b - 1);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u + 1 < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      double p = blocks[u] == blocks[v] ? cfg.p_in : cfg.p_out;
      p *= labels[u] == labels[v] ? same_label_factor : cross_label_factor;
      p = std::clamp(p, 0.0, 1.0);
      if (edge_rng.bernoulli(p)) {
        edges.push_back({static_cast<int>(u), static_cast<int>(v)});
      }
    }
  }

  // Sensitive attribute: block id, flipped to a random other block with
  // probability flip_prob.
  std::vector<int> sensitive(n);
  for (std::size_t i = 0; i < n; ++i) {
    sensitive[i] = blocks[i];
    if (cfg.flip_prob > 0.0 && flip_rng.bernoulli(cfg.flip_prob)) {
      const auto shift = 1 + static_cast<int>(flip_rng.index(b - 1));
      sensitive[i] = (blocks[i] + shift) % static_cast<int>(b);
    }
  }

  // Features: one-hot block signal plus Gaussian noise on every dimension.
  Tensor features = Tensor::zeros({n, cfg.feature_dim});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cfg.feature_dim; ++j) {
      double x = (j == static_cast<std::size_t>(blocks[i])) ? 1.0 : 0.0;
      x += cfg.feature_noise * feature_rng.normal();
      features.at(i, j) = x;
    }
  }

  SbmResult out;
  out.graph = Graph::from_edges(n, std::move(edges), std::move(features));
  out.annotations.labels = std::move(labels);
  out.annotations.sensitive = std::move(sensitive);
  out.annotations.observed_mask.assign(n, 1);
  out.annotations.utility_test_mask.assign(n, 0);
  out.blocks = std::move(blocks);
  return out;
}

}  // namespace pvgae
