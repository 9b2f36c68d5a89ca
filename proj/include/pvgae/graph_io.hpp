#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pvgae/graph.hpp"

namespace pvgae {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& tok, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": not a number: '" + tok + "'");
  }
}

inline long parse_long(const std::string& tok, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": not an integer: '" + tok + "'");
  }
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace detail

// Feature file: CSV, row i = node i, no header. Node count comes from here.
inline Tensor load_feature_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto where = path + ":" + std::to_string(lineno);
    auto fields = detail::split_csv(t);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(detail::parse_double(f, where));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(where + ": expected " +
                       std::to_string(rows.front().size()) + " columns, got " +
                       std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": empty feature file");
  const std::size_t n = rows.size(), d = rows.front().size();
  Tensor x = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x.at(i, j) = rows[i][j];
  return x;
}

// Edge file: whitespace-separated "u v" per line, '#' starts a comment.
inline std::vector<Edge> load_edge_file(const std::string& path,
                                        std::size_t num_nodes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge file: " + path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto where = path + ":" + std::to_string(lineno);
    std::istringstream is(t);
    std::string a, b, extra;
    if (!(is >> a >> b) || (is >> extra)) {
      throw ParseError(where + ": expected 'u v'");
    }
    const long u = detail::parse_long(a, where);
    const long v = detail::parse_long(b, where);
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= num_nodes ||
        static_cast<std::size_t>(v) >= num_nodes) {
      throw ParseError(where + ": node id out of range [0, " +
                       std::to_string(num_nodes) + ")");
    }
    if (u == v) throw ParseError(where + ": self-loop");
    edges.push_back({static_cast<int>(u), static_cast<int>(v)});
  }
  return edges;
}

// Annotation file: CSV with header "label,sensitive"; empty label field
// marks an unlabeled node.
inline NodeAnnotations load_annotation_file(const std::string& path,
                                            std::size_t num_nodes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file: " + path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "label,sensitive") {
    throw ParseError(path + ":1: expected header 'label,sensitive'");
  }
  NodeAnnotations ann;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto where = path + ":" + std::to_string(lineno);
    auto fields = detail::split_csv(t);
    if (fields.size() != 2) {
      throw ParseError(where + ": expected 'label,sensitive'");
    }
    const int label = fields[0].empty()
                          ? -1
                          : static_cast<int>(detail::parse_long(fields[0], where));
    const int sensitive = static_cast<int>(detail::parse_long(fields[1], where));
    if (sensitive < 0) throw ParseError(where + ": negative sensitive class");
    ann.labels.push_back(label);
    ann.sensitive.push_back(sensitive);
  }
  if (ann.size() != num_nodes) {
    throw ConsistencyError(path + ": " + std::to_string(ann.size()) +
                           " annotation rows for " + std::to_string(num_nodes) +
                           " nodes");
  }
  ann.observed_mask.assign(num_nodes, 1);
  ann.utility_test_mask.assign(num_nodes, 0);
  return ann;
}

struct LoadedDataset {
  Graph graph;
  NodeAnnotations annotations;
};

inline LoadedDataset load_graph(const std::string& edge_path,
                                const std::string& feature_path,
                                const std::string& annotation_path) {
  Tensor features = load_feature_file(feature_path);
  const std::size_t n = features.rows();
  auto edges = load_edge_file(edge_path, n);
  LoadedDataset ds;
  ds.graph = Graph::from_edges(n, std::move(edges), std::move(features));
  ds.annotations = load_annotation_file(annotation_path, n);
  return ds;
}

struct DatasetPaths {
  std::string edges;
  std::string features;
  std::string annotations;
  std::string sidecar;
};

inline DatasetPaths dataset_paths(const std::string& dir) {
  namespace fs = std::filesystem;
  return {
      (fs::path(dir) / "edges.txt").string(),
      (fs::path(dir) / "features.csv").string(),
      (fs::path(dir) / "annotations.csv").string(),
      (fs::path(dir) / "dataset.json").string(),
  };
}

// Writes a dataset in the same three-file layout load_graph() reads, plus a
// provenance sidecar carrying the generator config and seed.
inline DatasetPaths save_dataset(const std::string& dir, const Graph& g,
                                 const NodeAnnotations& ann,
                                 const SbmConfig& cfg, std::uint64_t seed) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory: " + dir);
  const auto paths = dataset_paths(dir);

  {
    std::ofstream out(paths.edges);
    if (!out) throw IoError("cannot write " + paths.edges);
    out << "# undirected edges, one 'u v' pair per line\n";
    for (auto [u, v] : g.edges) out << u << ' ' << v << '\n';
  }
  {
    std::ofstream out(paths.features);
    if (!out) throw IoError("cannot write " + paths.features);
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      for (std::size_t j = 0; j < g.feature_dim(); ++j) {
        if (j) out << ',';
        out << detail::fmt_double(g.features.at(i, j));
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(paths.annotations);
    if (!out) throw IoError("cannot write " + paths.annotations);
    out << "label,sensitive\n";
    for (std::size_t i = 0; i < ann.size(); ++i) {
      if (ann.labels[i] >= 0) out << ann.labels[i];
      out << ',' << ann.sensitive[i] << '\n';
    }
  }
  {
    nlohmann::json j;
    j["format"] = "pvgae-dataset-v1";
    j["generator"] = "sbm";
    j["seed"] = seed;
    j["num_nodes"] = cfg.num_nodes;
    j["num_blocks"] = cfg.num_blocks;
    j["p_in"] = cfg.p_in;
    j["p_out"] = cfg.p_out;
    j["feature_dim"] = cfg.feature_dim;
    j["feature_noise"] = cfg.feature_noise;
    j["flip_prob"] = cfg.flip_prob;
    j["label_strength"] = cfg.label_strength;
    std::ofstream out(paths.sidecar);
    if (!out) throw IoError("cannot write " + paths.sidecar);
    out << j.dump(2) << '\n';
  }
  return paths;
}

}  // namespace pvgae
