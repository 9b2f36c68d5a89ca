#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pvgae/evaluation.hpp"
#include "pvgae/graph.hpp"
#include "pvgae/graph_io.hpp"
#include "pvgae/training.hpp"

namespace pvgae {

struct DatasetSettings {
  enum class Kind { kSbm, kFiles };
  Kind kind = Kind::kSbm;
  SbmConfig sbm{};
  std::string edges, features, annotations;
};

struct EvalSettings {
  double link_test_fraction = 0.1;
  double node_test_fraction = 0.2;
  AttackerConfig attacker{};
};

// Full experiment description. Flat key=value sections; every field has a
// default, unknown keys are rejected, command-line flags override the file.
struct ExperimentConfig {
  DatasetSettings dataset;
  std::string model_type = "pvgae";  // or "vgae"
  TrainConfig train;
  EvalSettings eval;
  std::string output_dir = "runs";
  std::size_t log_every = 50;

  ExperimentConfig() {
    // default synthetic dataset carries an independent label partition so
    // the utility task is learnable out of the box
    dataset.sbm.label_strength = 0.6;
  }

  void validate() const {
    if (model_type != "pvgae" && model_type != "vgae") {
      throw ConfigError("model.type must be 'pvgae' or 'vgae', got '" +
                        model_type + "'");
    }
    if (dataset.kind == DatasetSettings::Kind::kSbm) {
      dataset.sbm.validate();
    } else {
      if (dataset.edges.empty() || dataset.features.empty() ||
          dataset.annotations.empty()) {
        throw ConfigError(
            "dataset.kind=files requires edges, features and annotations "
            "paths");
      }
    }
    train.validate();
    if (!(eval.link_test_fraction > 0.0 && eval.link_test_fraction < 0.5)) {
      throw ConfigError("eval.link_test_fraction must be in (0, 0.5)");
    }
    if (!(eval.node_test_fraction > 0.0 && eval.node_test_fraction < 1.0)) {
      throw ConfigError("eval.node_test_fraction must be in (0, 1)");
    }
    eval.attacker.validate();
    if (output_dir.empty()) throw ConfigError("output.dir must be non-empty");
  }

  // Canonical serialization: fixed section and key order, %.17g numbers.
  // The seed is excluded so a run directory is keyed by (hash, seed).
  std::string canonical_dump(bool include_seed = true) const;
  std::string config_hash() const;
};

namespace detail {

inline std::string cfg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double cfg_parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  }
}

inline std::uint64_t cfg_parse_u64(const std::string& v,
                                   const std::string& key) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key +
                      "': not a non-negative integer: '" + v + "'");
  }
}

}  // namespace detail

inline std::string ExperimentConfig::canonical_dump(bool include_seed) const {
  std::ostringstream os;
  os << "[dataset]\n";
  if (dataset.kind == DatasetSettings::Kind::kSbm) {
    os << "kind=sbm\n";
    os << "nodes=" << dataset.sbm.num_nodes << '\n';
    os << "blocks=" << dataset.sbm.num_blocks << '\n';
    os << "p_in=" << detail::cfg_num(dataset.sbm.p_in) << '\n';
    os << "p_out=" << detail::cfg_num(dataset.sbm.p_out) << '\n';
    os << "feature_dim=" << dataset.sbm.feature_dim << '\n';
    os << "feature_noise=" << detail::cfg_num(dataset.sbm.feature_noise) << '\n';
    os << "flip_prob=" << detail::cfg_num(dataset.sbm.flip_prob) << '\n';
    os << "label_strength=" << detail::cfg_num(dataset.sbm.label_strength)
       << '\n';
  } else {
    os << "kind=files\n";
    os << "edges=" << dataset.edges << '\n';
    os << "features=" << dataset.features << '\n';
    os << "annotations=" << dataset.annotations << '\n';
  }
  os << "[model]\n";
  os << "type=" << model_type << '\n';
  os << "latent_dim=" << train.latent_dim << '\n';
  os << "hidden_dim=" << train.hidden_dim << '\n';
  os << "[train]\n";
  os << "beta=" << detail::cfg_num(train.beta) << '\n';
  os << "epochs=" << train.epochs << '\n';
  os << "inner_epochs=" << train.inner_epochs << '\n';
  os << "lr_sensitive=" << detail::cfg_num(train.lr_sensitive) << '\n';
  os << "lr_graph=" << detail::cfg_num(train.lr_graph) << '\n';
  os << "observed_ratio=" << detail::cfg_num(train.observed_ratio) << '\n';
  if (include_seed) os << "seed=" << train.seed << '\n';
  os << "[eval]\n";
  os << "link_test_fraction=" << detail::cfg_num(eval.link_test_fraction)
     << '\n';
  os << "node_test_fraction=" << detail::cfg_num(eval.node_test_fraction)
     << '\n';
  os << "attacker_hidden=" << eval.attacker.hidden_width << '\n';
  os << "attacker_folds=" << eval.attacker.folds << '\n';
  os << "attacker_epochs=" << eval.attacker.epochs << '\n';
  os << "attacker_budget=" << detail::cfg_num(eval.attacker.observed_fraction)
     << '\n';
  os << "attacker_lr=" << detail::cfg_num(eval.attacker.lr) << '\n';
  os << "[output]\n";
  os << "dir=" << output_dir << '\n';
  os << "log_every=" << log_every << '\n';
  return os.str();
}

// FNV-1a over the canonical dump (seed excluded), as 16 hex digits.
inline std::string ExperimentConfig::config_hash() const {
  const std::string dump = canonical_dump(/*include_seed=*/false);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// Applies one "key=value" assignment addressed as "section.key".
inline void apply_config_entry(ExperimentConfig& cfg, const std::string& section,
                               const std::string& key, const std::string& value) {
  const std::string where = section + "." + key;
  auto d = [&] { return detail::cfg_parse_double(value, where); };
  auto u = [&] { return detail::cfg_parse_u64(value, where); };

  if (section == "dataset") {
    if (key == "kind") {
      if (value == "sbm") cfg.dataset.kind = DatasetSettings::Kind::kSbm;
      else if (value == "files") cfg.dataset.kind = DatasetSettings::Kind::kFiles;
      else throw ConfigError("dataset.kind must be 'sbm' or 'files'");
    } else if (key == "nodes") cfg.dataset.sbm.num_nodes = u();
    else if (key == "blocks") cfg.dataset.sbm.num_blocks = u();
    else if (key == "p_in") cfg.dataset.sbm.p_in = d();
    else if (key == "p_out") cfg.dataset.sbm.p_out = d();
    else if (key == "feature_dim") cfg.dataset.sbm.feature_dim = u();
    else if (key == "feature_noise") cfg.dataset.sbm.feature_noise = d();
    else if (key == "flip_prob") cfg.dataset.sbm.flip_prob = d();
    else if (key == "label_strength") cfg.dataset.sbm.label_strength = d();
    else if (key == "edges") cfg.dataset.edges = value;
    else if (key == "features") cfg.dataset.features = value;
    else if (key == "annotations") cfg.dataset.annotations = value;
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "model") {
    if (key == "type") cfg.model_type = value;
    else if (key == "latent_dim") cfg.train.latent_dim = u();
    else if (key == "hidden_dim") cfg.train.hidden_dim = u();
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "train") {
    if (key == "beta") cfg.train.beta = d();
    else if (key == "epochs") cfg.train.epochs = u();
    else if (key == "inner_epochs") cfg.train.inner_epochs = u();
    else if (key == "lr_sensitive") cfg.train.lr_sensitive = d();
    else if (key == "lr_graph") cfg.train.lr_graph = d();
    else if (key == "observed_ratio") cfg.train.observed_ratio = d();
    else if (key == "seed") cfg.train.seed = u();
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "eval") {
    if (key == "link_test_fraction") cfg.eval.link_test_fraction = d();
    else if (key == "node_test_fraction") cfg.eval.node_test_fraction = d();
    else if (key == "attacker_hidden") cfg.eval.attacker.hidden_width = u();
    else if (key == "attacker_folds") cfg.eval.attacker.folds = u();
    else if (key == "attacker_epochs") cfg.eval.attacker.epochs = u();
    else if (key == "attacker_budget") cfg.eval.attacker.observed_fraction = d();
    else if (key == "attacker_lr") cfg.eval.attacker.lr = d();
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "output") {
    if (key == "dir") cfg.output_dir = value;
    else if (key == "log_every") cfg.log_every = u();
    else throw ConfigError("unknown config key: " + where);
  } else {
    throw ConfigError("unknown config section: [" + section + "]");
  }
}

inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::string& origin = "<config>") {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string t = detail::trim(line);
    if (t.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": malformed section header");
      section = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key=value");
    }
    if (section.empty()) {
      throw ConfigError(where + ": key outside any [section]");
    }
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    apply_config_entry(cfg, section, key, value);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path);
}

}  // namespace pvgae
