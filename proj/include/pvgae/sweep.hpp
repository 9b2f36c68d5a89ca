#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pvgae/experiment.hpp"

namespace pvgae {

enum class SweepAxis { kBeta, kDim, kRatio };

inline SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "beta") return SweepAxis::kBeta;
  if (s == "dim") return SweepAxis::kDim;
  if (s == "ratio") return SweepAxis::kRatio;
  throw ConfigError("sweep axis must be one of beta|dim|ratio, got '" + s + "'");
}

inline const char* sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kBeta: return "beta";
    case SweepAxis::kDim: return "dim";
    case SweepAxis::kRatio: return "ratio";
  }
  return "?";
}

inline void apply_sweep_value(ExperimentConfig& cfg, SweepAxis axis,
                              double value) {
  switch (axis) {
    case SweepAxis::kBeta:
      cfg.train.beta = value;
      break;
    case SweepAxis::kDim:
      if (value < 1.0 || value != std::floor(value)) {
        throw ConfigError("dim axis values must be positive integers");
      }
      cfg.train.latent_dim = static_cast<std::size_t>(value);
      break;
    case SweepAxis::kRatio:
      cfg.train.observed_ratio = value;
      break;
  }
}

// Everything one training run produces, before anything touches disk.
struct ExperimentArtifacts {
  Graph full_graph;
  Graph train_graph;
  NodeAnnotations annotations;
  LinkSplit split;
  EmbeddingMatrix embedding;
  TrainHistory history;
  std::string model_type;
  PvgaeModel model;     // populated when model_type == "pvgae"
  VgaeModel vgae_model; // populated when model_type == "vgae"
  bool train_aborted = false;
  std::string abort_reason;
};

// Builds the dataset for a config: synthetic generation or file loading.
// Deterministic in (config, seed).
inline LoadedDataset materialize_dataset(const ExperimentConfig& cfg,
                                         RandomSource& master) {
  if (cfg.dataset.kind == DatasetSettings::Kind::kSbm) {
    auto data_rng = master.child(stream::kDataset);
    auto sbm = generate_sbm(cfg.dataset.sbm, data_rng);
    return {std::move(sbm.graph), std::move(sbm.annotations)};
  }
  return load_graph(cfg.dataset.edges, cfg.dataset.features,
                    cfg.dataset.annotations);
}

// One full train cycle: dataset, splits, masking, training, embedding export.
inline ExperimentArtifacts run_training(const ExperimentConfig& cfg,
                                        std::uint64_t seed,
                                        const EpochCallback& on_epoch = {}) {
  cfg.validate();
  RandomSource master(seed);

  ExperimentArtifacts art;
  auto dataset = materialize_dataset(cfg, master);
  art.full_graph = std::move(dataset.graph);
  art.annotations = std::move(dataset.annotations);

  auto link_rng = master.child(stream::kLinkSplit);
  art.split = split_links(art.full_graph, cfg.eval.link_test_fraction, link_rng);
  art.train_graph = Graph::from_edges(art.full_graph.num_nodes,
                                      art.split.train_edges,
                                      art.full_graph.features.clone());

  if (art.annotations.has_labels()) {
    auto node_rng = master.child(stream::kNodeSplit);
    split_nodes(art.annotations, cfg.eval.node_test_fraction, node_rng);
  }
  auto mask_rng = master.child(stream::kSensitiveMask);
  mask_sensitive(art.annotations, cfg.train.observed_ratio, mask_rng);

  auto train_rng = master.child(stream::kTrain);
  const std::string hash = cfg.config_hash();
  art.model_type = cfg.model_type;
  if (cfg.model_type == "vgae") {
    auto result = train_vgae_baseline(art.train_graph, cfg.train, train_rng,
                                      on_epoch);
    art.history = std::move(result.history);
    art.train_aborted = result.aborted;
    art.abort_reason = result.abort_reason;
    art.vgae_model = std::move(result.model);
    if (!art.train_aborted) {
      art.embedding =
          export_embeddings(art.vgae_model, art.train_graph, seed, hash);
    }
  } else {
    auto result = train_pvgae(art.train_graph, art.annotations, cfg.train,
                              train_rng, on_epoch);
    art.history = std::move(result.history);
    art.train_aborted = result.aborted;
    art.abort_reason = result.abort_reason;
    art.model = std::move(result.model);
    if (!art.train_aborted) {
      art.embedding =
          export_embeddings(art.model, art.train_graph, seed, hash);
    }
  }
  return art;
}

// Metric evaluation over an already-exported embedding.
inline EvalReport evaluate_embedding(const EmbeddingMatrix& emb,
                                     const ExperimentArtifacts& art,
                                     const ExperimentConfig& cfg,
                                     std::uint64_t seed) {
  EvalReport rep;
  rep.seed = seed;
  rep.config_hash = cfg.config_hash();
  RandomSource master(seed);
  auto eval_rng = master.child(stream::kEval);

  rep.link_auc = link_auc(emb, art.split);
  if (art.annotations.has_labels()) {
    rep.node_clf_acc = node_classification(emb, art.annotations.labels,
                                           art.annotations.utility_test_mask);
  }

  AttackerConfig mlp_cfg = cfg.eval.attacker;
  mlp_cfg.kind = AttackerConfig::Kind::kMlp;
  auto mlp_rng = eval_rng.child(stream::kAttackMlp);
  rep.attack_acc_mlp =
      attack_inference(emb, art.annotations.sensitive, mlp_cfg, mlp_rng);

  AttackerConfig margin_cfg = cfg.eval.attacker;
  margin_cfg.kind = AttackerConfig::Kind::kLinearMargin;
  auto margin_rng = eval_rng.child(stream::kAttackMargin);
  rep.attack_acc_margin =
      attack_inference(emb, art.annotations.sensitive, margin_cfg, margin_rng);

  const std::size_t observed = art.annotations.observed_count();
  if (observed > 0 && observed < art.annotations.size() &&
      art.annotations.has_labels()) {
    auto group_rng = eval_rng.child(stream::kGroupReport);
    auto group = public_secret_report(emb, art.annotations, mlp_cfg, group_rng);
    rep.public_acc = group.public_acc;
    rep.secret_acc = group.secret_acc;
    rep.public_attack = group.public_attack;
    rep.secret_attack = group.secret_attack;
    rep.public_size = group.public_size;
    rep.secret_size = group.secret_size;
  }
  return rep;
}

// Train + evaluate for one configuration cell.
inline EvalReport run_experiment(const ExperimentConfig& cfg,
                                 std::uint64_t seed) {
  auto art = run_training(cfg, seed);
  if (art.train_aborted) {
    EvalReport rep;
    rep.seed = seed;
    rep.config_hash = cfg.config_hash();
    rep.ok = false;
    rep.error = art.abort_reason;
    return rep;
  }
  return evaluate_embedding(art.embedding, art, cfg, seed);
}

// Full sweep over one axis: one train+eval cycle per (value, seed) pair.
// Cells run on `workers` threads (0 = hardware concurrency); each cell is
// fully isolated, so results do not depend on scheduling. A failed cell is
// flagged in its report and the sweep continues.
inline std::vector<EvalReport> run_sweep(const ExperimentConfig& base,
                                         SweepAxis axis,
                                         const std::vector<double>& values,
                                         const std::vector<std::uint64_t>& seeds,
                                         std::size_t workers = 0) {
  if (values.empty()) throw ContractError("run_sweep: values must be non-empty");
  if (seeds.empty()) throw ContractError("run_sweep: seeds must be non-empty");

  struct Cell {
    double value;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double v : values) {
    for (std::uint64_t s : seeds) cells.push_back({v, s});
  }
  // validate every cell before any work starts
  for (const auto& cell : cells) {
    ExperimentConfig cfg = base;
    apply_sweep_value(cfg, axis, cell.value);
    cfg.train.seed = cell.seed;
    cfg.validate();
  }

  if (workers == 0) {
    workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  workers = std::min(workers, cells.size());

  std::vector<EvalReport> reports(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      ExperimentConfig cfg = base;
      apply_sweep_value(cfg, axis, cells[i].value);
      cfg.train.seed = cells[i].seed;
      EvalReport rep;
      try {
        rep = run_experiment(cfg, cells[i].seed);
      } catch (const std::exception& e) {
        rep.seed = cells[i].seed;
        rep.ok = false;
        rep.error = e.what();
      }
      rep.axis = sweep_axis_name(axis);
      rep.axis_value = cells[i].value;
      reports[i] = std::move(rep);
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return reports;
}

// ---- report files ----

namespace detail {

inline std::string metric_str(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

// One record per configuration, fixed field order.
inline std::string format_report_line(const EvalReport& r) {
  std::ostringstream os;
  os << "axis=" << r.axis << " value=" << detail::metric_str(r.axis_value)
     << " seed=" << r.seed << " link_auc=" << detail::metric_str(r.link_auc)
     << " node_clf_acc=" << detail::metric_str(r.node_clf_acc)
     << " attack_acc_mlp=" << detail::metric_str(r.attack_acc_mlp)
     << " attack_acc_margin=" << detail::metric_str(r.attack_acc_margin)
     << " public_acc=" << detail::metric_str(r.public_acc)
     << " secret_acc=" << detail::metric_str(r.secret_acc)
     << " public_attack=" << detail::metric_str(r.public_attack)
     << " secret_attack=" << detail::metric_str(r.secret_attack)
     << " config=" << r.config_hash << " ok=" << (r.ok ? 1 : 0);
  if (!r.ok) os << " error=\"" << r.error << '"';
  return os.str();
}

inline void append_report_line(const std::string& path, const EvalReport& r) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open report file: " + path);
  out << format_report_line(r) << '\n';
}

// Summary CSV keyed by (axis, value, metric) with one column per seed plus
// mean and standard deviation over the seeds that succeeded.
inline void write_sweep_summary_csv(const std::string& path,
                                    const std::vector<EvalReport>& reports,
                                    const std::vector<std::uint64_t>& seeds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write sweep summary: " + path);

  const std::vector<std::pair<std::string, double EvalReport::*>> metrics = {
      {"link_auc", &EvalReport::link_auc},
      {"node_clf_acc", &EvalReport::node_clf_acc},
      {"attack_acc_mlp", &EvalReport::attack_acc_mlp},
      {"attack_acc_margin", &EvalReport::attack_acc_margin},
      {"public_acc", &EvalReport::public_acc},
      {"secret_acc", &EvalReport::secret_acc},
      {"public_attack", &EvalReport::public_attack},
      {"secret_attack", &EvalReport::secret_attack},
  };

  out << "axis,value,metric";
  for (auto s : seeds) out << ",seed_" << s;
  out << ",mean,std\n";

  // stable value order as encountered
  std::vector<double> values;
  for (const auto& r : reports) {
    if (std::find(values.begin(), values.end(), r.axis_value) == values.end()) {
      values.push_back(r.axis_value);
    }
  }
  for (double v : values) {
    for (const auto& [name, member] : metrics) {
      out << (reports.empty() ? "none" : reports.front().axis) << ','
          << detail::metric_str(v) << ',' << name;
      std::vector<double> ok_values;
      for (auto s : seeds) {
        const EvalReport* cell = nullptr;
        for (const auto& r : reports) {
          if (r.axis_value == v && r.seed == s) {
            cell = &r;
            break;
          }
        }
        if (cell == nullptr || !cell->ok) {
          out << ",nan";
          continue;
        }
        const double m = cell->*member;
        out << ',' << detail::metric_str(m);
        if (!std::isnan(m)) ok_values.push_back(m);
      }
      if (ok_values.empty()) {
        out << ",nan,nan\n";
        continue;
      }
      double mean = 0.0;
      for (double m : ok_values) mean += m;
      mean /= static_cast<double>(ok_values.size());
      double var = 0.0;
      for (double m : ok_values) var += (m - mean) * (m - mean);
      var /= static_cast<double>(ok_values.size());
      out << ',' << detail::metric_str(mean) << ','
          << detail::metric_str(std::sqrt(var)) << '\n';
    }
  }
}

}  // namespace pvgae
