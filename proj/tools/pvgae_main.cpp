// Command-line frontend: synthetic data generation, training, embedding
// export, evaluation, attacks and sweeps, all driven by one config file.
// Flags override config values, config values override defaults.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pvgae/pvgae.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<double> beta;
  std::optional<std::string> model;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool with_model = false) {
  cmd->add_option("--config", flags.config_path, "experiment config file");
  cmd->add_option("--seed", flags.seed, "override train.seed");
  cmd->add_option("--out", flags.out_dir, "override output.dir");
  if (with_model) {
    cmd->add_option("--beta", flags.beta, "override train.beta");
    cmd->add_option("--model", flags.model, "model type: pvgae or vgae");
  }
}

pvgae::ExperimentConfig resolve_config(const CommonFlags& flags) {
  pvgae::ExperimentConfig cfg;
  if (!flags.config_path.empty()) cfg = pvgae::load_config(flags.config_path);
  if (flags.seed) cfg.train.seed = *flags.seed;
  if (flags.out_dir) cfg.output_dir = *flags.out_dir;
  if (flags.beta) cfg.train.beta = *flags.beta;
  if (flags.model) cfg.model_type = *flags.model;
  cfg.validate();
  return cfg;
}

std::string run_dir(const pvgae::ExperimentConfig& cfg) {
  std::ostringstream os;
  os << cfg.config_hash() << "-s" << cfg.train.seed;
  return (fs::path(cfg.output_dir) / os.str()).string();
}

pvgae::EpochCallback make_logger(const pvgae::ExperimentConfig& cfg) {
  const std::size_t every = cfg.log_every;
  if (every == 0) return {};
  return [every](std::size_t epoch, const pvgae::LossBreakdown& b) {
    if (epoch % every != 0) return;
    std::cerr << "epoch " << epoch << " total_graph=" << b.total_graph
              << " recon_x=" << b.recon_x << " kl_x=" << b.kl_x
              << " penalty=" << b.penalty
              << " total_sensitive=" << b.total_sensitive << "\n";
  };
}

std::vector<double> parse_value_list(const std::string& csv) {
  std::vector<double> values;
  std::istringstream is(csv);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) continue;
    values.push_back(std::stod(tok));
  }
  return values;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::istringstream is(csv);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) continue;
    seeds.push_back(std::stoull(tok));
  }
  return seeds;
}

int cmd_gen_synth(const CommonFlags& flags) {
  auto cfg = resolve_config(flags);
  if (cfg.dataset.kind != pvgae::DatasetSettings::Kind::kSbm) {
    throw pvgae::ConfigError("gen-synth requires dataset.kind=sbm");
  }
  pvgae::RandomSource master(cfg.train.seed);
  auto data_rng = master.child(pvgae::stream::kDataset);
  auto sbm = pvgae::generate_sbm(cfg.dataset.sbm, data_rng);
  const std::string dir =
      (fs::path(cfg.output_dir) / ("dataset-" + cfg.config_hash() + "-s" +
                                   std::to_string(cfg.train.seed)))
          .string();
  auto paths = pvgae::save_dataset(dir, sbm.graph, sbm.annotations,
                                   cfg.dataset.sbm, cfg.train.seed);
  std::cout << "wrote " << paths.edges << "\n"
            << "wrote " << paths.features << "\n"
            << "wrote " << paths.annotations << "\n"
            << "wrote " << paths.sidecar << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags) {
  auto cfg = resolve_config(flags);
  auto art = pvgae::run_training(cfg, cfg.train.seed, make_logger(cfg));

  const std::string dir = run_dir(cfg);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw pvgae::IoError("cannot create run directory: " + dir);

  {
    std::ofstream out(fs::path(dir) / "config.resolved");
    out << cfg.canonical_dump();
  }
  pvgae::write_history_csv((fs::path(dir) / "history.csv").string(),
                           art.history);
  if (art.train_aborted) {
    std::cerr << "training aborted: " << art.abort_reason
              << " (partial history written to " << dir << ")\n";
    return 2;
  }
  pvgae::write_embedding_file((fs::path(dir) / "embeddings.txt").string(),
                              art.embedding);
  const std::string ckpt_path = (fs::path(dir) / "checkpoint.txt").string();
  if (cfg.model_type == "vgae") {
    pvgae::write_checkpoint(ckpt_path, art.vgae_model, cfg.train);
  } else {
    pvgae::write_checkpoint(ckpt_path, art.model, cfg.train);
  }
  std::cout << "run directory: " << dir << "\n";
  return 0;
}

int cmd_embed(const CommonFlags& flags, const std::string& checkpoint_path) {
  auto cfg = resolve_config(flags);
  auto ckpt = pvgae::read_checkpoint(checkpoint_path);

  // rebuild the training graph from the checkpoint's seed
  pvgae::RandomSource master(ckpt.config.seed);
  auto dataset = pvgae::materialize_dataset(cfg, master);
  auto link_rng = master.child(pvgae::stream::kLinkSplit);
  auto split =
      pvgae::split_links(dataset.graph, cfg.eval.link_test_fraction, link_rng);
  auto train_graph =
      pvgae::Graph::from_edges(dataset.graph.num_nodes, split.train_edges,
                               dataset.graph.features.clone());

  pvgae::EmbeddingMatrix emb;
  if (ckpt.model_type == "vgae") {
    emb = pvgae::export_embeddings(ckpt.vgae, train_graph, ckpt.config.seed,
                                   cfg.config_hash());
  } else {
    emb = pvgae::export_embeddings(ckpt.model, train_graph, ckpt.config.seed,
                                   cfg.config_hash());
  }
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  const std::string path =
      (fs::path(cfg.output_dir) / "embeddings.txt").string();
  pvgae::write_embedding_file(path, emb);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& embedding_path,
             const std::string& report_path) {
  auto cfg = resolve_config(flags);
  auto emb = pvgae::read_embedding_file(embedding_path);
  const std::uint64_t seed = flags.seed ? *flags.seed : emb.seed;

  pvgae::RandomSource master(seed);
  auto dataset = pvgae::materialize_dataset(cfg, master);
  if (dataset.graph.num_nodes != emb.num_nodes) {
    throw pvgae::ConsistencyError(
        "embedding has " + std::to_string(emb.num_nodes) +
        " rows but the dataset has " + std::to_string(dataset.graph.num_nodes) +
        " nodes");
  }
  pvgae::ExperimentArtifacts art;
  art.full_graph = std::move(dataset.graph);
  art.annotations = std::move(dataset.annotations);
  auto link_rng = master.child(pvgae::stream::kLinkSplit);
  art.split =
      pvgae::split_links(art.full_graph, cfg.eval.link_test_fraction, link_rng);
  if (art.annotations.has_labels()) {
    auto node_rng = master.child(pvgae::stream::kNodeSplit);
    pvgae::split_nodes(art.annotations, cfg.eval.node_test_fraction, node_rng);
  }
  auto mask_rng = master.child(pvgae::stream::kSensitiveMask);
  pvgae::mask_sensitive(art.annotations, cfg.train.observed_ratio, mask_rng);

  auto report = pvgae::evaluate_embedding(emb, art, cfg, seed);
  const std::string path = report_path.empty()
                               ? (fs::path(cfg.output_dir) / "report.txt").string()
                               : report_path;
  std::error_code ec;
  fs::create_directories(fs::path(path).parent_path(), ec);
  pvgae::append_report_line(path, report);
  std::cout << pvgae::format_report_line(report) << "\n";
  return 0;
}

int cmd_attack(const CommonFlags& flags, const std::string& embedding_path) {
  auto cfg = resolve_config(flags);
  auto emb = pvgae::read_embedding_file(embedding_path);
  const std::uint64_t seed = flags.seed ? *flags.seed : emb.seed;

  pvgae::RandomSource master(seed);
  auto dataset = pvgae::materialize_dataset(cfg, master);
  if (dataset.graph.num_nodes != emb.num_nodes) {
    throw pvgae::ConsistencyError(
        "embedding has " + std::to_string(emb.num_nodes) +
        " rows but the dataset has " + std::to_string(dataset.graph.num_nodes) +
        " nodes");
  }
  auto eval_rng = master.child(pvgae::stream::kEval);

  auto mlp_cfg = cfg.eval.attacker;
  mlp_cfg.kind = pvgae::AttackerConfig::Kind::kMlp;
  auto mlp_rng = eval_rng.child(pvgae::stream::kAttackMlp);
  const double mlp_acc = pvgae::attack_inference(
      emb, dataset.annotations.sensitive, mlp_cfg, mlp_rng);

  auto margin_cfg = cfg.eval.attacker;
  margin_cfg.kind = pvgae::AttackerConfig::Kind::kLinearMargin;
  auto margin_rng = eval_rng.child(pvgae::stream::kAttackMargin);
  const double margin_acc = pvgae::attack_inference(
      emb, dataset.annotations.sensitive, margin_cfg, margin_rng);

  std::cout << "attack_acc_mlp=" << mlp_acc
            << " attack_acc_margin=" << margin_acc << "\n";
  return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::string& axis_str,
              const std::string& values_csv, const std::string& seeds_csv,
              std::size_t workers) {
  auto cfg = resolve_config(flags);
  const auto axis = pvgae::parse_sweep_axis(axis_str);
  const auto values = parse_value_list(values_csv);
  const auto seeds = parse_seed_list(seeds_csv);
  if (values.empty()) throw pvgae::ConfigError("sweep: --values is empty");
  if (seeds.empty()) throw pvgae::ConfigError("sweep: --seeds is empty");

  auto reports = pvgae::run_sweep(cfg, axis, values, seeds, workers);

  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  const std::string summary_path =
      (fs::path(cfg.output_dir) /
       ("sweep-" + std::string(pvgae::sweep_axis_name(axis)) + "-" +
        cfg.config_hash() + ".csv"))
          .string();
  pvgae::write_sweep_summary_csv(summary_path, reports, seeds);
  const std::string report_path =
      (fs::path(cfg.output_dir) / "report.txt").string();
  bool any_failed = false;
  for (const auto& r : reports) {
    pvgae::append_report_line(report_path, r);
    std::cout << pvgae::format_report_line(r) << "\n";
    if (!r.ok) {
      any_failed = true;
      std::cerr << "failed cell: " << r.axis << "=" << r.axis_value
                << " seed=" << r.seed << ": " << r.error << "\n";
    }
  }
  std::cout << "summary: " << summary_path << "\n";
  return any_failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"privacy-preserving graph embedding toolkit"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, embed_flags, eval_flags, attack_flags,
      sweep_flags;
  std::string checkpoint_path, embedding_path, report_path;
  std::string axis_str, values_csv, seeds_csv;
  std::size_t workers = 0;

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic dataset");
  add_common(gen, gen_flags);

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, train_flags, /*with_model=*/true);

  auto* embed = app.add_subcommand("embed", "export embeddings from a checkpoint");
  add_common(embed, embed_flags);
  embed->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();

  auto* eval = app.add_subcommand("eval", "evaluate an embedding file");
  add_common(eval, eval_flags);
  eval->add_option("--embedding", embedding_path, "embedding file")->required();
  eval->add_option("--report", report_path, "report file to append to");

  auto* attack = app.add_subcommand("attack", "run attribute-inference attacks");
  add_common(attack, attack_flags);
  attack->add_option("--embedding", embedding_path, "embedding file")
      ->required();

  auto* sweep = app.add_subcommand("sweep", "train+eval over a parameter grid");
  add_common(sweep, sweep_flags);
  sweep->add_option("--axis", axis_str, "beta|dim|ratio")->required();
  sweep->add_option("--values", values_csv, "comma-separated axis values")
      ->required();
  sweep->add_option("--seeds", seeds_csv, "comma-separated seeds")->required();
  sweep->add_option("--workers", workers, "worker threads (0 = all cores)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_synth(gen_flags);
    if (train->parsed()) return cmd_train(train_flags);
    if (embed->parsed()) return cmd_embed(embed_flags, checkpoint_path);
    if (eval->parsed()) return cmd_eval(eval_flags, embedding_path, report_path);
    if (attack->parsed()) return cmd_attack(attack_flags, embedding_path);
    if (sweep->parsed()) {
      return cmd_sweep(sweep_flags, axis_str, values_csv, seeds_csv, workers);
    }
  } catch (const pvgae::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
