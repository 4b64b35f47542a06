// lsg: data synthesis, graph building, two-stage training and diagnostics.

#include <iostream>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"

namespace {

using lsg::cli::json;
using lsg::cli::RunConfig;

int fail(const std::string& code, const std::string& message, int exit_code = 1) {
  std::cerr << json{{"code", code}, {"message", message}}.dump() << std::endl;
  return exit_code;
}

/// Options shared by every subcommand that reads a RunConfig.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file");
    app->add_option("--set", overrides, "Override a config key (key=value); repeatable");
    app->add_option("--seed", seed, "Master seed");
  }
};

/// Flag values that map to config keys; applied after --config and --set.
struct KeyedFlag {
  std::string key;
  std::optional<double> number;
  std::optional<std::size_t> count;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-semantic-graph guided training"};
  app.require_subcommand(1);

  ConfigFlags flags;
  std::deque<KeyedFlag> keyed;  // stable addresses for CLI11
  auto add_number = [&](CLI::App* sub, const std::string& flag, const std::string& key,
                        const std::string& help) {
    keyed.push_back({key, std::nullopt, std::nullopt});
    sub->add_option(flag, keyed.back().number, help);
  };
  auto add_count = [&](CLI::App* sub, const std::string& flag, const std::string& key,
                       const std::string& help) {
    keyed.push_back({key, std::nullopt, std::nullopt});
    sub->add_option(flag, keyed.back().count, help);
  };

  auto* synth = app.add_subcommand("synth-data", "Write synthetic embeddings and datasets");
  lsg::cli::SynthDataArgs synth_args;
  synth->add_option("-o,--out-dir", synth_args.out_dir, "Output directory")->required();
  synth->add_flag("--csv", synth_args.csv, "Write embeddings as CSV");
  add_number(synth, "--label-noise", "label_noise", "Fraction of labeled samples to mislabel");

  auto* build = app.add_subcommand("build-graph", "Build the semantic graph from embeddings");
  lsg::cli::BuildGraphArgs build_args;
  std::optional<double> fixed_tau;
  build->add_option("embeddings", build_args.embeddings, "Embedding file (.csv or binary)")->required();
  build->add_option("-o,--out", build_args.out, "Graph file")->required();
  build->add_option("--tau", fixed_tau, "Fixed threshold instead of an edge ratio");
  add_number(build, "--rho", "rho", "Fraction of cross-label pairs kept as edges");

  auto* tgcn = app.add_subcommand("train-gcn", "Train the auxiliary GCN on a graph");
  lsg::cli::TrainGcnArgs gcn_args;
  tgcn->add_option("graph", gcn_args.graph, "Graph file")->required();
  tgcn->add_option("-o,--out", gcn_args.out, "Model file")->required();
  tgcn->add_option("--log", gcn_args.log, "Per-iteration loss log (JSON lines)");
  add_count(tgcn, "--iterations", "gcn_iterations", "Training iterations");
  add_number(tgcn, "--lr", "gcn_lr", "Learning rate");

  lsg::cli::TrainArgs train_args;
  auto add_train = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--data", train_args.data, "Labeled dataset")->required();
    sub->add_option("--graph", train_args.graph, "Graph file");
    sub->add_option("--gcn", train_args.gcn, "Trained GCN file");
    sub->add_option("-o,--out", train_args.out, "Primary model file")->required();
    sub->add_option("--eval", train_args.eval, "Dataset evaluated after every epoch");
    sub->add_option("--metrics", train_args.metrics, "Per-epoch metrics (JSON lines)");
    add_number(sub, "--lambda", "lambda", "Alignment loss weight");
    add_number(sub, "--mu", "mu", "Regularization loss weight");
    add_count(sub, "--epochs", "epochs", "Training epochs");
    add_count(sub, "--batch-size", "batch_size", "Labeled samples per batch");
    add_number(sub, "--lr", "lr", "Learning rate");
    return sub;
  };
  auto* train = add_train("train", "Stage-2 supervised training");
  train->add_flag("--baseline", train_args.baseline, "Plain fine-tuning, no graph or GCN");
  auto* train_ssl = add_train("train-ssl", "Stage-2 semi-supervised training");
  train_ssl->add_option("--unlabeled", train_args.unlabeled, "Dataset whose labels are ignored")
      ->required();

  auto* eval = app.add_subcommand("eval", "Accuracy of a primary model on a dataset");
  lsg::cli::EvalArgs eval_args;
  eval->add_option("--model", eval_args.model, "Primary model file")->required();
  eval->add_option("--data", eval_args.data, "Dataset")->required();
  eval->add_option("--predictions", eval_args.predictions, "Write one predicted class per line");

  auto* diag = app.add_subcommand("diagnose", "Cluster quality before and after the GCN");
  lsg::cli::DiagnoseArgs diag_args;
  diag->add_option("--graph", diag_args.graph, "Graph file")->required();
  diag->add_option("--gcn", diag_args.gcn, "Trained GCN file")->required();

  auto* sweep = app.add_subcommand("tau-sweep", "Full pipeline over a list of edge ratios");
  lsg::cli::TauSweepArgs sweep_args;
  std::vector<double> rho_list;
  sweep->add_option("--embeddings", sweep_args.embeddings, "Embedding file")->required();
  sweep->add_option("--data", sweep_args.data, "Labeled dataset")->required();
  sweep->add_option("--eval", sweep_args.eval, "Evaluation dataset (default: training data)");
  sweep->add_option("--rho-list", rho_list, "Edge ratios")->delimiter(',');
  sweep->add_option("-o,--out", sweep_args.out, "CSV output (default: stdout)");

  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of every loss");
  lsg::cli::GradCheckArgs grad_args;
  grad->add_option("--corrupt", grad_args.corrupt, "Deliberately break the named gradient")
      ->group("");

  for (CLI::App* sub : app.get_subcommands({})) flags.attach(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what(), 2);
  }

  try {
    RunConfig cfg;
    if (!flags.config_path.empty()) cfg = lsg::cli::load_config(flags.config_path);
    for (const std::string& o : flags.overrides) lsg::cli::apply_override(cfg, o);
    for (const KeyedFlag& k : keyed) {
      if (k.number) cfg.set(k.key, *k.number);
      if (k.count) cfg.set(k.key, *k.count);
    }
    if (flags.seed) cfg.seed = *flags.seed;
    if (!rho_list.empty()) cfg.rho_list = rho_list;
    cfg.validate();

    if (synth->parsed()) {
      std::cout << lsg::cli::cmd_synth_data(cfg, synth_args).dump() << "\n";
    } else if (build->parsed()) {
      build_args.tau = fixed_tau;
      std::cout << lsg::cli::cmd_build_graph(cfg, build_args).dump() << "\n";
    } else if (tgcn->parsed()) {
      std::cout << lsg::cli::cmd_train_gcn(cfg, gcn_args).dump() << "\n";
    } else if (train->parsed()) {
      std::cout << lsg::cli::cmd_train(cfg, train_args, false).dump() << "\n";
    } else if (train_ssl->parsed()) {
      std::cout << lsg::cli::cmd_train(cfg, train_args, true).dump() << "\n";
    } else if (eval->parsed()) {
      std::cout << lsg::cli::cmd_eval(eval_args).dump() << "\n";
    } else if (diag->parsed()) {
      std::cout << lsg::cli::cmd_diagnose(diag_args).dump() << "\n";
    } else if (sweep->parsed()) {
      const std::string csv = lsg::cli::cmd_tau_sweep(cfg, sweep_args);
      if (sweep_args.out.empty()) std::cout << csv;
    } else if (grad->parsed()) {
      bool ok = true;
      for (const json& line : lsg::cli::cmd_grad_check(cfg, grad_args, ok))
        std::cout << line.dump() << "\n";
      std::cout.flush();
      if (!ok) return fail("grad_check_failed", "one or more gradient checks failed");
    }
  } catch (const lsg::Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io_error", e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what());
  }
  return 0;
}
