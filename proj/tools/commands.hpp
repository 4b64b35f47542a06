#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsg/lsg.hpp"
#include "run_config.hpp"

namespace lsg::cli {

namespace fs = std::filesystem;

/// JSON has no infinities; non-finite values are emitted as strings.
inline json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline std::string csv_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path, text);
}

inline json graph_summary(const SemanticGraph& g, const GraphBuildReport& rep) {
  const std::size_t cross_pairs = rep.threshold.cross_pairs;
  json j;
  j["nodes"] = g.node_count();
  j["concepts"] = g.concepts();
  j["dim"] = g.dim();
  j["rho"] = number(g.rho());
  j["tau"] = number(g.tau());
  j["edges"] = g.edges().size();
  j["cross_label_edges"] = rep.cross_label_edges;
  j["cross_label_pairs"] = cross_pairs;
  j["cross_label_ratio"] =
      cross_pairs == 0 ? 0.0
                       : static_cast<double>(rep.cross_label_edges) / static_cast<double>(cross_pairs);
  j["warnings"] = rep.warnings;
  return j;
}

// ---------------------------------------------------------------------------

struct SynthDataArgs {
  fs::path out_dir;
  bool csv = false;
};

inline json cmd_synth_data(const RunConfig& cfg, const SynthDataArgs& a) {
  const SynthTask task = synth_task(cfg.synth_options());
  fs::create_directories(a.out_dir);
  const fs::path emb = a.out_dir / (a.csv ? "embeddings.csv" : "embeddings.lsge");
  save_embeddings(task.embeddings, emb, a.csv ? EmbeddingFormat::Csv : EmbeddingFormat::Binary);
  save_dataset(task.labeled, a.out_dir / "labeled.lsgd");
  save_dataset(task.unlabeled, a.out_dir / "unlabeled.lsgd");
  save_dataset(task.test, a.out_dir / "test.lsgd");
  json j;
  j["embeddings"] = emb.string();
  j["labeled"] = (a.out_dir / "labeled.lsgd").string();
  j["unlabeled"] = (a.out_dir / "unlabeled.lsgd").string();
  j["test"] = (a.out_dir / "test.lsgd").string();
  j["concepts"] = task.embeddings.concepts();
  j["prompts"] = task.embeddings.prompts_per_concept;
  j["dim"] = task.embeddings.dim();
  j["input_dim"] = task.labeled.dim();
  j["labeled_samples"] = task.labeled.size();
  j["unlabeled_samples"] = task.unlabeled.size();
  j["test_samples"] = task.test.size();
  return j;
}

struct BuildGraphArgs {
  fs::path embeddings;
  fs::path out;
  std::optional<double> tau;
};

inline json cmd_build_graph(const RunConfig& cfg, const BuildGraphArgs& a) {
  const LabeledEmbeddings emb = load_embeddings(a.embeddings);
  GraphBuildReport rep;
  const SemanticGraph g =
      a.tau ? build_graph_with_tau(emb, *a.tau, &rep) : build_graph(emb, cfg.rho, &rep);
  if (a.tau) {
    // Count cross-label pairs for the summary ratio.
    const auto labels = emb.labels();
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (std::size_t j = i + 1; j < labels.size(); ++j) pairs += labels[i] != labels[j];
    rep.threshold.cross_pairs = pairs;
  }
  save_graph(g, a.out);
  json j = graph_summary(g, rep);
  j["graph"] = a.out.string();
  return j;
}

struct TrainGcnArgs {
  fs::path graph;
  fs::path out;
  fs::path log;  // optional JSON-lines loss log
};

inline json cmd_train_gcn(const RunConfig& cfg, const TrainGcnArgs& a) {
  const SemanticGraph g = load_graph(a.graph);
  const GcnTrainResult r = train_gcn(g, cfg.gcn_config());
  save_gcn(r.model, a.out);
  if (!a.log.empty()) {
    std::string lines;
    for (std::size_t i = 0; i < r.loss_history.size(); ++i) {
      json row{{"iteration", i}, {"loss", r.loss_history[i]}};
      lines += row.dump() + "\n";
    }
    write_text(a.log, lines);
  }
  json j;
  j["model"] = a.out.string();
  j["iterations"] = r.loss_history.size();
  j["initial_loss"] = r.loss_history.empty() ? json(nullptr) : json(r.loss_history.front());
  j["final_loss"] = number(node_loss_and_grads(r.model, g, cfg.gcn_config().reduction).loss);
  j["node_accuracy"] = r.node_accuracy;
  j["checksum"] = r.model.checksum();
  return j;
}

struct TrainArgs {
  fs::path data;
  fs::path unlabeled;  // train-ssl only
  fs::path graph;
  fs::path gcn;
  fs::path out;
  fs::path eval;
  fs::path metrics;
  bool baseline = false;
};

inline json epoch_json(const EpochMetrics& m) {
  json j;
  j["epoch"] = m.epoch;
  j["emp_loss"] = number(m.emp_loss);
  j["align_loss"] = number(m.align_loss);
  j["reg_loss"] = number(m.reg_loss);
  j["total"] = number(m.total);
  j["train_acc"] = m.train_acc;
  if (m.eval_acc) j["eval_acc"] = *m.eval_acc;
  j["pseudo_label_churn"] = m.pseudo_label_churn;
  return j;
}

inline json cmd_train(const RunConfig& cfg, const TrainArgs& a, bool ssl) {
  const LabeledDataset data = load_dataset(a.data);
  std::optional<LabeledDataset> eval;
  if (!a.eval.empty()) eval = load_dataset(a.eval);
  const GuidedTrainConfig tc = cfg.train_config();

  TrainResult r;
  if (a.baseline) {
    if (ssl) throw ConfigError("--baseline is only available for train");
    r = train_baseline(data, tc, eval ? &*eval : nullptr);
  } else {
    if (a.graph.empty() || a.gcn.empty()) throw ConfigError("--graph and --gcn are required");
    const SemanticGraph g = load_graph(a.graph);
    const GcnModel gcn = load_gcn(a.gcn);
    if (ssl) {
      const LabeledDataset unl = load_dataset(a.unlabeled);
      r = train_ssl(data, unl.features, g, gcn, tc, eval ? &*eval : nullptr);
    } else {
      r = train_supervised(data, g, gcn, tc, eval ? &*eval : nullptr);
    }
  }
  save_primary(r.model, a.out);
  if (!a.metrics.empty()) {
    std::string lines;
    for (const EpochMetrics& m : r.history) lines += epoch_json(m).dump() + "\n";
    write_text(a.metrics, lines);
  }
  json j;
  j["model"] = a.out.string();
  j["epochs"] = r.history.size();
  if (!r.history.empty()) {
    j["final"] = epoch_json(r.history.back());
  }
  return j;
}

struct EvalArgs {
  fs::path model;
  fs::path data;
  fs::path predictions;
};

inline json cmd_eval(const EvalArgs& a) {
  const PrimaryModel m = load_primary(a.model);
  const LabeledDataset ds = load_dataset(a.data);
  if (ds.dim() != m.net.input_dim() && ds.size() > 0)
    throw ShapeError("dataset dimension " + std::to_string(ds.dim()) + " but model expects " +
                     std::to_string(m.net.input_dim()));
  const std::vector<std::size_t> pred = ds.size() > 0 ? predict(m.net, ds.features)
                                                      : std::vector<std::size_t>{};
  std::vector<std::size_t> correct(ds.concepts, 0), total(ds.concepts, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++total[ds.labels[i]];
    if (pred[i] == ds.labels[i]) {
      ++correct[ds.labels[i]];
      ++hits;
    }
  }
  if (!a.predictions.empty()) {
    std::string text;
    for (std::size_t p : pred) text += std::to_string(p) + "\n";
    write_text(a.predictions, text);
  }
  json per_class = json::array();
  for (std::size_t k = 0; k < ds.concepts; ++k)
    per_class.push_back(total[k] == 0 ? json(nullptr)
                                      : json(static_cast<double>(correct[k]) /
                                             static_cast<double>(total[k])));
  json j;
  j["samples"] = ds.size();
  j["correct"] = hits;
  j["accuracy"] = accuracy(pred, ds.labels);
  j["per_class_accuracy"] = per_class;
  return j;
}

struct DiagnoseArgs {
  fs::path graph;
  fs::path gcn;
};

inline json cmd_diagnose(const DiagnoseArgs& a) {
  const SemanticGraph g = load_graph(a.graph);
  const GcnModel gcn = load_gcn(a.gcn);
  if (gcn.input_dim() != g.dim() || gcn.concepts() != g.concepts())
    throw ShapeError("GCN does not match graph dimensions");
  const auto labels = g.labels();
  const double ch_orig = calinski_harabasz(g.node_features(), labels);
  const double ch_ref = calinski_harabasz(refined_embeddings(gcn, g), labels);
  const auto pred = gcn_predict_nodes(gcn, g);
  std::vector<double> per(g.concepts(), 0.0);
  const std::size_t m = g.embeddings().prompts_per_concept;
  for (std::size_t i = 0; i < pred.size(); ++i) per[labels[i]] += pred[i] == labels[i];
  for (double& v : per) v /= static_cast<double>(m);
  json j;
  j["ch_original"] = number(ch_orig);
  j["ch_refined"] = number(ch_ref);
  j["ch_ratio"] = number(ch_ref / ch_orig);
  j["node_accuracy"] = accuracy(pred, labels);
  j["per_concept_accuracy"] = per;
  return j;
}

struct TauSweepArgs {
  fs::path embeddings;
  fs::path data;
  fs::path eval;
  fs::path out;  // CSV; empty means only return it
};

struct SweepRow {
  double rho;
  double tau;
  double gcn_acc;
  double primary_acc;
};

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string text = "rho,tau,gcn_acc,primary_acc\n";
  for (const SweepRow& r : rows) {
    text += csv_number(r.rho) + "," + csv_number(r.tau) + "," + csv_number(r.gcn_acc) + "," +
            csv_number(r.primary_acc) + "\n";
  }
  return text;
}

/// One full pipeline per rho: graph, GCN, guided training, evaluation.
inline std::vector<SweepRow> run_tau_sweep(const RunConfig& cfg, const LabeledEmbeddings& emb,
                                           const LabeledDataset& data, const LabeledDataset& eval) {
  if (cfg.rho_list.empty()) throw ConfigError("rho_list is empty");
  std::vector<SweepRow> rows;
  for (double rho : cfg.rho_list) {
    const SemanticGraph g = build_graph(emb, rho);
    const GcnTrainResult gr = train_gcn(g, cfg.gcn_config());
    const TrainResult tr = train_supervised(data, g, gr.model, cfg.train_config());
    rows.push_back({rho, g.tau(), gr.node_accuracy, evaluate(tr.model.net, eval)});
  }
  return rows;
}

inline std::string cmd_tau_sweep(const RunConfig& cfg, const TauSweepArgs& a) {
  const LabeledEmbeddings emb = load_embeddings(a.embeddings);
  const LabeledDataset data = load_dataset(a.data);
  const LabeledDataset eval = a.eval.empty() ? data : load_dataset(a.eval);
  const std::string csv = sweep_csv(run_tau_sweep(cfg, emb, data, eval));
  if (!a.out.empty()) write_text(a.out, csv);
  return csv;
}

struct GradCheckArgs {
  std::string corrupt;
};

/// Returns one JSON line per check; `ok` is false if any check failed.
inline std::vector<json> cmd_grad_check(const RunConfig& cfg, const GradCheckArgs& a, bool& ok) {
  GradSuiteOptions opt;
  opt.corrupt = a.corrupt;
  opt.seed = cfg.seed;
  ok = true;
  std::vector<json> out;
  for (const GradCheckEntry& e : run_gradient_suite(opt)) {
    out.push_back({{"name", e.name}, {"max_rel_error", e.max_rel_error}, {"passed", e.passed}});
    ok = ok && e.passed;
  }
  return out;
}

}  // namespace lsg::cli
