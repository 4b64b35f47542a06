// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.
// Usage: lsg_acceptance <path-to-lsg-cli> <work-dir>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "lsg/lsg.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lsg;

namespace {

std::string g_cli;
int g_failures = 0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " [" << id << "] " << detail << std::endl;
  if (!ok) ++g_failures;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

/// Runs the CLI; returns stdout parsed as JSON when `parse` is set. Throws on
/// a nonzero exit so a broken pipeline fails loudly.
json cli(const fs::path& dir, const std::string& args, bool parse = true) {
  const fs::path out = dir / "last_stdout.txt";
  const fs::path err = dir / "last_stderr.txt";
  const std::string cmd = q(g_cli) + " " + args + " > " + q(out) + " 2> " + q(err);
  if (std::system(cmd.c_str()) != 0) throw std::runtime_error("cli failed: " + args + "\n" + slurp(err));
  return parse ? json::parse(slurp(out)) : json();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(x);
  return s;
}

void criterion_adjacency() {
  const auto t0 = Clock::now();
  Rng rng = stream(2024, "acceptance.adjacency");
  std::size_t mismatches = 0;
  std::size_t cases = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng.below(9);
    const std::size_t m = 1 + rng.below(5);
    const std::size_t d = 2 + rng.below(15);
    const LabeledEmbeddings e = testing::random_embeddings(k, m, d, rng);
    for (double rho : {0.0, 0.05, 0.3, 1.0}) {
      ++cases;
      const std::vector<std::size_t> y = e.labels();
      const Matrix s = cosine_similarity(e);
      const ThresholdSelection sel = select_threshold(s, y, rho);
      if (testing::edge_map(build_adjacency(s, y, sel.tau)) != testing::brute_force_adjacency(e, rho))
        ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  report(1, mismatches == 0 && secs < 10.0,
         "adjacency oracle: " + std::to_string(cases - mismatches) + "/" + std::to_string(cases) +
             " cases identical in " + fmt(secs) + " s");
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  bool ok = true;
  double worst = 0.0;
  std::string failed;
  for (const GradCheckEntry& e : run_gradient_suite()) {
    ok = ok && e.passed;
    worst = std::max(worst, e.max_rel_error);
    if (!e.passed) failed += " " + e.name;
  }
  const double secs = seconds_since(t0);
  report(2, ok && secs < 60.0,
         "gradient suite: max relative error " + std::to_string(worst) + (failed.empty() ? "" : ", failed:" + failed) +
             " in " + fmt(secs) + " s");
}

/// Everything that goes through the CLI, repeated for the determinism check.
struct PipelineRun {
  fs::path dir;
  json gcn_summary;
  json diagnose;
  double gcn_seconds = 0.0;
  std::vector<double> lsg_acc, base_acc, ssl_acc;
  double supervised_seconds = 0.0;
  double ssl_seconds = 0.0;
  bool zero_weight_identical = false;
  std::vector<std::vector<std::string>> sweep;
  double sweep_seconds = 0.0;
};

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

PipelineRun run_pipeline(const fs::path& dir) {
  PipelineRun r;
  r.dir = dir;
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path data = dir / "data";
  cli(dir, "synth-data --seed 7 -o " + q(data));
  cli(dir, "build-graph " + q(data / "embeddings.lsge") + " -o " + q(dir / "graph.lsgg"));

  auto t0 = Clock::now();
  r.gcn_summary = cli(dir, "train-gcn " + q(dir / "graph.lsgg") + " -o " + q(dir / "gcn.lsgm") + " --log " +
                               q(dir / "gcn_log.jsonl"));
  r.gcn_seconds = seconds_since(t0);
  r.diagnose = cli(dir, "diagnose --graph " + q(dir / "graph.lsgg") + " --gcn " + q(dir / "gcn.lsgm"));

  const std::string guided = " --graph " + q(dir / "graph.lsgg") + " --gcn " + q(dir / "gcn.lsgm");
  const std::string io = " --data " + q(data / "labeled.lsgd") + " --eval " + q(data / "test.lsgd");
  auto accuracy = [&](const fs::path& model) {
    return cli(dir, "eval --model " + q(model) + " --data " + q(data / "test.lsgd"))["accuracy"].get<double>();
  };

  t0 = Clock::now();
  for (int seed = 1; seed <= 5; ++seed) {
    const std::string s = std::to_string(seed);
    cli(dir, "train --seed " + s + guided + io + " -o " + q(dir / ("lsg_" + s + ".lsgp")) + " --metrics " +
                 q(dir / ("lsg_" + s + ".jsonl")));
    cli(dir, "train --baseline --seed " + s + io + " -o " + q(dir / ("base_" + s + ".lsgp")) + " --metrics " +
                 q(dir / ("base_" + s + ".jsonl")));
    r.lsg_acc.push_back(accuracy(dir / ("lsg_" + s + ".lsgp")));
    r.base_acc.push_back(accuracy(dir / ("base_" + s + ".lsgp")));
  }
  cli(dir, "train --seed 1 --lambda 0 --mu 0" + guided + io + " -o " + q(dir / "zero_1.lsgp") + " --metrics " +
               q(dir / "zero_1.jsonl"));
  // The baseline has no graph, so its (never trained) projector is sized
  // differently; everything that trains must match bit for bit.
  r.zero_weight_identical = load_primary(dir / "zero_1.lsgp").net == load_primary(dir / "base_1.lsgp").net &&
                            slurp(dir / "zero_1.jsonl") == slurp(dir / "base_1.jsonl");
  r.supervised_seconds = seconds_since(t0);

  t0 = Clock::now();
  for (int seed = 1; seed <= 5; ++seed) {
    const std::string s = std::to_string(seed);
    cli(dir, "train-ssl --seed " + s + guided + io + " --unlabeled " + q(data / "unlabeled.lsgd") + " -o " +
                 q(dir / ("ssl_" + s + ".lsgp")) + " --metrics " + q(dir / ("ssl_" + s + ".jsonl")));
    r.ssl_acc.push_back(accuracy(dir / ("ssl_" + s + ".lsgp")));
  }
  r.ssl_seconds = seconds_since(t0);

  t0 = Clock::now();
  cli(dir, "tau-sweep --seed 7 --embeddings " + q(data / "embeddings.lsge") + io + " --rho-list 0,0.001,0.003,0.01,0.1 -o " +
               q(dir / "sweep.csv"), false);
  r.sweep_seconds = seconds_since(t0);
  r.sweep = read_csv(slurp(dir / "sweep.csv"));
  return r;
}

void criterion_freezing(const PipelineRun& run) {
  const SemanticGraph g = load_graph(run.dir / "graph.lsgg");
  const GcnModel gcn = load_gcn(run.dir / "gcn.lsgm");
  const LabeledDataset data = load_dataset(run.dir / "data" / "labeled.lsgd");
  const std::string file_before = slurp(run.dir / "gcn.lsgm");
  const std::uint64_t before = gcn.checksum();
  GuidedTrainConfig cfg;
  cfg.epochs = 5;
  TrainingProbe probe;
  probe.aux.inspect_target_branch = true;
  train_supervised(data, g, gcn, cfg, nullptr, &probe);
  const bool ok = gcn.checksum() == before && slurp(run.dir / "gcn.lsgm") == file_before && probe.steps > 0 &&
                  probe.aux.calls == probe.steps && probe.aux.target_branch_max_abs == 0.0 &&
                  probe.aux.target_branch_gcn_max_abs == 0.0;
  report(5, ok,
         "frozen GCN: checksum unchanged over " + std::to_string(probe.steps) + " steps, target-branch gradient max " +
             std::to_string(probe.aux.target_branch_max_abs) + " (GCN weights " +
             std::to_string(probe.aux.target_branch_gcn_max_abs) + ")");
}

void criterion_ssl(const PipelineRun& run) {
  const SemanticGraph g = load_graph(run.dir / "graph.lsgg");
  const GcnModel gcn = load_gcn(run.dir / "gcn.lsgm");
  const LabeledDataset data = load_dataset(run.dir / "data" / "labeled.lsgd");
  const LabeledDataset unl = load_dataset(run.dir / "data" / "unlabeled.lsgd");
  GuidedTrainConfig cfg;
  cfg.seed = 1;
  TrainingProbe probe;
  train_ssl(data, unl.features, g, gcn, cfg, nullptr, &probe);
  const double lsg = median(run.lsg_acc);
  const double ssl = median(run.ssl_acc);
  const bool ok = ssl >= lsg && probe.emp_rows_pseudo == 0 && probe.aux_rows_pseudo > 0 &&
                  run.ssl_seconds < 480.0;
  report(7, ok,
         "SSL median " + fmt(ssl) + " >= LSG median " + fmt(lsg) + " [" + join(run.ssl_acc) + "]; pseudo rows in emp " +
             std::to_string(probe.emp_rows_pseudo) + ", in aux " + std::to_string(probe.aux_rows_pseudo) + "; " +
             fmt(run.ssl_seconds) + " s");
}

void criterion_graph_free_inference(const PipelineRun& run) {
  const fs::path test = run.dir / "data" / "test.lsgd";
  const fs::path model = run.dir / "lsg_1.lsgp";
  const json before =
      cli(run.dir, "eval --model " + q(model) + " --data " + q(test) + " --predictions " + q(run.dir / "pred_before.txt"));
  fs::remove(run.dir / "graph.lsgg");
  fs::remove(run.dir / "gcn.lsgm");
  const json after =
      cli(run.dir, "eval --model " + q(model) + " --data " + q(test) + " --predictions " + q(run.dir / "pred_after.txt"));
  const std::string pb = slurp(run.dir / "pred_before.txt");
  const bool ok = !pb.empty() && pb == slurp(run.dir / "pred_after.txt") && before["accuracy"] == after["accuracy"] &&
                  !fs::exists(run.dir / "gcn.lsgm");
  report(8, ok, "predictions identical after deleting graph and GCN files (" +
                    std::to_string(before["samples"].get<std::size_t>()) + " samples)");
}

void criterion_sweep(const PipelineRun& run) {
  // header + one row per ratio: rho,tau,gcn_acc,primary_acc
  bool ok = run.sweep.size() == 6 && run.sweep_seconds < 600.0;
  double first = 0.0;
  double last = 0.0;
  if (ok) {
    first = std::stod(run.sweep[1][2]);
    last = std::stod(run.sweep[5][2]);
    ok = std::stod(run.sweep[1][0]) == 0.0 && std::stod(run.sweep[5][0]) == 0.1 && first >= last;
  }
  std::string accs;
  for (std::size_t i = 1; i < run.sweep.size(); ++i) accs += (i > 1 ? " " : "") + run.sweep[i][2];
  report(9, ok, "tau sweep GCN accuracy at rho=0 " + fmt(first) + " >= at rho=0.1 " + fmt(last) + " [" + accs + "]; " +
                    fmt(run.sweep_seconds) + " s");
}

/// Compared before criterion 8 deletes anything; reported afterwards.
std::pair<bool, std::string> compare_runs(const PipelineRun& a, const PipelineRun& b) {
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::directory_iterator(a.dir)) {
    const std::string ext = entry.path().extension().string();
    if (ext != ".jsonl" && ext != ".csv" && ext != ".lsgp" && ext != ".lsgm" && ext != ".lsgg") continue;
    ++compared;
    const fs::path other = b.dir / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) differing.push_back(entry.path().filename().string());
  }
  std::string detail = std::to_string(compared - differing.size()) + "/" + std::to_string(compared) +
                       " metrics and model files identical across two runs";
  for (const std::string& d : differing) detail += " " + d;
  return {compared > 0 && differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: lsg_acceptance <lsg-cli> <work-dir>\n";
    return 2;
  }
  g_cli = argv[1];
  const fs::path work = argv[2];

  try {
    criterion_adjacency();
    criterion_gradients();

    const PipelineRun run = run_pipeline(work / "run1");
    const double acc = run.gcn_summary["node_accuracy"].get<double>();
    report(3, acc == 1.0 && run.gcn_seconds < 120.0,
           "canonical GCN node accuracy " + fmt(acc) + " after " +
               std::to_string(run.gcn_summary["iterations"].get<std::size_t>()) + " iterations in " +
               fmt(run.gcn_seconds) + " s");
    const double ratio = run.diagnose["ch_ratio"].get<double>();
    report(4, ratio > 2.0,
           "Calinski-Harabasz refined/original " + fmt(ratio) + " (" +
               fmt(run.diagnose["ch_refined"].get<double>()) + " / " +
               fmt(run.diagnose["ch_original"].get<double>()) + ")");
    criterion_freezing(run);
    const double lsg = median(run.lsg_acc);
    const double base = median(run.base_acc);
    report(6, lsg >= base && run.zero_weight_identical && run.supervised_seconds < 300.0,
           "LSG median " + fmt(lsg) + " >= baseline median " + fmt(base) + " [" + join(run.lsg_acc) + " | " +
               join(run.base_acc) + "]; zero-weight run bit-identical to baseline: " +
               (run.zero_weight_identical ? "yes" : "no") + "; " + fmt(run.supervised_seconds) + " s");
    criterion_ssl(run);

    const PipelineRun again = run_pipeline(work / "run2");
    const auto [same, detail] = compare_runs(run, again);
    criterion_graph_free_inference(run);
    criterion_sweep(run);
    report(10, same, detail);
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " criteria failed")
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
