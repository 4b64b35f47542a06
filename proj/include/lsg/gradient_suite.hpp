#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lsg/dataset.hpp"
#include "lsg/embeddings.hpp"
#include "lsg/gcn.hpp"
#include "lsg/grad_check.hpp"
#include "lsg/graph.hpp"
#include "lsg/primary_model.hpp"
#include "lsg/random.hpp"
#include "lsg/trainer.hpp"

namespace lsg {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradSuiteOptions {
  std::uint64_t seed = 11;
  std::size_t concepts = 5;
  std::size_t prompts = 4;    // |T| = 20
  std::size_t dim = 6;
  std::size_t batch = 6;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Test fixture: doubles the analytic gradient of the named check.
  std::string corrupt;
};

/// Finite-difference checks of every differentiable loss on a small random
/// problem: node loss over all GCN weights, and emp / align / reg / prototype /
/// total over the primary-model parameters and the projected features.
inline std::vector<GradCheckEntry> run_gradient_suite(const GradSuiteOptions& opt = {}) {
  SynthEmbeddingOptions eo;
  eo.concepts = opt.concepts;
  eo.prompts = opt.prompts;
  eo.dim = opt.dim;
  eo.separation = 2.0;
  eo.prompt_spread = 0.7;
  eo.noise = 0.3;
  eo.seed = opt.seed;
  const LabeledEmbeddings emb = synth_embeddings(eo);
  const SemanticGraph graph = build_graph(emb, 0.1);

  GcnTrainConfig gc;
  gc.seed = opt.seed;
  gc.hidden_dim = opt.dim + 2;
  const GcnModel gcn = init_gcn(graph.dim(), graph.concepts(), gc);

  const std::size_t input_dim = 5;
  const std::vector<std::size_t> enc_dims = {7, 6};
  const PrimaryModel model = init_primary(input_dim, enc_dims, graph.concepts(), graph.dim(), opt.seed);
  Rng rng = stream(opt.seed, "gradsuite.data");
  Matrix x(opt.batch, input_dim);
  for (double& v : x.data()) v = rng.normal();
  std::vector<std::size_t> y(opt.batch);
  // Repeated labels so the data-data block has off-diagonal edges.
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (i / 2) % graph.concepts();
  const Batch batch = Batch::labeled(x, y);
  Matrix h(opt.batch, graph.dim());
  for (double& v : h.data()) v = rng.normal();
  const Matrix protos = text_prototypes(emb);

  std::vector<GradCheckEntry> out;
  auto record = [&](const std::string& name, const std::function<double(const Matrix&)>& f,
                    const Matrix& at, Matrix analytic) {
    if (name == opt.corrupt) analytic = 2.0 * analytic;
    const double err = finite_difference_check(f, at, analytic, opt.step);
    const bool ok = err < opt.tolerance;
    for (auto& e : out) {
      if (e.name == name) {
        e.max_rel_error = std::max(e.max_rel_error, err);
        e.passed = e.passed && ok;
        return;
      }
    }
    out.push_back({name, err, ok});
  };

  {
    const NodeLossResult r = node_loss_and_grads(gcn, graph);
    for (std::size_t l = 0; l <= gcn.encoder.size(); ++l) {
      auto f = [&, l](const Matrix& w) {
        GcnModel m = gcn;
        (l < m.encoder.size() ? m.encoder[l] : m.classifier) = w;
        return node_loss_and_grads(m, graph).loss;
      };
      const Matrix& at = l < gcn.encoder.size() ? gcn.encoder[l] : gcn.classifier;
      const Matrix& g = l < gcn.encoder.size() ? r.grads.encoder[l] : r.grads.classifier;
      record("node_loss", f, at, g);
    }
  }

  {
    const AuxLosses a = aux_losses(gcn, graph, h, y);
    record("align_loss_features",
           [&](const Matrix& hh) { return aux_losses(gcn, graph, hh, y).align; }, h, a.d_align);
    // The target is stopped: hold it at its value for the unperturbed input.
    record("reg_loss_features",
           [&](const Matrix& hh) {
             return aux_losses(gcn, graph, hh, y, 1.0, nullptr, &a.reg_target).reg;
           },
           h, a.d_reg);
    const LossAndGrad p = prototype_loss(h, y, protos);
    record("prototype_loss_features",
           [&](const Matrix& hh) { return prototype_loss(hh, y, protos).loss; }, h, p.grad);
  }

  struct ModelLoss {
    std::string name;
    LossWeights weights;
  };
  const std::vector<ModelLoss> model_losses = {
      {"emp_loss", {1.0, 0.0, 0.0, 0.0, 1.0}},
      {"align_loss", {0.0, 1.0, 0.0, 0.0, 1.0}},
      {"reg_loss", {0.0, 0.0, 1.0, 0.0, 1.0}},
      {"prototype_loss", {0.0, 0.0, 0.0, 1.0, 1.0}},
      {"total_loss", {1.0, 1.0, 8.0, 0.0, 1.0}},
  };
  for (const ModelLoss& ml : model_losses) {
    const StepResult base =
        compute_step(model, batch, nullptr, ml.weights, Guidance{&graph, &gcn, &protos, nullptr});
    const Guidance guide{&graph, &gcn, &protos, nullptr,
                         base.reg_target.empty() ? nullptr : &base.reg_target};
    const auto grads = gradient_list(base.grads);
    PrimaryModel probe = model;
    const auto params = parameters(probe);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto f = [&, k](const Matrix& w) {
        PrimaryModel m = model;
        *parameters(m)[k] = w;
        return compute_step(m, batch, nullptr, ml.weights, guide).loss.total;
      };
      record(ml.name, f, *params[k], *grads[k]);
    }
  }
  return out;
}

}  // namespace lsg
