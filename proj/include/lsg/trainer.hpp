#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsg/dataset.hpp"
#include "lsg/error.hpp"
#include "lsg/gcn.hpp"
#include "lsg/graph.hpp"
#include "lsg/matrix.hpp"
#include "lsg/optimizer.hpp"
#include "lsg/primary_model.hpp"
#include "lsg/random.hpp"

namespace lsg {

enum class Provenance : std::uint8_t { Labeled, PseudoLabeled };

/// Rows of one mini-batch. Every row carries where its label came from so the
/// empirical loss can refuse pseudo-labeled rows.
struct Batch {
  Matrix features;
  std::vector<std::size_t> labels;
  std::vector<Provenance> provenance;

  std::size_t size() const noexcept { return labels.size(); }

  static Batch labeled(Matrix features, std::vector<std::size_t> labels) {
    Batch b;
    b.features = std::move(features);
    b.provenance.assign(labels.size(), Provenance::Labeled);
    b.labels = std::move(labels);
    return b;
  }
};

inline Batch make_batch(const Matrix& features, std::span<const std::size_t> labels,
                        std::span<const std::size_t> rows, Provenance tag) {
  Batch b;
  b.features = gather_rows(features, rows);
  for (std::size_t r : rows) b.labels.push_back(labels[r]);
  b.provenance.assign(rows.size(), tag);
  return b;
}

struct PrimaryGradients {
  std::vector<DenseGrad> encoder;
  DenseGrad classifier;
  DenseGrad projector;

  static PrimaryGradients zeros_like(const PrimaryModel& m) {
    PrimaryGradients g;
    for (const DenseLayer& l : m.net.encoder)
      g.encoder.push_back({Matrix(l.in(), l.out()), Matrix(1, l.out())});
    g.classifier = {Matrix(m.net.classifier.in(), m.net.classifier.out()),
                    Matrix(1, m.net.classifier.out())};
    g.projector = {Matrix(m.projector.in(), m.projector.out()), Matrix(1, m.projector.out())};
    return g;
  }
};

/// Parameters in a fixed order: encoder (W, b)..., classifier (W, b), projector (W, b).
inline std::vector<Matrix*> parameters(PrimaryModel& m) {
  std::vector<Matrix*> p;
  for (DenseLayer& l : m.net.encoder) {
    p.push_back(&l.weight);
    p.push_back(&l.bias);
  }
  p.push_back(&m.net.classifier.weight);
  p.push_back(&m.net.classifier.bias);
  p.push_back(&m.projector.weight);
  p.push_back(&m.projector.bias);
  return p;
}

inline std::vector<const Matrix*> gradient_list(const PrimaryGradients& g) {
  std::vector<const Matrix*> out;
  for (const DenseGrad& l : g.encoder) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  out.push_back(&g.classifier.weight);
  out.push_back(&g.classifier.bias);
  out.push_back(&g.projector.weight);
  out.push_back(&g.projector.bias);
  return out;
}

/// Identity in the forward direction, zero in the backward direction.
inline Matrix stop_gradient(const Matrix& upstream) {
  return Matrix(upstream.rows(), upstream.cols());
}

/// Instrumentation for the auxiliary branch.
struct AuxProbe {
  /// Also backpropagate the regularizer's target branch into the GCN weights
  /// (costly; only for verification).
  bool inspect_target_branch = false;
  std::size_t calls = 0;
  double target_branch_max_abs = 0.0;      // gradient reaching the target after stop-gradient
  double target_branch_gcn_max_abs = 0.0;  // GCN weight gradient induced by the target branch
};

struct AuxLosses {
  double align = 0.0;
  double reg = 0.0;
  Matrix d_align;     // d align / d h, B x d_t
  Matrix d_reg;       // d reg / d h, B x d_t
  Matrix reg_target;  // normalized graph features used as the (stopped) target
};

/// Alignment and regularization losses for projected features `h` (one row
/// per sample) through one forward pass of the frozen GCN on the augmented
/// graph. Label-node features and GCN weights are constants; gradients are
/// returned only for `h`.
///
/// align = mean over samples of cross-entropy of the GCN logits at the data nodes
/// reg   = reg_sign * mean over samples of |sg(normalize(F_g(h_i))) - normalize(h_i)|^2
///
/// `frozen_target`, when given, replaces the computed target; finite-difference
/// checks use it to evaluate the stopped loss as a function of `h` alone.
inline AuxLosses aux_losses(const GcnModel& gcn, const SemanticGraph& graph, const Matrix& h,
                            std::span<const std::size_t> labels, double reg_sign = 1.0,
                            AuxProbe* probe = nullptr, const Matrix* frozen_target = nullptr) {
  if (h.cols() != gcn.input_dim()) {
    throw ShapeError("aux branch: projector outputs " + std::to_string(h.cols()) +
                     " dims but the graph network expects " + std::to_string(gcn.input_dim()));
  }
  AuxLosses out;
  const std::size_t b = labels.size();
  if (b == 0) {
    out.d_align = Matrix(0, h.cols());
    out.d_reg = Matrix(0, h.cols());
    return out;
  }
  const AugmentedBatchGraph aug = augment(graph, h, labels);
  const GcnActivations act = gcn_forward(gcn, aug.normalized, aug.features);
  const std::size_t t = graph.node_count();
  const double inv_b = 1.0 / static_cast<double>(b);

  const LossAndGrad ce = softmax_cross_entropy(slice_rows(act.logits, t, b), labels);
  out.align = ce.loss;
  Matrix d_logits(act.logits.rows(), act.logits.cols());
  std::copy(ce.grad.data().begin(), ce.grad.data().end(), d_logits.row(t).begin());
  const GcnGradients back = gcn_backward(gcn, aug.normalized, act, d_logits, nullptr, false, true);
  out.d_align = slice_rows(back.input, t, b);

  const Matrix graph_out = slice_rows(act.encoder_output(), t, b);
  out.reg_target = l2_normalize_rows(graph_out);
  if (frozen_target != nullptr) {
    detail::require_same_shape(*frozen_target, out.reg_target, "aux branch frozen target");
    out.reg_target = *frozen_target;
  }
  const Matrix& target = out.reg_target;
  const Matrix unit_h = l2_normalize_rows(h);
  const Matrix diff = unit_h - target;
  double sq = 0.0;
  for (double v : diff.data()) sq += v * v;
  out.reg = reg_sign * sq * inv_b;
  const Matrix d_unit_h = (2.0 * reg_sign * inv_b) * diff;
  out.d_reg = l2_normalize_rows_backward(h, d_unit_h);

  if (probe != nullptr) {
    ++probe->calls;
    const Matrix d_target = stop_gradient((-1.0) * d_unit_h);
    probe->target_branch_max_abs = std::max(probe->target_branch_max_abs, max_abs(d_target));
    if (probe->inspect_target_branch) {
      // Push whatever reached the target back through the GCN encoder.
      Matrix d_enc(act.encoder_output().rows(), act.encoder_output().cols());
      const Matrix d_graph_out = l2_normalize_rows_backward(graph_out, d_target);
      std::copy(d_graph_out.data().begin(), d_graph_out.data().end(), d_enc.row(t).begin());
      const Matrix zero_logits(act.logits.rows(), act.logits.cols());
      const GcnGradients tb = gcn_backward(gcn, aug.normalized, act, zero_logits, &d_enc, true, false);
      double m = max_abs(tb.classifier);
      for (const Matrix& w : tb.encoder) m = std::max(m, max_abs(w));
      probe->target_branch_gcn_max_abs = std::max(probe->target_branch_gcn_max_abs, m);
    }
  }
  return out;
}

/// Per-concept mean of the embedding columns, L2-normalized; K x d_t.
inline Matrix text_prototypes(const LabeledEmbeddings& emb) {
  Matrix p(emb.concepts(), emb.dim());
  for (std::size_t c = 0; c < emb.node_count(); ++c)
    for (std::size_t i = 0; i < emb.dim(); ++i) p(emb.label_of(c), i) += emb.matrix(i, c);
  return l2_normalize_rows(p);
}

/// Prototype-alignment baseline: mean over samples of 1 - cos(h_i, prototype_{y_i}).
inline LossAndGrad prototype_loss(const Matrix& h, std::span<const std::size_t> labels,
                                  const Matrix& prototypes) {
  if (h.rows() != labels.size()) throw ShapeError("prototype_loss: label count mismatch");
  if (h.cols() != prototypes.cols()) throw ShapeError("prototype_loss: dimension mismatch");
  LossAndGrad out{0.0, Matrix(h.rows(), h.cols())};
  if (h.rows() == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(h.rows());
  const Matrix unit = l2_normalize_rows(h);
  Matrix d_unit(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    if (labels[i] >= prototypes.rows()) throw IndexError("prototype_loss: label out of range");
    double dot = 0.0;
    for (std::size_t j = 0; j < h.cols(); ++j) {
      dot += unit(i, j) * prototypes(labels[i], j);
      d_unit(i, j) = -prototypes(labels[i], j) * inv_b;
    }
    out.loss += (1.0 - dot) * inv_b;
  }
  out.grad = l2_normalize_rows_backward(h, d_unit);
  return out;
}

struct LossWeights {
  double emp = 1.0;
  double align = 0.0;
  double reg = 0.0;
  double prototype = 0.0;
  double reg_sign = 1.0;
};

struct LossTerms {
  double emp = 0.0;
  double align = 0.0;
  double reg = 0.0;
  double prototype = 0.0;
  double total = 0.0;
};

struct StepResult {
  LossTerms loss;
  PrimaryGradients grads;
  Matrix reg_target;  // empty unless the auxiliary branch ran
};

/// Optional graph-side context for the auxiliary losses.
struct Guidance {
  const SemanticGraph* graph = nullptr;
  const GcnModel* gcn = nullptr;
  const Matrix* prototypes = nullptr;
  AuxProbe* probe = nullptr;
  const Matrix* frozen_reg_target = nullptr;
};

/// Losses and gradients for one step. The empirical loss uses `labeled`
/// only; the auxiliary losses use `labeled` followed by `pseudo` (if any).
inline StepResult compute_step(const PrimaryModel& model, const Batch& labeled, const Batch* pseudo,
                               const LossWeights& w, const Guidance& guide) {
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (labeled.provenance.at(i) != Provenance::Labeled) {
      throw ValueError("empirical loss: row " + std::to_string(i) + " is pseudo-labeled");
    }
  }
  const std::size_t nl = labeled.size();
  const std::size_t np = pseudo ? pseudo->size() : 0;
  if (nl + np == 0) throw ValueError("compute_step: empty batch");

  const EncoderTrace trace =
      encode(model.net, np == 0 ? labeled.features : vstack(labeled.features, pseudo->features));
  const Matrix& f = trace.features;

  StepResult res;
  res.grads = PrimaryGradients::zeros_like(model);
  Matrix df(f.rows(), f.cols());

  if (nl > 0) {
    const Matrix f_lab = np == 0 ? f : slice_rows(f, 0, nl);
    const Matrix logit = model.net.classifier.forward(f_lab);
    const LossAndGrad ce = softmax_cross_entropy(logit, labeled.labels);
    res.loss.emp = ce.loss;
    if (w.emp != 0.0) {
      const Matrix d_logit = w.emp == 1.0 ? ce.grad : w.emp * ce.grad;
      res.grads.classifier.weight = matmul_tn(f_lab, d_logit);
      res.grads.classifier.bias = column_sums(d_logit);
      const Matrix d_f = matmul_nt(d_logit, model.net.classifier.weight);
      std::copy(d_f.data().begin(), d_f.data().end(), df.data().begin());
    }
  }

  const bool want_aux = (w.align != 0.0 || w.reg != 0.0);
  const bool want_proto = w.prototype != 0.0;
  if (want_aux || want_proto) {
    std::vector<std::size_t> aux_labels = labeled.labels;
    if (np > 0) aux_labels.insert(aux_labels.end(), pseudo->labels.begin(), pseudo->labels.end());
    const Matrix h = model.projector.forward(f);
    Matrix dh(h.rows(), h.cols());
    if (want_aux) {
      if (guide.graph == nullptr || guide.gcn == nullptr)
        throw ValueError("compute_step: alignment/regularization need a graph and a GCN");
      const AuxLosses aux = aux_losses(*guide.gcn, *guide.graph, h, aux_labels, w.reg_sign,
                                        guide.probe, guide.frozen_reg_target);
      res.loss.align = aux.align;
      res.loss.reg = aux.reg;
      res.reg_target = aux.reg_target;
      if (w.align != 0.0) axpy(w.align, aux.d_align, dh);
      if (w.reg != 0.0) axpy(w.reg, aux.d_reg, dh);
    }
    if (want_proto) {
      if (guide.prototypes == nullptr) throw ValueError("compute_step: prototype loss needs prototypes");
      const LossAndGrad pl = prototype_loss(h, aux_labels, *guide.prototypes);
      res.loss.prototype = pl.loss;
      axpy(w.prototype, pl.grad, dh);
    }
    res.grads.projector.weight = matmul_tn(f, dh);
    res.grads.projector.bias = column_sums(dh);
    axpy(1.0, matmul_nt(dh, model.projector.weight), df);
  }

  res.grads.encoder = encoder_backward(model.net, trace, df);
  res.loss.total = w.emp * res.loss.emp + w.align * res.loss.align + w.reg * res.loss.reg +
                   w.prototype * res.loss.prototype;
  return res;
}

/// Mean cross-entropy of C(F(x)); gradients for encoder and classifier only.
inline StepResult emp_loss(const PrimaryModel& model, const Batch& batch) {
  if (batch.size() == 0) throw ValueError("emp_loss: empty batch");
  return compute_step(model, batch, nullptr, LossWeights{1.0, 0.0, 0.0, 0.0, 1.0}, {});
}

inline StepResult align_loss(const PrimaryModel& model, const SemanticGraph& graph,
                             const GcnModel& gcn, const Batch& batch) {
  return compute_step(model, batch, nullptr, LossWeights{0.0, 1.0, 0.0, 0.0, 1.0},
                      Guidance{&graph, &gcn, nullptr, nullptr});
}

inline StepResult reg_loss(const PrimaryModel& model, const SemanticGraph& graph,
                           const GcnModel& gcn, const Batch& batch, double reg_sign = 1.0,
                           AuxProbe* probe = nullptr) {
  return compute_step(model, batch, nullptr, LossWeights{0.0, 0.0, 1.0, 0.0, reg_sign},
                      Guidance{&graph, &gcn, nullptr, probe});
}

inline StepResult prototype_align_loss(const PrimaryModel& model, const LabeledEmbeddings& emb,
                                       const Batch& batch) {
  const Matrix protos = text_prototypes(emb);
  return compute_step(model, batch, nullptr, LossWeights{0.0, 0.0, 0.0, 1.0, 1.0},
                      Guidance{nullptr, nullptr, &protos, nullptr});
}

/// emp + lambda * align + mu * reg, sharing one augmented-graph forward.
inline StepResult total_loss(const PrimaryModel& model, const SemanticGraph& graph,
                             const GcnModel& gcn, const Batch& batch, double lambda, double mu,
                             double reg_sign = 1.0) {
  return compute_step(model, batch, nullptr, LossWeights{1.0, lambda, mu, 0.0, reg_sign},
                      Guidance{&graph, &gcn, nullptr, nullptr});
}

struct GuidedTrainConfig {
  double lambda = 1.0;
  double mu = 8.0;
  std::size_t batch_size = 24;
  std::size_t epochs = 40;
  double learning_rate = 1e-3;
  double head_lr_multiplier = 10.0;
  double momentum = 0.9;
  std::vector<std::size_t> encoder_dims = {64, 64};
  double reg_sign = 1.0;
  double prototype_weight = 0.0;
  std::size_t unlabeled_per_batch = 0;  // 0 means batch_size
  std::size_t warmup_epochs = 1;
  std::uint64_t seed = 7;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double emp_loss = 0.0;
  double align_loss = 0.0;
  double reg_loss = 0.0;
  double total = 0.0;
  double train_acc = 0.0;
  std::optional<double> eval_acc;
  double pseudo_label_churn = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

/// Counters for verifying where rows went during training.
struct TrainingProbe {
  AuxProbe aux;
  std::size_t steps = 0;
  std::size_t emp_rows_labeled = 0;
  std::size_t emp_rows_pseudo = 0;
  std::size_t aux_rows_pseudo = 0;
};

struct TrainResult {
  PrimaryModel model;
  std::vector<EpochMetrics> history;
};

struct PseudoLabelState {
  std::vector<std::size_t> labels;
  std::size_t refreshed_at_epoch = 0;
};

/// Hard argmax pseudo-labels from the current model.
inline PseudoLabelState assign_pseudo_labels(const InferenceNet& net, const Matrix& unlabeled,
                                             std::size_t epoch = 0) {
  PseudoLabelState s;
  s.refreshed_at_epoch = epoch;
  if (unlabeled.rows() > 0) s.labels = predict(net, unlabeled);
  return s;
}

inline double evaluate(const InferenceNet& net, const LabeledDataset& ds) {
  if (ds.size() == 0) return 0.0;
  return accuracy(predict(net, ds.features), ds.labels);
}

namespace detail {

inline std::vector<double> lr_scales(const PrimaryModel& m, double head_multiplier) {
  std::vector<double> s(2 * m.net.encoder.size(), 1.0);
  s.insert(s.end(), 4, head_multiplier);
  return s;
}

inline void check_guidance(const LabeledDataset& data, const SemanticGraph& graph,
                           const GcnModel& gcn) {
  if (gcn.input_dim() != graph.dim())
    throw ShapeError("GCN input dimension " + std::to_string(gcn.input_dim()) +
                     " does not match graph dimension " + std::to_string(graph.dim()));
  if (gcn.concepts() != graph.concepts())
    throw ShapeError("GCN predicts " + std::to_string(gcn.concepts()) + " classes, graph has " +
                     std::to_string(graph.concepts()));
  if (data.concepts != graph.concepts())
    throw ShapeError("dataset has " + std::to_string(data.concepts) + " classes, graph has " +
                     std::to_string(graph.concepts()));
}

/// Shared epoch loop for supervised and semi-supervised training. With an
/// empty unlabeled set this is exactly supervised training.
inline TrainResult run_guided(const LabeledDataset& data, const Matrix& unlabeled,
                              const SemanticGraph& graph, const GcnModel& gcn,
                              const GuidedTrainConfig& cfg, const LabeledDataset* eval,
                              TrainingProbe* probe) {
  data.validate();
  check_guidance(data, graph, gcn);
  if (data.size() == 0) throw ValueError("training set is empty");
  if (cfg.batch_size == 0) throw ValueError("batch size must be at least 1");
  if (cfg.lambda < 0.0 || cfg.mu < 0.0) throw ValueError("lambda and mu must be non-negative");
  if (unlabeled.rows() > 0 && unlabeled.cols() != data.dim())
    throw ShapeError("unlabeled features have dimension " + std::to_string(unlabeled.cols()) +
                     ", labeled " + std::to_string(data.dim()));

  TrainResult res;
  res.model = init_primary(data.dim(), cfg.encoder_dims, data.concepts, graph.dim(), cfg.seed);
  SgdMomentum opt(cfg.learning_rate, cfg.momentum);
  const std::vector<double> scales = lr_scales(res.model, cfg.head_lr_multiplier);
  Rng shuffle_rng = stream(cfg.seed, "train.shuffle");
  Rng unlabeled_rng = stream(cfg.seed, "ssl.unlabeled_shuffle");
  const LossWeights weights{1.0, cfg.lambda, cfg.mu, cfg.prototype_weight, cfg.reg_sign};
  Matrix prototypes;
  if (cfg.prototype_weight != 0.0) prototypes = text_prototypes(graph.embeddings());
  const Guidance guide{&graph, &gcn, cfg.prototype_weight != 0.0 ? &prototypes : nullptr,
                       probe ? &probe->aux : nullptr};
  const std::size_t per_batch_unlabeled =
      cfg.unlabeled_per_batch == 0 ? cfg.batch_size : cfg.unlabeled_per_batch;

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::size_t> u_order(unlabeled.rows());
  for (std::size_t i = 0; i < u_order.size(); ++i) u_order[i] = i;
  std::size_t u_cursor = u_order.size();
  PseudoLabelState pseudo;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochMetrics em;
    em.epoch = epoch;
    const bool ssl_epoch = unlabeled.rows() > 0 && epoch > cfg.warmup_epochs;
    if (ssl_epoch) {
      PseudoLabelState next = assign_pseudo_labels(res.model.net, unlabeled, epoch);
      std::size_t changed = 0;
      for (std::size_t i = 0; i < next.labels.size(); ++i)
        changed += pseudo.labels.empty() || pseudo.labels[i] != next.labels[i];
      em.pseudo_label_churn = static_cast<double>(changed) / static_cast<double>(next.labels.size());
      pseudo = std::move(next);
    }

    shuffle_rng.shuffle(order);
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Batch lab = make_batch(data.features, data.labels, rows, Provenance::Labeled);

      std::optional<Batch> extra;
      if (ssl_epoch) {
        std::vector<std::size_t> urows;
        for (std::size_t k = 0; k < per_batch_unlabeled; ++k) {
          if (u_cursor == u_order.size()) {
            unlabeled_rng.shuffle(u_order);
            u_cursor = 0;
          }
          urows.push_back(u_order[u_cursor++]);
        }
        extra = make_batch(unlabeled, pseudo.labels, urows, Provenance::PseudoLabeled);
      }

      const StepResult step = compute_step(res.model, lab, extra ? &*extra : nullptr, weights, guide);
      if (!std::isfinite(step.loss.total)) {
        throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(batches));
      }
      if (probe != nullptr) {
        ++probe->steps;
        for (Provenance p : lab.provenance)
          (p == Provenance::Labeled ? probe->emp_rows_labeled : probe->emp_rows_pseudo) += 1;
        if (extra) probe->aux_rows_pseudo += extra->size();
      }
      const auto params = parameters(res.model);
      const auto grads = gradient_list(step.grads);
      opt.step(params, grads, scales);

      em.emp_loss += step.loss.emp;
      em.align_loss += step.loss.align;
      em.reg_loss += step.loss.reg;
      em.total += step.loss.total;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    em.emp_loss *= inv;
    em.align_loss *= inv;
    em.reg_loss *= inv;
    em.total *= inv;
    em.train_acc = evaluate(res.model.net, data);
    if (eval != nullptr) em.eval_acc = evaluate(res.model.net, *eval);
    res.history.push_back(em);
  }
  return res;
}

}  // namespace detail

/// Stage-2 training: emp + lambda * align + mu * reg per mini-batch, with the
/// GCN frozen (it is only ever read).
inline TrainResult train_supervised(const LabeledDataset& data, const SemanticGraph& graph,
                                    const GcnModel& gcn, const GuidedTrainConfig& cfg,
                                    const LabeledDataset* eval = nullptr,
                                    TrainingProbe* probe = nullptr) {
  return detail::run_guided(data, Matrix(0, data.dim()), graph, gcn, cfg, eval, probe);
}

/// Semi-supervised variant. After `warmup_epochs` labeled-only epochs, every
/// epoch refreshes argmax pseudo-labels for `unlabeled` and appends
/// `unlabeled_per_batch` pseudo-labeled rows to each batch's auxiliary branch.
/// Pseudo-labeled rows never reach the empirical loss.
inline TrainResult train_ssl(const LabeledDataset& data, const Matrix& unlabeled,
                             const SemanticGraph& graph, const GcnModel& gcn,
                             const GuidedTrainConfig& cfg, const LabeledDataset* eval = nullptr,
                             TrainingProbe* probe = nullptr) {
  return detail::run_guided(data, unlabeled, graph, gcn, cfg, eval, probe);
}

/// Plain fine-tuning on the empirical loss: no projector, no graph, no GCN.
/// Uses the same initialization streams, shuffles and learning rates as the
/// guided trainer.
inline TrainResult train_baseline(const LabeledDataset& data, const GuidedTrainConfig& cfg,
                                  const LabeledDataset* eval = nullptr) {
  data.validate();
  if (data.size() == 0) throw ValueError("training set is empty");
  if (cfg.batch_size == 0) throw ValueError("batch size must be at least 1");
  TrainResult res;
  res.model = init_primary(data.dim(), cfg.encoder_dims, data.concepts, 1, cfg.seed);
  InferenceNet& net = res.model.net;
  SgdMomentum opt(cfg.learning_rate, cfg.momentum);
  std::vector<double> scales(2 * net.encoder.size(), 1.0);
  scales.insert(scales.end(), 2, cfg.head_lr_multiplier);
  Rng shuffle_rng = stream(cfg.seed, "train.shuffle");

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochMetrics em;
    em.epoch = epoch;
    shuffle_rng.shuffle(order);
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Matrix x = gather_rows(data.features, rows);
      std::vector<std::size_t> y;
      for (std::size_t r : rows) y.push_back(data.labels[r]);

      const EncoderTrace trace = encode(net, x);
      const LossAndGrad ce = softmax_cross_entropy(net.classifier.forward(trace.features), y);
      if (!std::isfinite(ce.loss)) {
        throw DivergenceError("baseline loss became non-finite at epoch " + std::to_string(epoch));
      }
      Matrix gw = matmul_tn(trace.features, ce.grad);
      Matrix gb = column_sums(ce.grad);
      const std::vector<DenseGrad> genc =
          encoder_backward(net, trace, matmul_nt(ce.grad, net.classifier.weight));

      std::vector<Matrix*> params;
      std::vector<const Matrix*> grads;
      for (std::size_t l = 0; l < net.encoder.size(); ++l) {
        params.push_back(&net.encoder[l].weight);
        params.push_back(&net.encoder[l].bias);
        grads.push_back(&genc[l].weight);
        grads.push_back(&genc[l].bias);
      }
      params.push_back(&net.classifier.weight);
      params.push_back(&net.classifier.bias);
      grads.push_back(&gw);
      grads.push_back(&gb);
      opt.step(params, grads, scales);

      em.emp_loss += ce.loss;
      ++batches;
    }
    em.emp_loss *= 1.0 / static_cast<double>(batches);
    em.total = em.emp_loss;
    em.train_acc = evaluate(net, data);
    if (eval != nullptr) em.eval_acc = evaluate(net, *eval);
    res.history.push_back(em);
  }
  return res;
}

}  // namespace lsg
