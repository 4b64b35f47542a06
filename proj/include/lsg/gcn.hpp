#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lsg/binary_io.hpp"
#include "lsg/error.hpp"
#include "lsg/graph.hpp"
#include "lsg/matrix.hpp"
#include "lsg/optimizer.hpp"
#include "lsg/random.hpp"
#include "lsg/sparse.hpp"

namespace lsg {

enum class Reduction { Mean, Sum };

/// Auxiliary graph network. The encoder is a stack of graph convolutions with
/// ReLU (d_t -> d_h -> ... -> d_t); the classifier maps d_t -> K with no
/// activation, either as a graph convolution (default) or a plain linear map.
struct GcnModel {
  std::vector<Matrix> encoder;
  Matrix classifier;
  bool graph_conv_classifier = true;

  std::size_t input_dim() const { return encoder.front().rows(); }
  std::size_t output_dim() const { return encoder.back().cols(); }
  std::size_t concepts() const { return classifier.cols(); }

  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const Matrix& w : encoder) h = lsg::checksum(w, h);
    h = lsg::checksum(classifier, h);
    return h ^ static_cast<std::uint64_t>(graph_conv_classifier);
  }

  friend bool operator==(const GcnModel&, const GcnModel&) = default;
};

struct GcnTrainConfig {
  std::size_t iterations = 5000;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t hidden_dim = 0;  // 0 means d_t
  std::size_t encoder_layers = 2;
  bool graph_conv_classifier = true;
  Reduction reduction = Reduction::Mean;
  std::uint64_t seed = 7;
};

/// Glorot-uniform matrix, bound sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.data()) v = rng.uniform(-bound, bound);
  return w;
}

inline GcnModel init_gcn(std::size_t dim, std::size_t concepts, const GcnTrainConfig& cfg) {
  if (cfg.encoder_layers == 0) throw ValueError("gcn: need at least one encoder layer");
  const std::size_t hidden = cfg.hidden_dim == 0 ? dim : cfg.hidden_dim;
  Rng rng = stream(cfg.seed, "gcn.init");
  GcnModel m;
  m.graph_conv_classifier = cfg.graph_conv_classifier;
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    const std::size_t in = l == 0 ? dim : hidden;
    const std::size_t out = l + 1 == cfg.encoder_layers ? dim : hidden;
    m.encoder.push_back(glorot_uniform(in, out, rng));
  }
  m.classifier = glorot_uniform(dim, concepts, rng);
  return m;
}

/// Everything the backward pass needs from one forward pass.
struct GcnActivations {
  std::vector<Matrix> propagated;  // Â·H^(l-1) per encoder layer
  std::vector<Matrix> pre;         // Â·H^(l-1)·W^(l) per encoder layer
  std::vector<Matrix> post;        // H^(l) = ReLU(pre)
  Matrix classifier_input;         // Â·H^(L) (or H^(L) for a linear head)
  Matrix logits;

  const Matrix& encoder_output() const { return post.back(); }
};

/// Node features enter as rows of `x` (N x d_t) aligned with `adj`.
inline GcnActivations gcn_forward(const GcnModel& model, const SparseMatrix& adj,
                                  const Matrix& x) {
  if (x.rows() != adj.n) {
    throw ShapeError("gcn_forward: " + x.shape_string() + " features for " +
                     std::to_string(adj.n) + " nodes");
  }
  if (x.cols() != model.input_dim()) {
    throw ShapeError("gcn_forward: feature dimension " + std::to_string(x.cols()) +
                     " but model expects " + std::to_string(model.input_dim()));
  }
  GcnActivations act;
  const Matrix* h = &x;
  for (const Matrix& w : model.encoder) {
    act.propagated.push_back(spmm(adj, *h));
    act.pre.push_back(matmul(act.propagated.back(), w));
    act.post.push_back(relu(act.pre.back()));
    h = &act.post.back();
  }
  act.classifier_input = model.graph_conv_classifier ? spmm(adj, *h) : *h;
  act.logits = matmul(act.classifier_input, model.classifier);
  return act;
}

struct GcnGradients {
  std::vector<Matrix> encoder;
  Matrix classifier;
  Matrix input;  // dL/dX, empty unless requested
};

/// Reverse pass through a forward computed on `adj` (assumed symmetric, as
/// every normalized adjacency here is). `d_encoder_out` is an optional extra
/// upstream gradient on H^(L).
inline GcnGradients gcn_backward(const GcnModel& model, const SparseMatrix& adj,
                                 const GcnActivations& act, const Matrix& d_logits,
                                 const Matrix* d_encoder_out, bool want_weights,
                                 bool want_input) {
  GcnGradients g;
  if (want_weights) g.classifier = matmul_tn(act.classifier_input, d_logits);
  Matrix dh = matmul_nt(d_logits, model.classifier);
  if (model.graph_conv_classifier) dh = spmm(adj, dh);
  if (d_encoder_out != nullptr) axpy(1.0, *d_encoder_out, dh);

  const std::size_t layers = model.encoder.size();
  if (want_weights) g.encoder.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix dz = relu_backward(act.pre[l], dh);
    if (want_weights) g.encoder[l] = matmul_tn(act.propagated[l], dz);
    if (l == 0 && !want_input) break;
    dh = spmm(adj, matmul_nt(dz, model.encoder[l]));
  }
  if (want_input) g.input = std::move(dh);
  return g;
}

struct NodeLossResult {
  double loss = 0.0;
  GcnGradients grads;
  Matrix logits;
};

/// Node classification cross-entropy over every node of the base graph.
inline NodeLossResult node_loss_and_grads(const GcnModel& model, const SemanticGraph& graph,
                                          Reduction reduction = Reduction::Mean) {
  const GcnActivations act =
      gcn_forward(model, graph.normalized_adjacency(), graph.node_features());
  const auto labels = graph.labels();
  LossAndGrad ce = softmax_cross_entropy(act.logits, labels);
  if (reduction == Reduction::Sum) {
    const double n = static_cast<double>(labels.size());
    ce.loss *= n;
    ce.grad = n * ce.grad;
  }
  NodeLossResult out;
  out.loss = ce.loss;
  out.grads = gcn_backward(model, graph.normalized_adjacency(), act, ce.grad, nullptr, true, false);
  out.logits = act.logits;
  return out;
}

inline std::vector<std::size_t> gcn_predict_nodes(const GcnModel& model,
                                                  const SemanticGraph& graph) {
  return argmax_rows(
      gcn_forward(model, graph.normalized_adjacency(), graph.node_features()).logits);
}

inline double gcn_node_accuracy(const GcnModel& model, const SemanticGraph& graph) {
  const auto pred = gcn_predict_nodes(model, graph);
  const auto labels = graph.labels();
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == labels[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

struct GcnTrainResult {
  GcnModel model;
  std::vector<double> loss_history;  // loss before each update
  double node_accuracy = 0.0;
};

/// Full-graph gradient training on the node classification loss.
inline GcnTrainResult train_gcn(const SemanticGraph& graph, const GcnTrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ValueError("train_gcn: learning rate must be positive");
  GcnTrainResult res;
  res.model = init_gcn(graph.dim(), graph.concepts(), cfg);
  SgdMomentum opt(cfg.learning_rate, cfg.momentum);
  res.loss_history.reserve(cfg.iterations);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    NodeLossResult r = node_loss_and_grads(res.model, graph, cfg.reduction);
    if (!std::isfinite(r.loss)) {
      throw DivergenceError("train_gcn: loss became non-finite at iteration " +
                            std::to_string(it));
    }
    res.loss_history.push_back(r.loss);
    std::vector<Matrix*> params;
    std::vector<const Matrix*> grads;
    for (std::size_t l = 0; l < res.model.encoder.size(); ++l) {
      params.push_back(&res.model.encoder[l]);
      grads.push_back(&r.grads.encoder[l]);
    }
    params.push_back(&res.model.classifier);
    grads.push_back(&r.grads.classifier);
    opt.step(params, grads);
  }
  res.node_accuracy = gcn_node_accuracy(res.model, graph);
  return res;
}

/// Encoder output (input to the classifier) for every base-graph node.
inline Matrix refined_embeddings(const GcnModel& model, const SemanticGraph& graph) {
  return gcn_forward(model, graph.normalized_adjacency(), graph.node_features()).encoder_output();
}

/// (between dispersion / (k - 1)) / (within dispersion / (n - k)).
/// Returns +infinity when the within-cluster dispersion is zero.
inline double calinski_harabasz(const Matrix& points, std::span<const std::size_t> labels) {
  if (labels.size() != points.rows()) {
    throw ShapeError("calinski_harabasz: " + std::to_string(labels.size()) + " labels for " +
                     points.shape_string());
  }
  std::map<std::size_t, std::size_t> cluster_index;
  for (std::size_t l : labels) cluster_index.emplace(l, cluster_index.size());
  const std::size_t n = points.rows();
  const std::size_t k = cluster_index.size();
  if (k < 2) throw ValueError("calinski_harabasz: need at least 2 clusters");
  if (n <= k) throw ValueError("calinski_harabasz: need more points than clusters");

  const std::size_t d = points.cols();
  Matrix centroids(k, d);
  std::vector<double> counts(k, 0.0);
  std::vector<double> overall(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = cluster_index[labels[i]];
    counts[c] += 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      centroids(c, j) += points(i, j);
      overall[j] += points(i, j);
    }
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) centroids(c, j) /= counts[c];
  for (double& v : overall) v /= static_cast<double>(n);

  double between = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (centroids(c, j) - overall[j]) * (centroids(c, j) - overall[j]);
    between += counts[c] * s;
  }
  double within = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = cluster_index[labels[i]];
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = points(i, j) - centroids(c, j);
      within += diff * diff;
    }
  }
  if (within == 0.0) return std::numeric_limits<double>::infinity();
  return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
}

namespace detail {
inline constexpr std::uint32_t kGcnVersion = 1;
}

inline void save_gcn(const GcnModel& model, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("LSGM");
  w.u32(detail::kGcnVersion);
  w.u32(model.graph_conv_classifier ? 1u : 0u);
  w.u32(static_cast<std::uint32_t>(model.encoder.size() + 1));
  for (const Matrix& m : model.encoder) w.matrix(m);
  w.matrix(model.classifier);
  io::write_file(path, w.buffer());
}

inline GcnModel load_gcn(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  io::ByteReader r(bytes);
  r.expect_magic("LSGM");
  io::check_version(r.u32(), detail::kGcnVersion, "gcn model");
  GcnModel m;
  m.graph_conv_classifier = r.u32() != 0;
  const std::uint32_t layers = r.u32();
  if (layers < 2) throw FormatError("gcn model: need at least 2 layers, got " + std::to_string(layers));
  for (std::uint32_t l = 0; l + 1 < layers; ++l) m.encoder.push_back(r.matrix());
  m.classifier = r.matrix();
  r.expect_end();
  for (std::size_t l = 1; l < m.encoder.size(); ++l)
    if (m.encoder[l - 1].cols() != m.encoder[l].rows())
      throw FormatError("gcn model: layer " + std::to_string(l) + " dimension mismatch");
  if (m.output_dim() != m.input_dim() || m.classifier.rows() != m.output_dim())
    throw FormatError("gcn model: encoder must map d_t back to d_t");
  return m;
}

}  // namespace lsg
