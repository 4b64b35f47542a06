#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lsg/binary_io.hpp"
#include "lsg/embeddings.hpp"
#include "lsg/error.hpp"
#include "lsg/matrix.hpp"
#include "lsg/sparse.hpp"

namespace lsg {

/// Upper-triangular (i <= j) weighted edge.
struct Edge {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Pairwise cosine similarity of embedding columns, |T| x |T|. The diagonal
/// is exactly 1 and entries are clamped to [-1, 1] to absorb rounding.
inline Matrix cosine_similarity(const LabeledEmbeddings& emb) {
  for (std::size_t j = 0; j < emb.node_count(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < emb.dim(); ++i) s += emb.matrix(i, j) * emb.matrix(i, j);
    if (s == 0.0) throw ValueError("cosine_similarity: zero-norm column " + std::to_string(j));
  }
  const Matrix unit = transpose(l2_normalize_columns(emb.matrix));
  Matrix s = matmul_nt(unit, unit);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = i + 1; j < s.cols(); ++j) {
      const double v = std::clamp(s(i, j), -1.0, 1.0);
      s(i, j) = v;
      s(j, i) = v;
    }
    s(i, i) = 1.0;
  }
  return s;
}

struct ThresholdSelection {
  double tau = std::numeric_limits<double>::infinity();
  std::size_t cross_pairs = 0;     // |C|, unordered cross-label pairs
  std::size_t target_edges = 0;    // ceil(rho * |C|)
  std::size_t realized_edges = 0;  // pairs with S >= tau (ties included)
};

namespace detail {

/// ceil(rho * n) that does not round 228.00000000000003 up to 229.
inline std::size_t target_count(double rho, std::size_t n) {
  const double x = rho * static_cast<double>(n);
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, x)) return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::ceil(x));
}

inline void require_square_labels(const Matrix& s, std::span<const std::size_t> labels,
                                  const char* op) {
  if (s.rows() != s.cols() || s.rows() != labels.size()) {
    throw ShapeError(std::string(op) + ": similarity " + s.shape_string() + " with " +
                     std::to_string(labels.size()) + " labels");
  }
}

}  // namespace detail

/// Chooses tau so that the top ceil(rho * |C|) cross-label similarities pass
/// S >= tau. rho = 0 yields +infinity (no cross-label edges).
inline ThresholdSelection select_threshold(const Matrix& s, std::span<const std::size_t> labels,
                                           double rho) {
  detail::require_square_labels(s, labels, "select_threshold");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ValueError("select_threshold: rho must be in [0, 1]");
  std::vector<double> cross;
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = i + 1; j < s.cols(); ++j)
      if (labels[i] != labels[j]) cross.push_back(s(i, j));
  if (cross.empty()) {
    throw ValueError("select_threshold: no cross-label pairs (only one concept)");
  }
  ThresholdSelection sel;
  sel.cross_pairs = cross.size();
  sel.target_edges = detail::target_count(rho, cross.size());
  if (sel.target_edges == 0) return sel;
  std::sort(cross.begin(), cross.end(), std::greater<>());
  sel.tau = cross[sel.target_edges - 1];
  sel.realized_edges = static_cast<std::size_t>(
      std::count_if(cross.begin(), cross.end(), [&](double v) { return v >= sel.tau; }));
  return sel;
}

/// Weighted adjacency:
///   same label       -> max(S_ij, 0)
///   different label  -> S_ij if S_ij >= tau
///   otherwise        -> absent
inline std::vector<Edge> build_adjacency(const Matrix& s, std::span<const std::size_t> labels,
                                         double tau) {
  detail::require_square_labels(s, labels, "build_adjacency");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = i; j < s.cols(); ++j) {
      const double v = s(i, j);
      double w = 0.0;
      if (labels[i] == labels[j]) {
        w = std::max(v, 0.0);
      } else if (v >= tau) {
        w = v;
      }
      if (w != 0.0) {
        edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), w});
      }
    }
  }
  return edges;
}

/// Symmetric CSR expansion of an upper-triangular edge list.
inline SparseMatrix expand_edges(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  for (const Edge& e : edges) {
    rows[e.i].emplace_back(e.j, e.weight);
    if (e.i != e.j) rows[e.j].emplace_back(e.i, e.weight);
  }
  SparseMatrix a;
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    for (auto [c, w] : r) a.push(c, w);
    a.end_row();
  }
  return a;
}

/// The language semantic graph: concept-prompt nodes, weighted symmetric
/// adjacency, and the threshold that produced it. Immutable once built.
class SemanticGraph {
 public:
  SemanticGraph() = default;

  SemanticGraph(LabeledEmbeddings embeddings, std::vector<Edge> edges, double tau, double rho)
      : embeddings_(std::move(embeddings)), edges_(std::move(edges)), tau_(tau), rho_(rho) {
    validate();
    adjacency_ = expand_edges(embeddings_.node_count(), edges_);
    normalized_ = normalize_adjacency(adjacency_);
    features_ = embeddings_.node_features();
  }

  const LabeledEmbeddings& embeddings() const noexcept { return embeddings_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  double tau() const noexcept { return tau_; }
  double rho() const noexcept { return rho_; }
  std::size_t node_count() const noexcept { return embeddings_.node_count(); }
  std::size_t concepts() const noexcept { return embeddings_.concepts(); }
  std::size_t dim() const noexcept { return embeddings_.dim(); }
  std::vector<std::size_t> labels() const { return embeddings_.labels(); }

  const SparseMatrix& adjacency() const noexcept { return adjacency_; }
  const SparseMatrix& normalized_adjacency() const noexcept { return normalized_; }
  /// |T| x d_t, nodes as rows.
  const Matrix& node_features() const noexcept { return features_; }

  std::size_t cross_label_edges() const {
    std::size_t c = 0;
    for (const Edge& e : edges_)
      if (embeddings_.label_of(e.i) != embeddings_.label_of(e.j)) ++c;
    return c;
  }

 private:
  void validate() const {
    const std::size_t n = embeddings_.node_count();
    if (n == 0) throw FormatError("semantic graph: no nodes");
    if (edges_.empty()) throw FormatError("semantic graph: empty edge list");
    std::vector<bool> has_self(n, false);
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      const Edge& e = edges_[k];
      if (e.i > e.j || e.j >= n) {
        throw FormatError("semantic graph: bad edge (" + std::to_string(e.i) + ", " +
                          std::to_string(e.j) + ")");
      }
      if (k > 0) {
        const Edge& p = edges_[k - 1];
        if (p.i > e.i || (p.i == e.i && p.j >= e.j))
          throw FormatError("semantic graph: edges not in canonical order at " +
                            std::to_string(k));
      }
      if (!std::isfinite(e.weight)) throw FormatError("semantic graph: non-finite weight");
      if (e.i == e.j) has_self[e.i] = true;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (!has_self[i]) throw FormatError("semantic graph: node " + std::to_string(i) +
                                          " has no self-edge");
  }

  LabeledEmbeddings embeddings_;
  std::vector<Edge> edges_;
  double tau_ = std::numeric_limits<double>::infinity();
  double rho_ = 0.0;
  SparseMatrix adjacency_;
  SparseMatrix normalized_;
  Matrix features_;
};

struct GraphBuildReport {
  ThresholdSelection threshold;
  std::size_t total_edges = 0;
  std::size_t cross_label_edges = 0;
  std::vector<std::string> warnings;
};

/// Builds the graph with an adaptively selected threshold.
inline SemanticGraph build_graph(const LabeledEmbeddings& emb, double rho,
                                 GraphBuildReport* report = nullptr) {
  const Matrix s = cosine_similarity(emb);
  const auto labels = emb.labels();
  const ThresholdSelection sel = select_threshold(s, labels, rho);
  SemanticGraph g(emb, build_adjacency(s, labels, sel.tau), sel.tau, rho);
  if (report) {
    report->threshold = sel;
    report->total_edges = g.edges().size();
    report->cross_label_edges = g.cross_label_edges();
  }
  return g;
}

/// Builds the graph with a user-supplied threshold. tau <= 0 admits negative
/// cross-label weights; that is reported as a warning.
inline SemanticGraph build_graph_with_tau(const LabeledEmbeddings& emb, double tau,
                                          GraphBuildReport* report = nullptr) {
  const Matrix s = cosine_similarity(emb);
  const auto labels = emb.labels();
  SemanticGraph g(emb, build_adjacency(s, labels, tau), tau, std::numeric_limits<double>::quiet_NaN());
  if (report) {
    report->threshold.tau = tau;
    report->total_edges = g.edges().size();
    report->cross_label_edges = g.cross_label_edges();
    report->threshold.realized_edges = report->cross_label_edges;
    if (tau <= 0.0) {
      report->warnings.push_back("tau <= 0 admits negative cross-label weights; "
                                 "normalization rejects non-positive degrees");
    }
  }
  return g;
}

/// Per-batch graph: the semantic graph plus B data nodes. Label node i links
/// to data node j iff they share a class (block P); data nodes link to each
/// other iff they share a class (block M, all-ones diagonal).
struct AugmentedBatchGraph {
  const SemanticGraph* base = nullptr;
  std::vector<std::size_t> batch_labels;
  Matrix link_block;    // P, |T| x B
  Matrix batch_block;   // M, B x B
  SparseMatrix adjacency;   // A_a
  SparseMatrix normalized;  // D_a^{-1/2} A_a D_a^{-1/2}
  Matrix features;          // (|T| + B) x d_t, label nodes first

  std::size_t batch_size() const noexcept { return batch_labels.size(); }
  std::size_t label_nodes() const noexcept { return base->node_count(); }
  std::size_t node_count() const noexcept { return label_nodes() + batch_size(); }
};

/// `data_features` holds one projected sample per row (B x d_t).
inline AugmentedBatchGraph augment(const SemanticGraph& graph, const Matrix& data_features,
                                   std::span<const std::size_t> batch_labels) {
  const std::size_t t = graph.node_count();
  const std::size_t b = batch_labels.size();
  const std::size_t m = graph.embeddings().prompts_per_concept;
  if (data_features.rows() != b) {
    throw ShapeError("augment: " + std::to_string(b) + " labels for " +
                     data_features.shape_string() + " data features");
  }
  if (b > 0 && data_features.cols() != graph.dim()) {
    throw ShapeError("augment: data feature dimension " + std::to_string(data_features.cols()) +
                     " does not match graph dimension " + std::to_string(graph.dim()));
  }
  for (std::size_t j = 0; j < b; ++j) {
    if (batch_labels[j] >= graph.concepts()) {
      throw IndexError("augment: batch label " + std::to_string(batch_labels[j]) +
                       " at position " + std::to_string(j) + " is not a known concept");
    }
  }

  AugmentedBatchGraph aug;
  aug.base = &graph;
  aug.batch_labels.assign(batch_labels.begin(), batch_labels.end());
  aug.link_block = Matrix(t, b);
  aug.batch_block = Matrix(b, b);
  for (std::size_t j = 0; j < b; ++j) {
    const std::size_t k = batch_labels[j];
    for (std::size_t q = 0; q < m; ++q) aug.link_block(k * m + q, j) = 1.0;
    for (std::size_t j2 = 0; j2 < b; ++j2)
      if (batch_labels[j2] == k) aug.batch_block(j, j2) = 1.0;
  }

  std::vector<std::vector<std::size_t>> by_label(graph.concepts());
  for (std::size_t j = 0; j < b; ++j) by_label[batch_labels[j]].push_back(j);

  const SparseMatrix& base = graph.adjacency();
  SparseMatrix& a = aug.adjacency;
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t p = base.row_ptr[i]; p < base.row_ptr[i + 1]; ++p) a.push(base.col[p], base.val[p]);
    for (std::size_t j : by_label[graph.embeddings().label_of(i)]) a.push(t + j, 1.0);
    a.end_row();
  }
  for (std::size_t j = 0; j < b; ++j) {
    const std::size_t k = batch_labels[j];
    for (std::size_t q = 0; q < m; ++q) a.push(k * m + q, 1.0);
    for (std::size_t j2 : by_label[k]) a.push(t + j2, 1.0);
    a.end_row();
  }
  aug.normalized = normalize_adjacency(a);
  aug.features = b > 0 ? vstack(graph.node_features(), data_features) : graph.node_features();
  return aug;
}

namespace detail {
inline constexpr std::uint32_t kGraphVersion = 1;
}

inline void write_graph(io::ByteWriter& w, const SemanticGraph& g) {
  w.magic("LSGG");
  w.u32(detail::kGraphVersion);
  write_embeddings(w, g.embeddings());
  w.u64(g.edges().size());
  for (const Edge& e : g.edges()) {
    w.u32(e.i);
    w.u32(e.j);
    w.f64(e.weight);
  }
  w.f64(g.tau());
  w.f64(g.rho());
}

inline SemanticGraph read_graph(io::ByteReader& r) {
  r.expect_magic("LSGG");
  io::check_version(r.u32(), detail::kGraphVersion, "graph");
  LabeledEmbeddings emb = read_embeddings(r);
  const std::uint64_t count = r.u64();
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
  for (std::uint64_t k = 0; k < count; ++k) {
    Edge e;
    e.i = r.u32();
    e.j = r.u32();
    e.weight = r.f64();
    edges.push_back(e);
  }
  const double tau = r.f64();
  const double rho = r.f64();
  return SemanticGraph(std::move(emb), std::move(edges), tau, rho);
}

inline void save_graph(const SemanticGraph& g, const std::filesystem::path& path) {
  io::ByteWriter w;
  write_graph(w, g);
  io::write_file(path, w.buffer());
}

inline SemanticGraph load_graph(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  io::ByteReader r(bytes);
  SemanticGraph g = read_graph(r);
  r.expect_end();
  return g;
}

}  // namespace lsg
