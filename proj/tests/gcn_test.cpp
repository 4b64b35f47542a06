#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "lsg/lsg.hpp"
#include "test_util.hpp"

using namespace lsg;
using lsg::testing::random_matrix;
using lsg::testing::TempDir;

namespace {

SparseMatrix dense_to_sparse(const Matrix& d) {
  SparseMatrix s;
  for (std::size_t i = 0; i < d.rows(); ++i) {
    for (std::size_t j = 0; j < d.cols(); ++j)
      if (d(i, j) != 0.0) s.push(j, d(i, j));
    s.end_row();
  }
  return s;
}

/// K orthogonal one-hot concepts with one prompt each: the graph has only
/// self-edges, so the normalized adjacency is the identity.
SemanticGraph orthogonal_graph(std::size_t k) {
  LabeledEmbeddings e;
  e.prompts_per_concept = 1;
  e.matrix = Matrix::identity(k);
  for (std::size_t c = 0; c < k; ++c) e.concept_names.push_back("c" + std::to_string(c));
  return build_graph(e, 0.0);
}

SemanticGraph separable_graph(std::size_t k, std::size_t m) {
  SynthEmbeddingOptions o;
  o.concepts = k;
  o.prompts = m;
  o.dim = 16;
  o.separation = 5.0;
  o.noise = 0.1;
  return build_graph(synth_embeddings(o), 0.003);
}

/// Mean squared distance of each point to its cluster centroid.
double within_variance(const Matrix& x, const std::vector<std::size_t>& y, std::size_t k) {
  Matrix c(k, x.cols());
  std::vector<double> n(k, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    n[y[i]] += 1.0;
    for (std::size_t j = 0; j < x.cols(); ++j) c(y[i], j) += x(i, j);
  }
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t j = 0; j < x.cols(); ++j) c(a, j) /= n[a];
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) s += std::pow(x(i, j) - c(y[i], j), 2);
  return s / static_cast<double>(x.rows());
}

}  // namespace

TEST(GcnForward, IdentityPropagation) {
  GcnModel m;
  m.encoder = {Matrix::identity(3)};
  m.classifier = Matrix(3, 2, 0.0);
  Rng rng(1);
  Matrix x = random_matrix(4, 3, rng);
  for (double& v : x.data()) v = std::abs(v);
  const GcnActivations act = gcn_forward(m, dense_to_sparse(Matrix::identity(4)), x);
  EXPECT_EQ(act.encoder_output(), x);
}

TEST(GcnForward, TwoNodeAveraging) {
  GcnModel m;
  m.encoder = {Matrix::identity(2)};
  m.classifier = Matrix::identity(2);
  const Matrix a{{0.5, 0.5}, {0.5, 0.5}};
  const GcnActivations act = gcn_forward(m, dense_to_sparse(a), Matrix{{2, 0}, {0, 2}});
  EXPECT_EQ(act.encoder_output(), (Matrix{{1, 1}, {1, 1}}));
}

TEST(GcnForward, PermutationEquivariant) {
  const SemanticGraph g = separable_graph(4, 3);
  GcnTrainConfig cfg;
  cfg.hidden_dim = 9;
  const GcnModel m = init_gcn(g.dim(), g.concepts(), cfg);
  const Matrix a = g.normalized_adjacency().to_dense();
  const Matrix& x = g.node_features();
  const std::size_t n = a.rows();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(4);
  rng.shuffle(perm);
  Matrix pa(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) pa(i, j) = a(perm[i], perm[j]);
  const Matrix px = gather_rows(x, perm);
  const Matrix out = gcn_forward(m, dense_to_sparse(a), x).logits;
  const Matrix pout = gcn_forward(m, dense_to_sparse(pa), px).logits;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) EXPECT_NEAR(pout(i, j), out(perm[i], j), 1e-12);
}

TEST(GcnForward, ShapeErrors) {
  GcnModel m;
  m.encoder = {Matrix::identity(3)};
  m.classifier = Matrix(3, 2);
  EXPECT_THROW(gcn_forward(m, dense_to_sparse(Matrix::identity(2)), Matrix(3, 3)), ShapeError);
  EXPECT_THROW(gcn_forward(m, dense_to_sparse(Matrix::identity(2)), Matrix(2, 4)), ShapeError);
}

TEST(NodeLoss, PeakedLogitsGiveZeroLoss) {
  const SemanticGraph g = orthogonal_graph(3);
  GcnModel m;
  m.encoder = {Matrix::identity(3)};
  m.classifier = 100.0 * Matrix::identity(3);
  EXPECT_NEAR(node_loss_and_grads(m, g).loss, 0.0, 1e-12);
}

TEST(NodeLoss, UniformLogitsGiveLogK) {
  const SemanticGraph g = orthogonal_graph(5);
  GcnModel m;
  m.encoder = {Matrix::identity(5)};
  m.classifier = Matrix(5, 5);
  EXPECT_NEAR(node_loss_and_grads(m, g, Reduction::Mean).loss, std::log(5.0), 1e-12);
  EXPECT_NEAR(node_loss_and_grads(m, g, Reduction::Sum).loss, 5.0 * std::log(5.0), 1e-12);
}

TEST(NodeLoss, GradientsMatchFiniteDifferences) {
  const SemanticGraph g = separable_graph(3, 3);
  for (bool conv_head : {true, false}) {
    for (Reduction red : {Reduction::Mean, Reduction::Sum}) {
      GcnTrainConfig cfg;
      cfg.hidden_dim = 7;
      cfg.encoder_layers = 3;
      cfg.graph_conv_classifier = conv_head;
      const GcnModel m = init_gcn(g.dim(), g.concepts(), cfg);
      const NodeLossResult r = node_loss_and_grads(m, g, red);
      for (std::size_t l = 0; l <= m.encoder.size(); ++l) {
        const bool is_head = l == m.encoder.size();
        auto f = [&](const Matrix& w) {
          GcnModel p = m;
          (is_head ? p.classifier : p.encoder[l]) = w;
          return node_loss_and_grads(p, g, red).loss;
        };
        const Matrix& at = is_head ? m.classifier : m.encoder[l];
        const Matrix& an = is_head ? r.grads.classifier : r.grads.encoder[l];
        EXPECT_LT(finite_difference_check(f, at, an), 1e-4) << "layer " << l;
      }
    }
  }
}

TEST(NodeLoss, InputGradientMatchesFiniteDifferences) {
  const SemanticGraph g = separable_graph(3, 2);
  GcnTrainConfig cfg;
  cfg.hidden_dim = 5;
  const GcnModel m = init_gcn(g.dim(), g.concepts(), cfg);
  const auto y = g.labels();
  const SparseMatrix& a = g.normalized_adjacency();
  const GcnActivations act = gcn_forward(m, a, g.node_features());
  const LossAndGrad ce = softmax_cross_entropy(act.logits, y);
  const GcnGradients back = gcn_backward(m, a, act, ce.grad, nullptr, false, true);
  auto f = [&](const Matrix& x) { return softmax_cross_entropy(gcn_forward(m, a, x).logits, y).loss; };
  EXPECT_LT(finite_difference_check(f, g.node_features(), back.input), 1e-4);
}

TEST(TrainGcn, SeparableGraphReachesFullAccuracy) {
  const SemanticGraph g = separable_graph(10, 5);
  const GcnTrainResult r = train_gcn(g, GcnTrainConfig{});
  EXPECT_EQ(r.node_accuracy, 1.0);
  EXPECT_EQ(r.loss_history.size(), 5000u);
  EXPECT_LT(node_loss_and_grads(r.model, g).loss, r.loss_history.front());
}

TEST(TrainGcn, ZeroIterationsReturnsInitialization) {
  const SemanticGraph g = separable_graph(3, 2);
  GcnTrainConfig cfg;
  cfg.iterations = 0;
  EXPECT_EQ(train_gcn(g, cfg).model, init_gcn(g.dim(), g.concepts(), cfg));
}

TEST(TrainGcn, Deterministic) {
  const SemanticGraph g = separable_graph(4, 3);
  GcnTrainConfig cfg;
  cfg.iterations = 50;
  const GcnTrainResult a = train_gcn(g, cfg);
  const GcnTrainResult b = train_gcn(g, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.loss_history, b.loss_history);
  cfg.seed = 8;
  EXPECT_NE(train_gcn(g, cfg).model, a.model);
}

TEST(TrainGcn, SmallStepLossIsMonotone) {
  const SemanticGraph g = separable_graph(5, 4);
  GcnTrainConfig cfg;
  cfg.iterations = 200;
  cfg.learning_rate = 1e-4;
  const GcnTrainResult r = train_gcn(g, cfg);
  for (std::size_t i = 1; i < r.loss_history.size(); ++i)
    EXPECT_LE(r.loss_history[i], r.loss_history[i - 1] + 1e-9) << "iteration " << i;
}

TEST(TrainGcn, DivergenceIsReported) {
  const SemanticGraph g = separable_graph(3, 2);
  GcnTrainConfig cfg;
  cfg.iterations = 500;
  cfg.learning_rate = 1e200;
  cfg.reduction = Reduction::Sum;
  try {
    train_gcn(g, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.code(), "divergence");
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
  }
}

TEST(RefinedEmbeddings, IdentityEncoderOnIdentityGraph) {
  const SemanticGraph g = orthogonal_graph(4);
  GcnModel m;
  m.encoder = {Matrix::identity(4), Matrix::identity(4)};
  m.classifier = Matrix(4, 4);
  EXPECT_EQ(refined_embeddings(m, g), g.node_features());
}

TEST(RefinedEmbeddings, ShapeAndTighterClusters) {
  const SemanticGraph g = separable_graph(6, 4);
  GcnTrainConfig cfg;
  cfg.iterations = 1000;
  const GcnModel m = train_gcn(g, cfg).model;
  const Matrix r = refined_embeddings(m, g);
  EXPECT_EQ(r.rows(), g.node_count());
  EXPECT_EQ(r.cols(), g.dim());
  // Compare on unit-normalized rows so the scale of the encoder does not matter.
  const auto y = g.labels();
  EXPECT_LT(within_variance(l2_normalize_rows(r), y, 6),
            within_variance(l2_normalize_rows(g.node_features()), y, 6));
}

TEST(CalinskiHarabasz, HandComputedOneDimensional) {
  const Matrix p{{0.0}, {0.1}, {10.0}, {10.1}};
  const std::vector<std::size_t> y = {0, 0, 1, 1};
  // centroids 0.05 and 10.05, overall 5.05
  const double between = 2 * 25.0 + 2 * 25.0;
  const double within = 4 * 0.05 * 0.05;
  const double expected = (between / 1.0) / (within / 2.0);
  EXPECT_NEAR(calinski_harabasz(p, y), expected, 1e-6 * expected);
  EXPECT_NEAR(calinski_harabasz(p, y), 20000.0, 1e-6);
}

TEST(CalinskiHarabasz, ZeroWithinDispersionIsInfinite) {
  const Matrix p{{0, 0}, {0, 0}, {1, 1}, {1, 1}};
  const double v = calinski_harabasz(p, std::vector<std::size_t>{0, 0, 1, 1});
  EXPECT_TRUE(std::isinf(v) && v > 0);
}

TEST(CalinskiHarabasz, ShuffledLabelsScoreLower) {
  Rng rng(6);
  Matrix p(60, 3);
  std::vector<std::size_t> y(60);
  for (std::size_t i = 0; i < 60; ++i) {
    y[i] = i % 3;
    for (std::size_t j = 0; j < 3; ++j) p(i, j) = (j == y[i] ? 10.0 : 0.0) + rng.normal();
  }
  std::vector<std::size_t> shuffled = y;
  rng.shuffle(shuffled);
  EXPECT_LT(calinski_harabasz(p, shuffled), calinski_harabasz(p, y));
}

TEST(CalinskiHarabasz, Errors) {
  EXPECT_THROW(calinski_harabasz(Matrix(3, 1), std::vector<std::size_t>{0, 0, 0}), ValueError);
  EXPECT_THROW(calinski_harabasz(Matrix(2, 1), std::vector<std::size_t>{0, 1}), ValueError);
  EXPECT_THROW(calinski_harabasz(Matrix(2, 1), std::vector<std::size_t>{0}), ShapeError);
}

TEST(GcnFile, RoundTrip) {
  TempDir dir("gcn");
  const SemanticGraph g = separable_graph(3, 2);
  for (bool conv_head : {true, false}) {
    GcnTrainConfig cfg;
    cfg.graph_conv_classifier = conv_head;
    cfg.encoder_layers = 3;
    const GcnModel m = init_gcn(g.dim(), g.concepts(), cfg);
    save_gcn(m, dir / "m.lsgm");
    const GcnModel back = load_gcn(dir / "m.lsgm");
    EXPECT_EQ(back, m);
    EXPECT_EQ(back.checksum(), m.checksum());
  }
  std::string bytes = io::read_file(dir / "m.lsgm");
  bytes.resize(bytes.size() / 2);
  io::write_file(dir / "t.lsgm", bytes);
  EXPECT_THROW(load_gcn(dir / "t.lsgm"), FormatError);
}
