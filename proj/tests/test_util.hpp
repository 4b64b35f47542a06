#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "lsg/lsg.hpp"

namespace lsg::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("lsg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

/// Naive triple loop.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline LabeledEmbeddings random_embeddings(std::size_t k, std::size_t m, std::size_t d, Rng& rng) {
  LabeledEmbeddings e;
  e.prompts_per_concept = m;
  e.matrix = random_matrix(d, k * m, rng);
  for (std::size_t c = 0; c < k; ++c) e.concept_names.push_back("c" + std::to_string(c));
  return e;
}

/// All-pairs adjacency straight from the definition, with its own threshold
/// search: the smallest cross-label value among the top ceil(rho * |C|).
inline std::map<std::pair<std::size_t, std::size_t>, double> brute_force_adjacency(
    const LabeledEmbeddings& emb, double rho) {
  const std::size_t n = emb.node_count();
  const std::size_t d = emb.dim();
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < d; ++r) norms[i] += emb.matrix(r, i) * emb.matrix(r, i);
    norms[i] = std::sqrt(norms[i]);
  }
  auto sim = [&](std::size_t i, std::size_t j) {
    if (i == j) return 1.0;
    double s = 0.0;
    for (std::size_t r = 0; r < d; ++r) s += (emb.matrix(r, i) / norms[i]) * (emb.matrix(r, j) / norms[j]);
    return std::clamp(s, -1.0, 1.0);
  };
  std::vector<double> cross;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (emb.label_of(i) != emb.label_of(j)) cross.push_back(sim(i, j));
  std::sort(cross.begin(), cross.end());
  const double want = std::ceil(rho * static_cast<double>(cross.size()) - 1e-9);
  double tau = std::numeric_limits<double>::infinity();
  if (want >= 1.0) tau = cross[cross.size() - static_cast<std::size_t>(want)];

  std::map<std::pair<std::size_t, std::size_t>, double> a;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double s = sim(i, j);
      if (emb.label_of(i) == emb.label_of(j)) {
        if (s > 0.0) a[{i, j}] = s;
      } else if (s >= tau) {
        a[{i, j}] = s;
      }
    }
  return a;
}

inline std::map<std::pair<std::size_t, std::size_t>, double> edge_map(const std::vector<Edge>& edges) {
  std::map<std::pair<std::size_t, std::size_t>, double> a;
  for (const Edge& e : edges) a[{e.i, e.j}] = e.weight;
  return a;
}

}  // namespace lsg::testing
