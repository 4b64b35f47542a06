#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lsg/binary_io.hpp"
#include "lsg/embeddings.hpp"
#include "lsg/error.hpp"
#include "lsg/matrix.hpp"
#include "lsg/random.hpp"

namespace lsg {

/// Feature vectors (one per row) with 0-based class labels in [0, concepts).
struct LabeledDataset {
  Matrix features;
  std::vector<std::size_t> labels;
  std::size_t concepts = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  void validate() const {
    if (features.rows() != labels.size()) {
      throw FormatError("dataset: " + std::to_string(features.rows()) + " feature rows but " +
                        std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= concepts) {
        throw IndexError("dataset: label " + std::to_string(labels[i]) + " at row " +
                         std::to_string(i) + " outside " + std::to_string(concepts) + " classes");
      }
    }
    if (!all_finite(features)) throw FormatError("dataset: non-finite feature");
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

namespace detail {
inline constexpr std::uint32_t kDatasetVersion = 1;
}

/// Layout: magic "LSGD", version, n, dim, K (u32), n labels (u32), then the
/// n x dim features as row-major f64.
inline void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  io::ByteWriter w;
  w.magic("LSGD");
  w.u32(detail::kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.dim()));
  w.u32(static_cast<std::uint32_t>(ds.concepts));
  for (std::size_t l : ds.labels) w.u32(static_cast<std::uint32_t>(l));
  for (double v : ds.features.data()) w.f64(v);
  io::write_file(path, w.buffer());
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  io::ByteReader r(bytes);
  r.expect_magic("LSGD");
  io::check_version(r.u32(), detail::kDatasetVersion, "dataset");
  const std::size_t n = r.u32();
  const std::size_t d = r.u32();
  LabeledDataset ds;
  ds.concepts = r.u32();
  ds.labels.resize(n);
  for (auto& l : ds.labels) l = r.u32();
  ds.features = Matrix(n, d);
  for (double& v : ds.features.data()) v = r.f64();
  r.expect_end();
  ds.validate();
  return ds;
}

struct SynthTaskOptions {
  SynthEmbeddingOptions embedding;
  std::size_t input_dim = 32;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 1000;
  double labeled_fraction = 0.1;
  double signal = 0.8;
  double noise = 1.0;
  double label_noise = 0.0;
};

/// A labeled/unlabeled/test split plus the concept embeddings it was drawn
/// against. Unlabeled rows keep their generating labels for diagnostics only.
struct SynthTask {
  LabeledEmbeddings embeddings;
  LabeledDataset labeled;
  LabeledDataset unlabeled;
  LabeledDataset test;
};

/// Class-conditional features x = Q (signal * mu_y) + noise * eps, where mu_y
/// is the concept direction behind the embeddings and Q a fixed random map
/// into the input space. Classes are balanced; the labeled split takes the
/// same fraction from every class.
inline SynthTask synth_task(const SynthTaskOptions& opt) {
  if (opt.input_dim == 0) throw ValueError("synth_task: input_dim must be positive");
  if (!(opt.labeled_fraction > 0.0 && opt.labeled_fraction <= 1.0))
    throw ValueError("synth_task: labeled_fraction must be in (0, 1]");
  if (!(opt.label_noise >= 0.0 && opt.label_noise <= 1.0))
    throw ValueError("synth_task: label_noise must be in [0, 1]");
  const std::size_t k = opt.embedding.concepts;
  const std::size_t dt = opt.embedding.dim;
  const std::uint64_t seed = opt.embedding.seed;

  SynthTask task;
  task.embeddings = synth_embeddings(opt.embedding);
  const Matrix mu = concept_directions(k, dt, seed);

  Rng mix_rng = stream(seed, "synth.mixing");
  Matrix q(dt, opt.input_dim);
  for (double& v : q.data()) v = mix_rng.normal();
  const Matrix means = matmul(mu, q);  // K x input_dim

  auto draw = [&](std::size_t n, std::string_view name) {
    Rng rng = stream(seed, name);
    LabeledDataset ds;
    ds.concepts = k;
    ds.features = Matrix(n, opt.input_dim);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t y = i % k;
      ds.labels[i] = y;
      for (std::size_t j = 0; j < opt.input_dim; ++j)
        ds.features(i, j) = opt.signal * means(y, j) + opt.noise * rng.normal();
    }
    return ds;
  };
  const LabeledDataset train = draw(opt.train_samples, "synth.train");
  task.test = draw(opt.test_samples, "synth.test");

  // Rows are laid out class-cyclically, so a prefix of each class's rows is a
  // stratified labeled split.
  std::vector<std::vector<std::size_t>> per_class(k);
  for (std::size_t i = 0; i < train.size(); ++i) per_class[train.labels[i]].push_back(i);
  std::vector<std::size_t> labeled_rows;
  std::vector<std::size_t> unlabeled_rows;
  for (const auto& rows : per_class) {
    const std::size_t take = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(opt.labeled_fraction * static_cast<double>(rows.size()))));
    for (std::size_t r = 0; r < rows.size(); ++r)
      (r < take ? labeled_rows : unlabeled_rows).push_back(rows[r]);
  }
  std::sort(labeled_rows.begin(), labeled_rows.end());
  std::sort(unlabeled_rows.begin(), unlabeled_rows.end());

  auto subset = [&](const std::vector<std::size_t>& rows) {
    LabeledDataset ds;
    ds.concepts = k;
    ds.features = gather_rows(train.features, rows);
    for (std::size_t r : rows) ds.labels.push_back(train.labels[r]);
    return ds;
  };
  task.labeled = subset(labeled_rows);
  task.unlabeled = subset(unlabeled_rows);

  if (opt.label_noise > 0.0 && task.labeled.size() > 0) {
    Rng noise_rng = stream(seed, "synth.label_noise");
    const std::size_t flips = static_cast<std::size_t>(
        std::llround(opt.label_noise * static_cast<double>(task.labeled.size())));
    std::vector<std::size_t> order(task.labeled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    noise_rng.shuffle(order);
    for (std::size_t f = 0; f < flips; ++f) {
      std::size_t& y = task.labeled.labels[order[f]];
      y = (y + 1 + static_cast<std::size_t>(noise_rng.below(k - 1))) % k;
    }
  }
  return task;
}

}  // namespace lsg
