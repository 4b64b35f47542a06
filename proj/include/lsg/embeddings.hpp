#pragma once

#include <charconv>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lsg/binary_io.hpp"
#include "lsg/error.hpp"
#include "lsg/matrix.hpp"
#include "lsg/random.hpp"

namespace lsg {

/// Concept-prompt text embeddings. `matrix` is dim x (prompts * concepts);
/// column c belongs to concept c / prompts_per_concept (0-based), so the
/// label vector is block-constant with block length prompts_per_concept.
struct LabeledEmbeddings {
  std::size_t prompts_per_concept = 0;
  Matrix matrix;
  std::vector<std::string> concept_names;

  std::size_t dim() const noexcept { return matrix.rows(); }
  std::size_t concepts() const noexcept { return concept_names.size(); }
  std::size_t node_count() const noexcept { return matrix.cols(); }
  std::size_t label_of(std::size_t node) const { return node / prompts_per_concept; }

  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> y(node_count());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = label_of(i);
    return y;
  }

  /// Nodes as rows (the orientation the GCN consumes).
  Matrix node_features() const { return transpose(matrix); }

  void validate() const {
    if (prompts_per_concept == 0) throw FormatError("embeddings: prompts per concept is 0");
    if (concept_names.empty()) throw FormatError("embeddings: no concepts");
    if (matrix.cols() != prompts_per_concept * concept_names.size()) {
      throw FormatError("embeddings: " + std::to_string(matrix.cols()) +
                        " columns, expected m*K = " +
                        std::to_string(prompts_per_concept * concept_names.size()));
    }
    if (matrix.rows() == 0) throw FormatError("embeddings: zero dimension");
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < matrix.rows(); ++i) {
        const double v = matrix(i, j);
        if (!std::isfinite(v)) {
          throw FormatError("embeddings: non-finite entry at row " + std::to_string(i) +
                            ", column " + std::to_string(j));
        }
        s += v * v;
      }
      if (s == 0.0) {
        throw FormatError("embeddings: zero-norm column " + std::to_string(j));
      }
    }
  }

  friend bool operator==(const LabeledEmbeddings&, const LabeledEmbeddings&) = default;
};

enum class EmbeddingFormat { Csv, Binary };

inline EmbeddingFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? EmbeddingFormat::Csv : EmbeddingFormat::Binary;
}

namespace detail {

inline constexpr std::uint32_t kEmbeddingVersion = 1;

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline double parse_double(std::string_view s, std::size_t line, std::size_t col) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("line " + std::to_string(line) + ", field " + std::to_string(col) +
                      ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t p = line.find(',', start);
    if (p == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, p - start));
    start = p + 1;
  }
  return out;
}

}  // namespace detail

inline void write_embeddings(io::ByteWriter& w, const LabeledEmbeddings& emb) {
  w.magic("LSGE");
  w.u32(detail::kEmbeddingVersion);
  w.u32(static_cast<std::uint32_t>(emb.dim()));
  w.u32(static_cast<std::uint32_t>(emb.concepts()));
  w.u32(static_cast<std::uint32_t>(emb.prompts_per_concept));
  for (const auto& name : emb.concept_names) w.string(name);
  for (std::size_t j = 0; j < emb.node_count(); ++j)
    for (std::size_t i = 0; i < emb.dim(); ++i) w.f64(emb.matrix(i, j));
}

inline LabeledEmbeddings read_embeddings(io::ByteReader& r) {
  r.expect_magic("LSGE");
  io::check_version(r.u32(), detail::kEmbeddingVersion, "embeddings");
  const std::size_t dim = r.u32();
  const std::size_t k = r.u32();
  const std::size_t m = r.u32();
  LabeledEmbeddings emb;
  emb.prompts_per_concept = m;
  emb.concept_names.reserve(k);
  for (std::size_t c = 0; c < k; ++c) emb.concept_names.push_back(r.string());
  emb.matrix = Matrix(dim, m * k);
  for (std::size_t j = 0; j < m * k; ++j)
    for (std::size_t i = 0; i < dim; ++i) emb.matrix(i, j) = r.f64();
  emb.validate();
  return emb;
}

inline std::string embeddings_to_csv(const LabeledEmbeddings& emb) {
  std::string out = "concept,prompt_index";
  for (std::size_t i = 0; i < emb.dim(); ++i) out += ",e" + std::to_string(i);
  out += '\n';
  for (std::size_t j = 0; j < emb.node_count(); ++j) {
    out += emb.concept_names[emb.label_of(j)];
    out += ',';
    out += std::to_string(j % emb.prompts_per_concept);
    for (std::size_t i = 0; i < emb.dim(); ++i) {
      out += ',';
      out += detail::format_double(emb.matrix(i, j));
    }
    out += '\n';
  }
  return out;
}

inline LabeledEmbeddings embeddings_from_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t p = text.find('\n', start);
      if (p == std::string_view::npos) p = text.size();
      std::string_view l = text.substr(start, p - start);
      if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
      if (!l.empty()) lines.push_back(l);
      start = p + 1;
    }
  }
  if (lines.empty()) throw FormatError("embeddings csv: missing header");
  const auto header = detail::split_csv(lines[0]);
  if (header.size() < 3 || header[0] != "concept" || header[1] != "prompt_index") {
    throw FormatError("embeddings csv: header must be 'concept,prompt_index,e0,...'");
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t i = 0; i < dim; ++i) {
    if (header[i + 2] != "e" + std::to_string(i)) {
      throw FormatError("embeddings csv: header column " + std::to_string(i + 2) +
                        " should be e" + std::to_string(i));
    }
  }
  const std::size_t n = lines.size() - 1;
  if (n == 0) throw FormatError("embeddings csv: no rows");

  LabeledEmbeddings emb;
  emb.matrix = Matrix(dim, n);
  std::vector<std::size_t> block_sizes;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t line_no = r + 2;
    const auto fields = detail::split_csv(lines[r + 1]);
    if (fields.size() != dim + 2) {
      throw FormatError("embeddings csv: line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(dim + 2));
    }
    const std::string name(fields[0]);
    if (emb.concept_names.empty() || emb.concept_names.back() != name) {
      for (const auto& seen : emb.concept_names) {
        if (seen == name) {
          throw FormatError("embeddings csv: line " + std::to_string(line_no) +
                            ": concept '" + name + "' is not contiguous");
        }
      }
      emb.concept_names.push_back(name);
      block_sizes.push_back(0);
    }
    const double q = detail::parse_double(fields[1], line_no, 1);
    if (q != static_cast<double>(block_sizes.back())) {
      throw FormatError("embeddings csv: line " + std::to_string(line_no) +
                        ": prompt_index " + std::string(fields[1]) + ", expected " +
                        std::to_string(block_sizes.back()));
    }
    ++block_sizes.back();
    for (std::size_t i = 0; i < dim; ++i)
      emb.matrix(i, r) = detail::parse_double(fields[i + 2], line_no, i + 2);
  }
  emb.prompts_per_concept = block_sizes.front();
  for (std::size_t c = 0; c < block_sizes.size(); ++c) {
    if (block_sizes[c] != emb.prompts_per_concept) {
      throw FormatError("embeddings csv: concept '" + emb.concept_names[c] + "' has " +
                        std::to_string(block_sizes[c]) + " prompts, expected " +
                        std::to_string(emb.prompts_per_concept));
    }
  }
  emb.validate();
  return emb;
}

inline void save_embeddings(const LabeledEmbeddings& emb, const std::filesystem::path& path,
                            EmbeddingFormat format) {
  if (path.empty()) throw IoError("empty output path");
  emb.validate();
  if (format == EmbeddingFormat::Csv) {
    io::write_file(path, embeddings_to_csv(emb));
  } else {
    io::ByteWriter w;
    write_embeddings(w, emb);
    io::write_file(path, w.buffer());
  }
}

inline LabeledEmbeddings load_embeddings(const std::filesystem::path& path,
                                         EmbeddingFormat format) {
  const std::string bytes = io::read_file(path);
  if (format == EmbeddingFormat::Csv) return embeddings_from_csv(bytes);
  io::ByteReader r(bytes);
  LabeledEmbeddings emb = read_embeddings(r);
  r.expect_end();
  return emb;
}

inline LabeledEmbeddings load_embeddings(const std::filesystem::path& path) {
  return load_embeddings(path, format_from_path(path));
}

struct SynthEmbeddingOptions {
  std::size_t concepts = 20;
  std::size_t prompts = 20;
  std::size_t dim = 64;
  double separation = 5.0;
  double prompt_spread = 1.0;
  double noise = 0.1;
  std::uint64_t seed = 7;
};

/// Unit-norm random direction per concept (rows of a K x dim matrix).
inline Matrix concept_directions(std::size_t concepts, std::size_t dim, std::uint64_t seed) {
  Rng rng = stream(seed, "synth.concepts");
  Matrix mu(concepts, dim);
  for (std::size_t k = 0; k < concepts; ++k) {
    auto r = mu.row(k);
    double s = 0.0;
    for (double& v : r) {
      v = rng.normal();
      s += v * v;
    }
    const double n = std::sqrt(s);
    for (double& v : r) v /= n;
  }
  return mu;
}

/// Column (k, q) = separation * mu_k + prompt_spread * pi_q + noise * eps,
/// with pi_q unit prompt offsets shared by all concepts.
inline LabeledEmbeddings synth_embeddings(const SynthEmbeddingOptions& opt) {
  if (opt.concepts < 2) throw ValueError("synth_embeddings: need at least 2 concepts");
  if (opt.prompts < 1) throw ValueError("synth_embeddings: need at least 1 prompt");
  if (opt.dim < 2) throw ValueError("synth_embeddings: dimension must be at least 2");
  const Matrix mu = concept_directions(opt.concepts, opt.dim, opt.seed);
  Rng prompt_rng = stream(opt.seed, "synth.prompts");
  Matrix pi(opt.prompts, opt.dim);
  for (std::size_t q = 0; q < opt.prompts; ++q) {
    auto r = pi.row(q);
    double s = 0.0;
    for (double& v : r) {
      v = prompt_rng.normal();
      s += v * v;
    }
    for (double& v : r) v /= std::sqrt(s);
  }
  Rng noise_rng = stream(opt.seed, "synth.embedding_noise");

  LabeledEmbeddings emb;
  emb.prompts_per_concept = opt.prompts;
  emb.matrix = Matrix(opt.dim, opt.prompts * opt.concepts);
  for (std::size_t k = 0; k < opt.concepts; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "concept_%03zu", k);
    emb.concept_names.emplace_back(name);
    for (std::size_t q = 0; q < opt.prompts; ++q) {
      const std::size_t col = k * opt.prompts + q;
      for (std::size_t i = 0; i < opt.dim; ++i) {
        emb.matrix(i, col) = opt.separation * mu(k, i) + opt.prompt_spread * pi(q, i) +
                             opt.noise * noise_rng.normal();
      }
    }
  }
  emb.validate();
  return emb;
}

}  // namespace lsg
