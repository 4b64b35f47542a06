#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lsg/binary_io.hpp"
#include "lsg/error.hpp"
#include "lsg/gcn.hpp"
#include "lsg/matrix.hpp"
#include "lsg/random.hpp"

namespace lsg {

struct DenseLayer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out

  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }

  Matrix forward(const Matrix& x) const {
    Matrix y = matmul(x, weight);
    add_row_bias(y, bias);
    return y;
  }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct DenseGrad {
  Matrix weight;
  Matrix bias;
};

/// Encoder F (MLP, ReLU after every layer) followed by the task head C.
/// This is everything needed at inference time.
struct InferenceNet {
  std::vector<DenseLayer> encoder;
  DenseLayer classifier;

  std::size_t input_dim() const { return encoder.front().in(); }
  std::size_t feature_dim() const { return encoder.back().out(); }
  std::size_t concepts() const { return classifier.out(); }

  friend bool operator==(const InferenceNet&, const InferenceNet&) = default;
};

/// Primary model: the inference net plus the training-only projector H that
/// maps features into the text-embedding space.
struct PrimaryModel {
  InferenceNet net;
  DenseLayer projector;

  std::size_t projection_dim() const { return projector.out(); }

  friend bool operator==(const PrimaryModel&, const PrimaryModel&) = default;
};

inline DenseLayer init_dense(std::size_t in, std::size_t out, Rng& rng) {
  return DenseLayer{glorot_uniform(in, out, rng), Matrix(1, out)};
}

/// `encoder_dims` lists the widths of the encoder layers; the last one is the
/// feature dimension. Each part draws from its own named stream, so the
/// projector never perturbs the encoder or classifier initialization.
inline PrimaryModel init_primary(std::size_t input_dim, std::span<const std::size_t> encoder_dims,
                                 std::size_t concepts, std::size_t projection_dim,
                                 std::uint64_t seed) {
  if (encoder_dims.empty()) throw ValueError("primary model: encoder needs at least one layer");
  if (input_dim == 0 || concepts < 2) throw ValueError("primary model: bad input or class count");
  PrimaryModel m;
  Rng enc_rng = stream(seed, "primary.encoder");
  std::size_t in = input_dim;
  for (std::size_t d : encoder_dims) {
    m.net.encoder.push_back(init_dense(in, d, enc_rng));
    in = d;
  }
  Rng cls_rng = stream(seed, "primary.classifier");
  m.net.classifier = init_dense(in, concepts, cls_rng);
  Rng proj_rng = stream(seed, "primary.projector");
  m.projector = init_dense(in, projection_dim == 0 ? 1 : projection_dim, proj_rng);
  return m;
}

struct EncoderTrace {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  Matrix features;             // ReLU output of the last layer
};

inline EncoderTrace encode(const InferenceNet& net, const Matrix& x) {
  if (x.cols() != net.input_dim()) {
    throw ShapeError("encoder: input dimension " + std::to_string(x.cols()) +
                     " but model expects " + std::to_string(net.input_dim()));
  }
  EncoderTrace t;
  Matrix h = x;
  for (const DenseLayer& layer : net.encoder) {
    t.inputs.push_back(h);
    t.pre.push_back(layer.forward(h));
    h = relu(t.pre.back());
  }
  t.features = std::move(h);
  return t;
}

/// Backward through the encoder; returns per-layer gradients.
inline std::vector<DenseGrad> encoder_backward(const InferenceNet& net, const EncoderTrace& t,
                                               const Matrix& d_features) {
  std::vector<DenseGrad> grads(net.encoder.size());
  Matrix dh = d_features;
  for (std::size_t l = net.encoder.size(); l-- > 0;) {
    const Matrix dz = relu_backward(t.pre[l], dh);
    grads[l].weight = matmul_tn(t.inputs[l], dz);
    grads[l].bias = column_sums(dz);
    if (l > 0) dh = matmul_nt(dz, net.encoder[l].weight);
  }
  return grads;
}

inline Matrix logits(const InferenceNet& net, const Matrix& x) {
  return net.classifier.forward(encode(net, x).features);
}

/// Class index per row of `features`: argmax of C(F(x)), lowest index on ties.
/// Depends on nothing but the inference net.
inline std::vector<std::size_t> predict(const InferenceNet& net, const Matrix& features) {
  return argmax_rows(logits(net, features));
}

inline double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> labels) {
  if (pred.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
  if (pred.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == labels[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

namespace detail {

inline constexpr std::uint32_t kPrimaryVersion = 1;

inline void write_dense(io::ByteWriter& w, const DenseLayer& l) {
  w.matrix(l.weight);
  w.matrix(l.bias);
}

inline DenseLayer read_dense(io::ByteReader& r) {
  DenseLayer l;
  l.weight = r.matrix();
  l.bias = r.matrix();
  if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols())
    throw FormatError("primary model: bias shape " + l.bias.shape_string() +
                      " does not match weight " + l.weight.shape_string());
  return l;
}

}  // namespace detail

/// Layout: magic, version, encoder layer count, encoder layers, classifier,
/// projector; each layer as (weight matrix, bias matrix).
inline void save_primary(const PrimaryModel& m, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("LSGP");
  w.u32(detail::kPrimaryVersion);
  w.u32(static_cast<std::uint32_t>(m.net.encoder.size()));
  for (const DenseLayer& l : m.net.encoder) detail::write_dense(w, l);
  detail::write_dense(w, m.net.classifier);
  detail::write_dense(w, m.projector);
  io::write_file(path, w.buffer());
}

inline PrimaryModel load_primary(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  io::ByteReader r(bytes);
  r.expect_magic("LSGP");
  io::check_version(r.u32(), detail::kPrimaryVersion, "primary model");
  PrimaryModel m;
  const std::uint32_t layers = r.u32();
  if (layers == 0) throw FormatError("primary model: no encoder layers");
  for (std::uint32_t l = 0; l < layers; ++l) m.net.encoder.push_back(detail::read_dense(r));
  m.net.classifier = detail::read_dense(r);
  m.projector = detail::read_dense(r);
  r.expect_end();
  for (std::size_t l = 1; l < m.net.encoder.size(); ++l)
    if (m.net.encoder[l].in() != m.net.encoder[l - 1].out())
      throw FormatError("primary model: encoder layer " + std::to_string(l) + " dimension mismatch");
  if (m.net.classifier.in() != m.net.feature_dim() || m.projector.in() != m.net.feature_dim())
    throw FormatError("primary model: head dimension mismatch");
  return m;
}

}  // namespace lsg
