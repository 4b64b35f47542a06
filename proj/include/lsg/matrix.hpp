#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lsg/error.hpp"

namespace lsg {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::string shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() +
                     " vs " + b.shape_string());
  }
}

}  // namespace detail

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

/// aᵀ·b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: shape mismatch " + a.shape_string() + "^T vs " +
                     b.shape_string());
  }
  Matrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* br = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// a·bᵀ
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string() + "^T");
  }
  return matmul(a, transpose(b));
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  detail::require_same_shape(a, b, "add");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return out;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  detail::require_same_shape(a, b, "sub");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  return out;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

/// y += alpha * x
inline void axpy(double alpha, const Matrix& x, Matrix& y) {
  detail::require_same_shape(x, y, "axpy");
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += alpha * xd[i];
}

inline Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Masks `upstream` where the pre-activation is not strictly positive.
inline Matrix relu_backward(const Matrix& x, const Matrix& upstream) {
  detail::require_same_shape(x, upstream, "relu_backward");
  Matrix out = upstream;
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i)
    if (!(xd[i] > 0.0)) od[i] = 0.0;
  return out;
}

/// Adds a 1 x cols bias row to every row of `x`.
inline void add_row_bias(Matrix& x, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_row_bias: shape mismatch " + x.shape_string() + " vs " +
                     bias.shape_string());
  }
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
  }
}

inline Matrix column_sums(const Matrix& x) {
  Matrix out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out(0, j) += r[j];
  }
  return out;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (double& v : o) v /= z;
  }
  return out;
}

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;
};

/// Mean softmax cross-entropy over rows; grad is (softmax - onehot) / rows.
inline LossAndGrad softmax_cross_entropy(const Matrix& logits,
                                         std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + logits.shape_string() + " logits");
  }
  LossAndGrad out{0.0, Matrix(logits.rows(), logits.cols())};
  if (logits.rows() == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (labels[i] >= logits.cols()) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                       " out of range at row " + std::to_string(i));
    }
    auto in = logits.row(i);
    auto g = out.grad.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      g[j] = std::exp(in[j] - mx);
      z += g[j];
    }
    const double log_z = std::log(z);
    out.loss += (log_z - (in[labels[i]] - mx)) * inv_n;
    for (double& v : g) v = v / z * inv_n;
    g[labels[i]] -= inv_n;
  }
  return out;
}

inline Matrix l2_normalize_columns(const Matrix& x, double eps = 1e-12) {
  if (!(eps > 0.0)) throw ValueError("l2_normalize_columns: eps must be positive");
  Matrix out = x;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) s += x(i, j) * x(i, j);
    const double n = std::max(std::sqrt(s), eps);
    for (std::size_t i = 0; i < x.rows(); ++i) out(i, j) /= n;
  }
  return out;
}

inline Matrix l2_normalize_rows(const Matrix& x, double eps = 1e-12) {
  if (!(eps > 0.0)) throw ValueError("l2_normalize_rows: eps must be positive");
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = out.row(i);
    double s = 0.0;
    for (double v : r) s += v * v;
    const double n = std::max(std::sqrt(s), eps);
    for (double& v : r) v /= n;
  }
  return out;
}

/// Backward of l2_normalize_rows: for y = x / max(|x|, eps), maps dL/dy to dL/dx.
inline Matrix l2_normalize_rows_backward(const Matrix& x, const Matrix& upstream,
                                         double eps = 1e-12) {
  detail::require_same_shape(x, upstream, "l2_normalize_rows_backward");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    auto gr = upstream.row(i);
    auto o = out.row(i);
    double s = 0.0;
    for (double v : xr) s += v * v;
    const double n = std::sqrt(s);
    if (n <= eps) {
      for (std::size_t j = 0; j < o.size(); ++j) o[j] = gr[j] / eps;
      continue;
    }
    double dot = 0.0;
    for (std::size_t j = 0; j < o.size(); ++j) dot += xr[j] * gr[j];
    for (std::size_t j = 0; j < o.size(); ++j)
      o[j] = (gr[j] - xr[j] * dot / s) / n;
  }
  return out;
}

/// Index of the maximum per row; ties resolve to the lowest index.
inline std::vector<std::size_t> argmax_rows(const Matrix& x) {
  std::vector<std::size_t> out(x.rows(), 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j)
      if (r[j] > r[best]) best = j;
    out[i] = best;
  }
  return out;
}

inline bool all_finite(const Matrix& x) {
  for (double v : x.data())
    if (!std::isfinite(v)) return false;
  return true;
}

inline double sum(const Matrix& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return s;
}

inline double max_abs(const Matrix& x) {
  double m = 0.0;
  for (double v : x.data()) m = std::max(m, std::abs(v));
  return m;
}

/// Rows `first .. first+count` as a new matrix.
inline Matrix slice_rows(const Matrix& x, std::size_t first, std::size_t count) {
  if (first + count > x.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") out of " + x.shape_string());
  }
  Matrix out(count, x.cols());
  if (count > 0) {
    std::memcpy(out.data().data(), x.row(first).data(),
                count * x.cols() * sizeof(double));
  }
  return out;
}

inline Matrix gather_rows(const Matrix& x, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.rows()) throw IndexError("gather_rows: row index out of range");
    auto src = x.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

/// Stacks `top` above `bottom`.
inline Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols() && top.rows() != 0 && bottom.rows() != 0) {
    throw ShapeError("vstack: column mismatch " + top.shape_string() + " vs " +
                     bottom.shape_string());
  }
  const std::size_t cols = top.rows() != 0 ? top.cols() : bottom.cols();
  Matrix out(top.rows() + bottom.rows(), cols);
  std::copy(top.data().begin(), top.data().end(), out.data().begin());
  std::copy(bottom.data().begin(), bottom.data().end(),
            out.data().begin() + static_cast<std::ptrdiff_t>(top.size()));
  return out;
}

/// FNV-1a over the raw bytes of every entry; used to detect any weight change.
inline std::uint64_t checksum(const Matrix& x, std::uint64_t h = 1469598103934665603ULL) {
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ULL;
    }
  };
  mix(x.rows());
  mix(x.cols());
  for (double v : x.data()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    mix(bits);
  }
  return h;
}

}  // namespace lsg
