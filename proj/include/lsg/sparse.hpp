#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lsg/error.hpp"
#include "lsg/matrix.hpp"

namespace lsg {

/// Square CSR matrix. Column indices within a row are kept in insertion
/// order; callers insert them sorted so products are reproducible.
struct SparseMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col;
  std::vector<double> val;

  std::size_t nnz() const noexcept { return col.size(); }

  void push(std::size_t c, double v) {
    col.push_back(c);
    val.push_back(v);
  }
  void end_row() {
    row_ptr.push_back(col.size());
    ++n;
  }

  Matrix to_dense() const {
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) d(i, col[p]) += val[p];
    return d;
  }

  std::vector<double> row_sums() const {
    std::vector<double> s(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) s[i] += val[p];
    return s;
  }
};

/// sparse(n x n) * dense(n x d)
inline Matrix spmm(const SparseMatrix& a, const Matrix& x) {
  if (a.n != x.rows()) {
    throw ShapeError("spmm: shape mismatch " + std::to_string(a.n) + "x" +
                     std::to_string(a.n) + " vs " + x.shape_string());
  }
  Matrix out(a.n, x.cols());
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < a.n; ++i) {
    double* o = out.row(i).data();
    for (std::size_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) {
      const double w = a.val[p];
      const double* xr = x.row(a.col[p]).data();
      for (std::size_t j = 0; j < d; ++j) o[j] += w * xr[j];
    }
  }
  return out;
}

/// D^{-1/2} A D^{-1/2} with weighted degrees d_i = sum_j A_ij.
inline SparseMatrix normalize_adjacency(const SparseMatrix& a) {
  const std::vector<double> deg = a.row_sums();
  std::vector<double> inv_sqrt(a.n);
  for (std::size_t i = 0; i < a.n; ++i) {
    if (!(deg[i] > 0.0)) {
      throw ValueError("normalize_adjacency: node " + std::to_string(i) +
                       " has non-positive degree " + std::to_string(deg[i]));
    }
    inv_sqrt[i] = 1.0 / std::sqrt(deg[i]);
  }
  SparseMatrix out = a;
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p)
      out.val[p] = a.val[p] * inv_sqrt[i] * inv_sqrt[a.col[p]];
  return out;
}

}  // namespace lsg
