#pragma once

#include <cstddef>
#include <vector>

#include "qsym/core.hpp"

namespace qsym {

/// Row-major dense matrix of 64-bit reals.
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

using Vecd = std::vector<double>;

inline Vecd matvec(const Tensor2& w, const Vecd& x) {
  if (w.cols != x.size()) throw ContractError("matvec: shape mismatch");
  Vecd y(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = w.data.data() + r * w.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

/// y = W^T v (propagates a gradient back through W).
inline Vecd matvec_transposed(const Tensor2& w, const Vecd& v) {
  if (w.rows != v.size()) throw ContractError("matvec_transposed: shape mismatch");
  Vecd y(w.cols, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = w.data.data() + r * w.cols;
    const double s = v[r];
    for (std::size_t c = 0; c < w.cols; ++c) y[c] += s * row[c];
  }
  return y;
}

/// A += y x^T (outer-product gradient accumulation).
inline void add_outer(Tensor2& a, const Vecd& y, const Vecd& x) {
  if (a.rows != y.size() || a.cols != x.size()) throw ContractError("add_outer: shape mismatch");
  for (std::size_t r = 0; r < a.rows; ++r) {
    double* row = a.data.data() + r * a.cols;
    const double s = y[r];
    for (std::size_t c = 0; c < a.cols; ++c) row[c] += s * x[c];
  }
}

inline void add_to(Vecd& acc, const Vecd& v) {
  if (acc.size() != v.size()) throw ContractError("add_to: size mismatch");
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
}

inline void add_to(Tensor2& acc, const Tensor2& t) {
  if (acc.rows != t.rows || acc.cols != t.cols) throw ContractError("add_to: shape mismatch");
  for (std::size_t i = 0; i < t.data.size(); ++i) acc.data[i] += t.data[i];
}

inline Vecd concat(const Vecd& a, const Vecd& b) {
  Vecd out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace qsym
