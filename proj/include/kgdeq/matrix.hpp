#pragma once

// Minimal dense row-major matrix used by the encoder, the positional scorer
// and the optimizer. Deliberately small: the models here are tiny and the
// hand-written backward passes want direct access to the storage.

#include <cstddef>
#include <vector>

#include "kgdeq/common.hpp"
#include "kgdeq/rng.hpp"

namespace kgdeq {

template <class Real>
class Matrix {
public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  Real* row(std::size_t r) { return data_.data() + r * cols_; }
  const Real* row(std::size_t r) const { return data_.data() + r * cols_; }

  Real& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::vector<Real>& data() { return data_; }
  const std::vector<Real>& data() const { return data_; }

  void fill(Real v) { data_.assign(data_.size(), v); }

  // Glorot-style uniform init: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
  // For a weight of shape (out, in), fan_in = cols, fan_out = rows.
  void glorot_init(Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows_ + cols_));
    for (auto& v : data_) v = static_cast<Real>(rng.uniform(-a, a));
  }

  // y = W x for a row vector x of length cols(); result length rows().
  void matvec(const Real* x, Real* y) const {
    for (std::size_t r = 0; r < rows_; ++r) {
      const Real* w = row(r);
      Real acc = Real(0);
      for (std::size_t c = 0; c < cols_; ++c) acc += w[c] * x[c];
      y[r] = acc;
    }
  }

  // y += W^T g: accumulate the transpose product (used in backward passes).
  void matvec_transpose_add(const Real* g, Real* y) const {
    for (std::size_t r = 0; r < rows_; ++r) {
      const Real* w = row(r);
      const Real gr = g[r];
      for (std::size_t c = 0; c < cols_; ++c) y[c] += w[c] * gr;
    }
  }

  // W += alpha * g x^T (outer-product accumulation for weight gradients).
  void add_outer(Real alpha, const Real* g, const Real* x) {
    for (std::size_t r = 0; r < rows_; ++r) {
      Real* w = row(r);
      const Real gr = alpha * g[r];
      for (std::size_t c = 0; c < cols_; ++c) w[c] += gr * x[c];
    }
  }

private:
  std::size_t rows_, cols_;
  std::vector<Real> data_;
};

}  // namespace kgdeq
