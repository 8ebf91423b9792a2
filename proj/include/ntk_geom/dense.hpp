#pragma once

// Small row-major dense matrix, generic over the scalar. Exact-arithmetic
// paths (Jacobians, kernels, fully-connected algebra) use it directly;
// floating-point decompositions convert to Eigen.

#include "ntk_geom/errors.hpp"
#include "ntk_geom/scalar.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ntk_geom {

template <typename S>
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, S(0)) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<S> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeMismatch("DenseMatrix: entry count " + std::to_string(data_.size()) + " does not match " +
                          std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = S(1);
    return m;
  }

  static DenseMatrix from_rows(const std::vector<std::vector<S>>& rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.front().size();
    DenseMatrix m(r, c);
    for (std::size_t i = 0; i < r; ++i) {
      if (rows[i].size() != c) throw ShapeMismatch("DenseMatrix::from_rows: ragged rows");
      for (std::size_t j = 0; j < c; ++j) m(i, j) = rows[i][j];
    }
    return m;
  }

  static DenseMatrix diagonal(const std::vector<S>& d) {
    DenseMatrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<S>& data() const { return data_; }

  S& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const S& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::vector<S> column(std::size_t j) const {
    std::vector<S> c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  void set_column(std::size_t j, std::span<const S> values) {
    if (values.size() != rows_) throw ShapeMismatch("DenseMatrix::set_column: length mismatch");
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = values[i];
  }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  bool is_symmetric() const {
    if (rows_ != cols_) return false;
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = i + 1; j < cols_; ++j)
        if ((*this)(i, j) != (*this)(j, i)) return false;
    return true;
  }

  DenseMatrix& operator+=(const DenseMatrix& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  DenseMatrix& operator-=(const DenseMatrix& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  DenseMatrix& operator*=(const S& s) {
    for (auto& x : data_) x *= s;
    return *this;
  }

  friend DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
  friend DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
  friend DenseMatrix operator*(DenseMatrix a, const S& s) { return a *= s; }
  friend DenseMatrix operator*(const S& s, DenseMatrix a) { return a *= s; }

  friend DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols_ != b.rows_) {
      throw ShapeMismatch("DenseMatrix product: " + std::to_string(a.rows_) + "x" + std::to_string(a.cols_) +
                          " times " + std::to_string(b.rows_) + "x" + std::to_string(b.cols_));
    }
    DenseMatrix c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const S& aik = a(i, k);
        if (ScalarTraits<S>::is_zero(aik)) continue;
        for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  std::vector<S> apply(std::span<const S> x) const {
    if (x.size() != cols_) throw ShapeMismatch("DenseMatrix::apply: vector length mismatch");
    std::vector<S> y(rows_, S(0));
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) y[i] += (*this)(i, j) * x[j];
    return y;
  }

  friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  void require_same_shape(const DenseMatrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw ShapeMismatch("DenseMatrix: shape mismatch in elementwise op");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<S> data_;
};

template <typename S>
Eigen::MatrixXd to_eigen(const DenseMatrix<S>& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = to_double(m(i, j));
  return e;
}

inline DenseMatrix<double> from_eigen(const Eigen::MatrixXd& e) {
  DenseMatrix<double> m(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) m(i, j) = e(i, j);
  return m;
}

template <typename S>
DenseMatrix<double> to_double(const DenseMatrix<S>& m) {
  std::vector<double> d;
  d.reserve(m.data().size());
  for (const auto& x : m.data()) d.push_back(to_double(x));
  return DenseMatrix<double>(m.rows(), m.cols(), std::move(d));
}

/// Largest absolute entry.
inline double max_abs(const DenseMatrix<double>& m) {
  double r = 0.0;
  for (double x : m.data()) r = std::max(r, std::abs(x));
  return r;
}

/// Number of singular values above `rel_cutoff` times the largest one.
int numerical_rank(const Eigen::MatrixXd& m, double rel_cutoff = 1e-9);

}  // namespace ntk_geom
