#pragma once

// Fully-connected linear networks W_H ... W_1: product map, general kernel
// action, the balanced operator A_W, balanced factorizations and flows.

#include "ntk_geom/dense.hpp"
#include "ntk_geom/invariants.hpp"

#include <vector>

namespace ntk_geom {

template <typename S>
using MatrixTuple = std::vector<DenseMatrix<S>>;

template <typename S>
void check_chain(const MatrixTuple<S>& W) {
  if (W.empty()) throw ShapeMismatch("matrix tuple is empty");
  for (std::size_t l = 1; l < W.size(); ++l) {
    if (W[l].cols() != W[l - 1].rows()) {
      throw ShapeMismatch("W_" + std::to_string(l + 1) + " has " + std::to_string(W[l].cols()) + " columns but W_" +
                          std::to_string(l) + " has " + std::to_string(W[l - 1].rows()) + " rows");
    }
  }
}

/// W_H ... W_1
template <typename S>
DenseMatrix<S> fc_compose(const MatrixTuple<S>& W) {
  check_chain(W);
  DenseMatrix<S> P = W.front();
  for (std::size_t l = 1; l < W.size(); ++l) P = W[l] * P;
  return P;
}

/// W_{hi} ... W_{lo} (zero-based, inclusive); identity of size `n` when lo > hi.
template <typename S>
DenseMatrix<S> fc_partial_product(const MatrixTuple<S>& W, std::size_t lo, std::size_t hi, std::size_t n) {
  if (lo > hi || hi >= W.size()) return DenseMatrix<S>::identity(n);
  DenseMatrix<S> P = W[lo];
  for (std::size_t l = lo + 1; l <= hi; ++l) P = W[l] * P;
  return P;
}

/// sum_l (W_H..W_{l+1})(W_H..W_{l+1})^T Z (W_{l-1}..W_1)^T (W_{l-1}..W_1)
template <typename S>
DenseMatrix<S> fc_ntk_apply(const MatrixTuple<S>& W, const DenseMatrix<S>& Z) {
  check_chain(W);
  const std::size_t H = W.size();
  const std::size_t d_out = W.back().rows();
  const std::size_t d_in = W.front().cols();
  if (Z.rows() != d_out || Z.cols() != d_in) throw ShapeMismatch("fc_ntk_apply: Z must have the shape of the product");
  DenseMatrix<S> out(d_out, d_in);
  for (std::size_t l = 0; l < H; ++l) {
    const DenseMatrix<S> left = l + 1 < H ? fc_partial_product(W, l + 1, H - 1, d_out) : DenseMatrix<S>::identity(d_out);
    const DenseMatrix<S> right = l > 0 ? fc_partial_product(W, 0, l - 1, d_in) : DenseMatrix<S>::identity(d_in);
    out += left * (left.transpose() * Z) * (right.transpose() * right);
  }
  return out;
}

/// Per-layer gradients P_l^T G Q_l^T of theta -> loss(W_H ... W_1) for the
/// function-space gradient G.
template <typename S>
MatrixTuple<S> fc_layer_gradients(const MatrixTuple<S>& W, const DenseMatrix<S>& G) {
  check_chain(W);
  const std::size_t H = W.size();
  const std::size_t d_out = W.back().rows();
  const std::size_t d_in = W.front().cols();
  MatrixTuple<S> out;
  for (std::size_t l = 0; l < H; ++l) {
    const DenseMatrix<S> left = l + 1 < H ? fc_partial_product(W, l + 1, H - 1, d_out) : DenseMatrix<S>::identity(d_out);
    const DenseMatrix<S> right = l > 0 ? fc_partial_product(W, 0, l - 1, d_in) : DenseMatrix<S>::identity(d_in);
    out.push_back(left.transpose() * G * right.transpose());
  }
  return out;
}

/// Kernel as a (d_H d_0) x (d_H d_0) matrix on row-major flattened Z.
DenseMatrix<double> fc_ntk_matrix(const MatrixTuple<double>& W);

/// M^p for symmetric positive semidefinite M. Eigenvalues below 1e-12 times the
/// largest are treated as zero; 0^0 = 1.
DenseMatrix<double> psd_power(const DenseMatrix<double>& M, double p);

/// sum_{j=1}^H (W W^T)^{(H-j)/H} Z (W^T W)^{(j-1)/H}
DenseMatrix<double> fc_A_operator(const DenseMatrix<double>& W, int H, const DenseMatrix<double>& Z);

/// Balanced tuple with product W from the thin SVD W = U S V^T:
/// W_1 = S^{1/H} V^T, W_l = S^{1/H} (1 < l < H), W_H = U S^{1/H}.
MatrixTuple<double> fc_balance(const DenseMatrix<double>& W, int H);

struct OrthogonalFiberReport {
  bool product_preserved = false;
  bool balance_preserved = false;
  bool ntk_preserved = false;
  double product_error = 0.0;
  double balance_error = 0.0;
  double ntk_error = 0.0;
  MatrixTuple<double> transformed;
};

/// Moves theta along (W_H G_{H-1}, G_{H-1}^{-1} W_{H-1} G_{H-2}, ..., G_1^{-1} W_1)
/// and reports which properties survive. For orthogonal G the inverse is the transpose.
OrthogonalFiberReport fc_orthogonal_fiber_check(const MatrixTuple<double>& theta, const MatrixTuple<double>& G);

/// loss(W) = ||W X - Y||_F^2
struct FcLoss {
  DenseMatrix<double> X;
  DenseMatrix<double> Y;
};

double fc_loss_value(const FcLoss& L, const DenseMatrix<double>& W);
DenseMatrix<double> fc_loss_gradient(const FcLoss& L, const DenseMatrix<double>& W);

struct FcFlowReport {
  double max_deviation = 0.0;  // max_t ||W_H(t)...W_1(t) - W(t)||_F
  double max_delta_drift = 0.0;  // max_t max_i ||Delta_i(t) - Delta_i(0)||_F
  std::vector<double> times;
  std::vector<DenseMatrix<double>> layer_products;
  std::vector<DenseMatrix<double>> product_flow;
};

/// Layer flow dW_l/dt = -grad_{W_l} against the product flow dW/dt = -A_W(grad loss(W))
/// with H = number of layers, on a fixed RK4 grid.
FcFlowReport fc_compare_flows(const MatrixTuple<double>& theta0, const FcLoss& L, double t_max = 1.0,
                              double step = 1e-3);

/// Runs the layer flow from two tuples with the same product and the same
/// invariants; returns max_t of the distance between their products.
double fc_product_divergence(const MatrixTuple<double>& a, const MatrixTuple<double>& b, const FcLoss& L,
                             double t_max = 1.0, double step = 1e-3);

/// Layer flow only; returns the product at the grid times.
FcFlowReport fc_layer_flow(const MatrixTuple<double>& theta0, const FcLoss& L, double t_max, double step);

/// Frobenius norm.
double frobenius(const DenseMatrix<double>& M);

}  // namespace ntk_geom
