#include "ntk_geom/fully_connected.hpp"

#include "ntk_geom/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ntk_geom {

namespace {

State pack(const MatrixTuple<double>& W) {
  State y;
  for (const auto& M : W) y.insert(y.end(), M.data().begin(), M.data().end());
  return y;
}

MatrixTuple<double> unpack(const State& y, const MatrixTuple<double>& shapes) {
  MatrixTuple<double> W;
  std::size_t off = 0;
  for (const auto& M : shapes) {
    const std::size_t n = M.rows() * M.cols();
    W.emplace_back(M.rows(), M.cols(), std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(off),
                                                           y.begin() + static_cast<std::ptrdiff_t>(off + n)));
    off += n;
  }
  return W;
}

double max_delta_distance(const MatrixTuple<double>& W, const std::vector<DenseMatrix<double>>& delta0) {
  const auto d = fc_delta_matrices(W);
  double m = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) m = std::max(m, frobenius(d[i] - delta0[i]));
  return m;
}

}  // namespace

double frobenius(const DenseMatrix<double>& M) {
  double s = 0.0;
  for (double x : M.data()) s += x * x;
  return std::sqrt(s);
}

DenseMatrix<double> fc_ntk_matrix(const MatrixTuple<double>& W) {
  check_chain(W);
  const std::size_t r = W.back().rows();
  const std::size_t c = W.front().cols();
  DenseMatrix<double> K(r * c, r * c);
  for (std::size_t j = 0; j < r * c; ++j) {
    DenseMatrix<double> Z(r, c);
    Z(j / c, j % c) = 1.0;
    const auto KZ = fc_ntk_apply(W, Z);
    K.set_column(j, KZ.data());
  }
  return K;
}

DenseMatrix<double> psd_power(const DenseMatrix<double>& M, double p) {
  if (M.rows() != M.cols()) throw ShapeMismatch("psd_power: matrix must be square");
  if (p == 0.0) return DenseMatrix<double>::identity(M.rows());
  Eigen::MatrixXd A = to_eigen(M);
  A = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  Eigen::VectorXd d = eig.eigenvalues();
  // eigenvalues at roundoff level count as zero
  const double floor = 1e-12 * std::max(d.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = d(i) <= floor ? 0.0 : std::pow(d(i), p);
  return from_eigen(eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose());
}

DenseMatrix<double> fc_A_operator(const DenseMatrix<double>& W, int H, const DenseMatrix<double>& Z) {
  if (H < 1) throw PreconditionError("fc_A_operator: H must be at least 1");
  if (Z.rows() != W.rows() || Z.cols() != W.cols()) throw ShapeMismatch("fc_A_operator: Z must have the shape of W");
  const DenseMatrix<double> left = W * W.transpose();
  const DenseMatrix<double> right = W.transpose() * W;
  DenseMatrix<double> out(W.rows(), W.cols());
  for (int j = 1; j <= H; ++j) {
    out += psd_power(left, static_cast<double>(H - j) / H) * Z * psd_power(right, static_cast<double>(j - 1) / H);
  }
  return out;
}

MatrixTuple<double> fc_balance(const DenseMatrix<double>& W, int H) {
  if (H < 1) throw PreconditionError("fc_balance: H must be at least 1");
  if (H == 1) return {W};
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(W), Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd s = svd.singularValues();
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = std::pow(s(i), 1.0 / H);
  const Eigen::MatrixXd root = s.asDiagonal();
  MatrixTuple<double> out;
  out.push_back(from_eigen(root * svd.matrixV().transpose()));
  for (int l = 1; l + 1 < H; ++l) out.push_back(from_eigen(root));
  out.push_back(from_eigen(svd.matrixU() * root));
  return out;
}

OrthogonalFiberReport fc_orthogonal_fiber_check(const MatrixTuple<double>& theta, const MatrixTuple<double>& G) {
  check_chain(theta);
  const std::size_t H = theta.size();
  if (G.size() + 1 != H) throw ShapeMismatch("orthogonal fiber check: need H-1 matrices G_1..G_{H-1}");
  for (const auto& W : theta)
    if (W.rows() != W.cols()) throw PreconditionError("orthogonal fiber check: layers must be square");
  for (std::size_t i = 0; i < G.size(); ++i) {
    if (G[i].rows() != theta[i].rows() || G[i].cols() != theta[i].rows()) {
      throw ShapeMismatch("G_" + std::to_string(i + 1) + " must be square of the hidden width");
    }
  }
  double scale = 1.0;
  for (const auto& W : theta) scale = std::max(scale, frobenius(W) * frobenius(W));
  for (const auto& D : fc_delta_matrices(theta)) {
    if (frobenius(D) > 1e-8 * scale) throw PreconditionError("orthogonal fiber check: the tuple is not balanced");
  }

  std::vector<Eigen::MatrixXd> Ginv;
  for (const auto& g : G) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(to_eigen(g));
    if (!lu.isInvertible()) throw PreconditionError("orthogonal fiber check: G matrices must be invertible");
    Ginv.push_back(lu.inverse());
  }
  OrthogonalFiberReport rep;
  for (std::size_t l = 0; l < H; ++l) {
    Eigen::MatrixXd M = to_eigen(theta[l]);
    if (l > 0) M = M * to_eigen(G[l - 1]);
    if (l + 1 < H) M = Ginv[l] * M;
    rep.transformed.push_back(from_eigen(M));
  }

  const auto P0 = fc_compose(theta);
  const auto P1 = fc_compose(rep.transformed);
  rep.product_error = frobenius(P1 - P0) / std::max(1.0, frobenius(P0));
  rep.product_preserved = rep.product_error <= 1e-10;

  for (const auto& D : fc_delta_matrices(rep.transformed)) rep.balance_error = std::max(rep.balance_error, frobenius(D));
  rep.balance_error /= scale;
  rep.balance_preserved = rep.balance_error <= 1e-10;

  const std::size_t r = P0.rows(), c = P0.cols();
  for (std::size_t j = 0; j < r * c; ++j) {
    DenseMatrix<double> Z(r, c);
    Z(j / c, j % c) = 1.0;
    const auto a = fc_ntk_apply(theta, Z);
    const auto b = fc_ntk_apply(rep.transformed, Z);
    rep.ntk_error = std::max(rep.ntk_error, frobenius(a - b) / std::max(1.0, frobenius(a)));
  }
  rep.ntk_preserved = rep.ntk_error <= 1e-10;
  return rep;
}

double fc_loss_value(const FcLoss& L, const DenseMatrix<double>& W) { return std::pow(frobenius(W * L.X - L.Y), 2); }

DenseMatrix<double> fc_loss_gradient(const FcLoss& L, const DenseMatrix<double>& W) {
  return 2.0 * ((W * L.X - L.Y) * L.X.transpose());
}

FcFlowReport fc_layer_flow(const MatrixTuple<double>& theta0, const FcLoss& L, double t_max, double step) {
  check_chain(theta0);
  FcFlowReport rep;
  const auto delta0 = fc_delta_matrices(theta0);
  auto rhs = [&](double, const State& y, State& dy) {
    const auto W = unpack(y, theta0);
    const auto grads = fc_layer_gradients(W, fc_loss_gradient(L, fc_compose(W)));
    dy = pack(grads);
    for (auto& x : dy) x = -x;
  };
  auto observer = [&](double t, const State& y) {
    const auto W = unpack(y, theta0);
    rep.times.push_back(t);
    rep.layer_products.push_back(fc_compose(W));
    rep.max_delta_drift = std::max(rep.max_delta_drift, max_delta_distance(W, delta0));
    return true;
  };
  StepControl c;
  c.method = Integrator::RK4;
  c.step = step;
  State y = pack(theta0);
  integrate(rhs, y, 0.0, t_max, c, observer);
  return rep;
}

FcFlowReport fc_compare_flows(const MatrixTuple<double>& theta0, const FcLoss& L, double t_max, double step) {
  FcFlowReport rep = fc_layer_flow(theta0, L, t_max, step);
  const int H = static_cast<int>(theta0.size());
  const DenseMatrix<double> W0 = fc_compose(theta0);
  auto rhs = [&](double, const State& y, State& dy) {
    const DenseMatrix<double> W(W0.rows(), W0.cols(), y);
    const auto v = fc_A_operator(W, H, fc_loss_gradient(L, W));
    dy = v.data();
    for (auto& x : dy) x = -x;
  };
  auto observer = [&](double, const State& y) {
    rep.product_flow.emplace_back(W0.rows(), W0.cols(), y);
    return true;
  };
  StepControl c;
  c.method = Integrator::RK4;
  c.step = step;
  State y = W0.data();
  integrate(rhs, y, 0.0, t_max, c, observer);
  const std::size_t n = std::min(rep.layer_products.size(), rep.product_flow.size());
  for (std::size_t i = 0; i < n; ++i)
    rep.max_deviation = std::max(rep.max_deviation, frobenius(rep.layer_products[i] - rep.product_flow[i]));
  return rep;
}

double fc_product_divergence(const MatrixTuple<double>& a, const MatrixTuple<double>& b, const FcLoss& L, double t_max,
                             double step) {
  const auto ra = fc_layer_flow(a, L, t_max, step);
  const auto rb = fc_layer_flow(b, L, t_max, step);
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(ra.times.size(), rb.times.size()); ++i)
    m = std::max(m, frobenius(ra.layer_products[i] - rb.layer_products[i]));
  return m;
}

}  // namespace ntk_geom
