#include "ntk_geom/invariants.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ntk_geom {

namespace {

void require_nonzero(const ParamTuple<double>& theta) {
  for (std::size_t l = 0; l < theta.depth(); ++l)
    if (theta[l].is_zero()) throw ZeroFilter("filter " + std::to_string(l + 1) + " is zero");
}

double product_minus(std::span<const double> offsets, double x, double C) {
  double p = 1.0;
  for (double n : offsets) p *= x + n;
  return p - C;
}

double product_derivative(std::span<const double> offsets, double x) {
  // d/dx prod (x + n_l) = sum_l prod_{j != l} (x + n_j)
  double s = 0.0;
  for (std::size_t l = 0; l < offsets.size(); ++l) {
    double p = 1.0;
    for (std::size_t j = 0; j < offsets.size(); ++j)
      if (j != l) p *= x + offsets[j];
    s += p;
  }
  return s;
}

Eigen::MatrixXd constraint_matrix(const ParamTuple<double>& theta) {
  const std::size_t H = theta.depth();
  std::size_t n = 0;
  std::vector<std::size_t> off;
  for (const auto& w : theta.filters) {
    off.push_back(n);
    n += w.size();
  }
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(H - 1), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i + 1 < H; ++i) {
    for (std::size_t j = 0; j < theta[0].size(); ++j) C(i, off[0] + j) -= theta[0][j];
    for (std::size_t j = 0; j < theta[i + 1].size(); ++j) C(i, off[i + 1] + j) += theta[i + 1][j];
  }
  return C;
}

Eigen::MatrixXd to_eigen_matrix(const DenseMatrix<double>& m) { return to_eigen(m); }

}  // namespace

double solve_product_equation(std::span<const double> offsets, double C) {
  if (offsets.empty()) throw PreconditionError("solve_product_equation: no factors");
  if (!(C > 0.0)) throw PreconditionError("solve_product_equation: right-hand side must be positive");
  const double n_min = *std::min_element(offsets.begin(), offsets.end());
  double lo = -n_min;
  double hi = 1.0;
  while (product_minus(offsets, hi, C) <= 0.0) {
    hi = 2.0 * hi + 1.0;
    if (!std::isfinite(hi)) throw PreconditionError("solve_product_equation: no upper bracket");
  }
  if (!(product_minus(offsets, lo, C) < 0.0 && product_minus(offsets, hi, C) > 0.0)) {
    throw PreconditionError("solve_product_equation: bracket has no sign change");
  }
  while (hi - lo > 1e-14) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (product_minus(offsets, mid, C) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 2; ++it) {
    const double d = product_derivative(offsets, x);
    if (d <= 0.0) break;
    const double next = x - product_minus(offsets, x, C) / d;
    if (next > -n_min) x = next;
  }
  return x;
}

std::vector<std::vector<double>> solve_scaling(const ParamTuple<double>& theta, std::span<const double> delta_target) {
  require_nonzero(theta);
  const std::size_t H = theta.depth();
  if (delta_target.size() + 1 != H) throw ShapeMismatch("solve_scaling: need H-1 invariants");

  std::vector<double> sq(H);
  for (std::size_t l = 0; l < H; ++l) sq[l] = theta[l].squared_norm();

  // beta_l = ||lambda_l w_l||^2 = beta_1 + P_l with P_l the partial sums of delta.
  std::vector<double> partial(H, 0.0);
  for (std::size_t l = 1; l < H; ++l) partial[l] = partial[l - 1] + delta_target[l - 1];

  std::vector<double> beta(H);
  if (H == 1) {
    beta[0] = sq[0];
  } else if (H == 2) {
    // beta (beta + delta) = ||w_1||^2 ||w_2||^2, written without cancellation.
    const double C = sq[0] * sq[1];
    const double d = delta_target[0];
    const double root = std::sqrt(d * d + 4.0 * C);
    beta[0] = d >= 0.0 ? 2.0 * C / (d + root) : 0.5 * (root - d);
    beta[1] = beta[0] + d;
  } else {
    double C = 1.0;
    for (double s : sq) C *= s;
    const double n1 = std::max(0.0, -*std::min_element(partial.begin(), partial.end())) + 1.0;
    std::vector<double> offsets(H);
    for (std::size_t l = 0; l < H; ++l) offsets[l] = n1 + partial[l];
    const double x = solve_product_equation(offsets, C);
    for (std::size_t l = 0; l < H; ++l) beta[l] = x + offsets[l];
  }

  std::vector<double> magnitude(H);
  for (std::size_t l = 0; l < H; ++l) magnitude[l] = std::sqrt(beta[l] / sq[l]);

  std::vector<std::vector<double>> tuples;
  const std::size_t count = std::size_t{1} << (H - 1);
  for (std::size_t mask = 0; mask < count; ++mask) {
    std::vector<double> lam(H);
    double sign_product = 1.0;
    for (std::size_t l = 0; l + 1 < H; ++l) {
      const double sign = (mask >> l) & 1U ? -1.0 : 1.0;
      lam[l] = sign * magnitude[l];
      sign_product *= sign;
    }
    lam[H - 1] = sign_product * magnitude[H - 1];
    tuples.push_back(std::move(lam));
  }
  return tuples;
}

ParamTuple<double> rescale_to(const ParamTuple<double>& theta, std::span<const double> delta) {
  const auto tuples = solve_scaling(theta, delta);
  return rescale<double>(theta, tuples.front());
}

TangentBasis tangent_basis_theta_delta(const Architecture& arch, const ParamTuple<double>& theta) {
  check_params(arch, theta);
  require_nonzero(theta);
  const auto n = static_cast<Eigen::Index>(arch.param_count());
  TangentBasis out;
  if (arch.depth() == 1) {
    out.as_columns = Eigen::MatrixXd::Identity(n, n);
  } else {
    const Eigen::MatrixXd C = constraint_matrix(theta);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullV);
    const int r = numerical_rank(C);
    out.as_columns = svd.matrixV().rightCols(n - r);
  }
  for (Eigen::Index c = 0; c < out.as_columns.cols(); ++c) {
    std::vector<double> col(out.as_columns.col(c).data(), out.as_columns.col(c).data() + n);
    out.vectors.push_back(unflatten<double>(arch, col));
  }
  return out;
}

std::vector<double> tangent_constraint_residuals(const ParamTuple<double>& theta, const ParamTuple<double>& direction) {
  auto dot = [](const FilterTensor<double>& a, const FilterTensor<double>& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
    return s;
  };
  std::vector<double> res;
  const double base = dot(theta[0], direction[0]);
  for (std::size_t i = 1; i < theta.depth(); ++i) res.push_back(dot(theta[i], direction[i]) - base);
  return res;
}

SubmersionReport submersion_check(const Architecture& arch, const ParamTuple<double>& theta) {
  const TangentBasis basis = tangent_basis_theta_delta(arch, theta);
  const Eigen::MatrixXd J = to_eigen_matrix(jacobian_blocks(arch, theta).full());

  SubmersionReport rep;
  rep.expected_dim = static_cast<int>(arch.neuromanifold_dim());
  rep.rank = numerical_rank(J * basis.as_columns);

  // Kernel directions (0, ..., -w_i, w_{i+1}, ..., 0) against the constraints.
  const std::size_t H = arch.depth();
  if (H == 1) {
    rep.kernel_intersection_trivial = true;
  } else {
    const auto n = static_cast<Eigen::Index>(arch.param_count());
    Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(H - 1));
    std::vector<std::size_t> off(H, 0);
    for (std::size_t l = 1; l < H; ++l) off[l] = off[l - 1] + theta[l - 1].size();
    for (std::size_t i = 0; i + 1 < H; ++i) {
      for (std::size_t j = 0; j < theta[i].size(); ++j) kernel(off[i] + j, i) = -theta[i][j];
      for (std::size_t j = 0; j < theta[i + 1].size(); ++j) kernel(off[i + 1] + j, i) = theta[i + 1][j];
    }
    rep.kernel_intersection_trivial = numerical_rank(constraint_matrix(theta) * kernel) == static_cast<int>(H - 1);
  }
  rep.bijective = rep.kernel_intersection_trivial && rep.rank == static_cast<int>(basis.as_columns.cols()) &&
                  rep.rank == rep.expected_dim;
  return rep;
}

double pushforward_metric(const NTKMatrix<double>& K, std::span<const double> vdot1, std::span<const double> vdot2) {
  const auto k = static_cast<Eigen::Index>(K.rows());
  if (vdot1.size() != K.rows() || vdot2.size() != K.rows()) throw ShapeMismatch("pushforward_metric: vector length");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(to_eigen(K));
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double cutoff = 1e-9 * ev.cwiseAbs().maxCoeff();
  Eigen::MatrixXd basis(k, 0);
  Eigen::VectorXd inv_ev(0);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (ev(i) > cutoff) {
      basis.conservativeResize(k, basis.cols() + 1);
      basis.col(basis.cols() - 1) = eig.eigenvectors().col(i);
      inv_ev.conservativeResize(inv_ev.size() + 1);
      inv_ev(inv_ev.size() - 1) = 1.0 / ev(i);
    }
  }
  if (basis.cols() == 0) throw SingularPoint("pushforward_metric: kernel is zero");
  const Eigen::Map<const Eigen::VectorXd> a(vdot1.data(), k);
  const Eigen::Map<const Eigen::VectorXd> b(vdot2.data(), k);
  auto check_tangent = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd orth = x - basis * (basis.transpose() * x);
    if (orth.norm() > 1e-8 * x.norm()) {
      throw PreconditionError("pushforward_metric: vector is not tangent to the neuromanifold (normal component " +
                              std::to_string(orth.norm() / std::max(x.norm(), 1e-300)) + " relative)");
    }
  };
  const Eigen::VectorXd av = a, bv = b;
  check_tangent(av);
  check_tangent(bv);
  const Eigen::VectorXd pa = basis.transpose() * av;
  const Eigen::VectorXd pb = basis.transpose() * bv;
  return pa.dot(inv_ev.asDiagonal() * pb);
}

double pushforward_metric(const Architecture& arch, const EndToEndFilter<double>& v, std::span<const double> delta,
                          std::span<const double> vdot1, std::span<const double> vdot2) {
  return pushforward_metric(ntk_of_function(arch, v, delta), vdot1, vdot2);
}

}  // namespace ntk_geom
