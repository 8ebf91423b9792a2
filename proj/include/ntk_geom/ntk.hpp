#pragma once

// Jacobian of the parametrization map and the neural tangent kernel
// K = J J^T = sum_i J_i J_i^T.

#include "ntk_geom/conv_core.hpp"
#include "ntk_geom/dense.hpp"

#include <span>
#include <vector>

namespace ntk_geom {

template <typename S>
using NTKMatrix = DenseMatrix<S>;

template <typename S>
struct JacobianBlocks {
  std::vector<DenseMatrix<S>> blocks;  // k x |w_i|

  /// [J_1 | ... | J_H]
  DenseMatrix<S> full() const {
    std::size_t cols = 0;
    for (const auto& b : blocks) cols += b.cols();
    const std::size_t rows = blocks.empty() ? 0 : blocks.front().rows();
    DenseMatrix<S> J(rows, cols);
    std::size_t off = 0;
    for (const auto& b : blocks) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < b.cols(); ++c) J(r, off + c) = b(r, c);
      off += b.cols();
    }
    return J;
  }
};

/// Block J_i built by substituting the standard basis of layer i into compose.
/// Exact in rational arithmetic.
template <typename S>
JacobianBlocks<S> jacobian_blocks(const Architecture& arch, const ParamTuple<S>& theta) {
  check_params(arch, theta);
  const std::size_t k = arch.filter_size();
  JacobianBlocks<S> out;
  for (std::size_t i = 0; i < arch.depth(); ++i) {
    DenseMatrix<S> Ji(k, theta[i].size());
    ParamTuple<S> probe = theta;
    for (std::size_t j = 0; j < theta[i].size(); ++j) {
      probe[i] = FilterTensor<S>::zeros(theta[i].shape());
      probe[i][j] = S(1);
      const auto col = compose(arch, probe);
      Ji.set_column(j, col.entries());
    }
    out.blocks.push_back(std::move(Ji));
  }
  return out;
}

/// sum_i mu(w_1, ..., wdot_i, ..., w_H)
template <typename S>
EndToEndFilter<S> directional_derivative(const Architecture& arch, const ParamTuple<S>& theta,
                                         const ParamTuple<S>& theta_dot) {
  check_params(arch, theta);
  check_params(arch, theta_dot);
  EndToEndFilter<S> acc = EndToEndFilter<S>::zeros(arch.end_to_end_shape());
  for (std::size_t i = 0; i < arch.depth(); ++i) {
    ParamTuple<S> probe = theta;
    probe[i] = theta_dot[i];
    const auto term = compose(arch, probe);
    for (std::size_t r = 0; r < acc.size(); ++r) acc[r] += term[r];
  }
  return acc;
}

/// Per-layer terms K_i = J_i J_i^T.
template <typename S>
std::vector<NTKMatrix<S>> layer_kernels(const Architecture& arch, const ParamTuple<S>& theta) {
  const auto J = jacobian_blocks(arch, theta);
  std::vector<NTKMatrix<S>> out;
  for (const auto& b : J.blocks) out.push_back(b * b.transpose());
  return out;
}

template <typename S>
NTKMatrix<S> ntk(const Architecture& arch, const ParamTuple<S>& theta) {
  const auto terms = layer_kernels(arch, theta);
  NTKMatrix<S> K = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) K += terms[i];
  return K;
}

/// Function-space velocity K g for a cotangent g.
template <typename S>
std::vector<S> ntk_apply(const NTKMatrix<S>& K, std::span<const S> g) {
  return K.apply(g);
}

/// Kernel K^(delta)(v) together with the fiber point it was evaluated at.
struct FunctionKernel {
  NTKMatrix<double> kernel;
  ParamTuple<double> representative;  // rescaled to delta, signs canonical
  std::size_t fiber_classes = 0;
  int jacobian_rank = 0;
};

/// Kernel of an end-to-end filter for prescribed invariants delta. Requires an
/// architecture for which the kernel is parameter independent; throws
/// SingularPoint when the fiber is not unique or the Jacobian drops rank and
/// FiberNotFound when numerical inversion fails.
FunctionKernel kernel_of_function(const Architecture& arch, const EndToEndFilter<double>& v,
                                  std::span<const double> delta);

NTKMatrix<double> ntk_of_function(const Architecture& arch, const EndToEndFilter<double>& v,
                                  std::span<const double> delta);

/// Kernel at a parameter tuple after rescaling it to the invariants delta.
FunctionKernel kernel_at_scaled(const Architecture& arch, const ParamTuple<double>& theta,
                                std::span<const double> delta);

}  // namespace ntk_geom
