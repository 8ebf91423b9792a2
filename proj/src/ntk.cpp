#include "ntk_geom/ntk.hpp"

#include "ntk_geom/fiber.hpp"
#include "ntk_geom/invariants.hpp"

namespace ntk_geom {

FunctionKernel kernel_at_scaled(const Architecture& arch, const ParamTuple<double>& theta,
                                std::span<const double> delta) {
  check_params(arch, theta);
  if (delta.size() + 1 != arch.depth()) throw ShapeMismatch("need H-1 invariants");
  FunctionKernel out;
  out.representative = canonical_signs(arch.depth() == 1 ? theta : rescale_to(theta, delta));
  out.kernel = ntk(arch, out.representative);
  out.jacobian_rank = numerical_rank(to_eigen(jacobian_blocks(arch, out.representative).full()));
  out.fiber_classes = 1;
  return out;
}

FunctionKernel kernel_of_function(const Architecture& arch, const EndToEndFilter<double>& v,
                                  std::span<const double> delta) {
  if (!arch.kernel_is_parameter_independent()) {
    throw PreconditionError(
        "the kernel of this architecture depends on the parameters: strides s_1..s_{H-1} must exceed one (1-D) "
        "or every layer needs two filter sizes larger than one (D > 1)");
  }
  if (delta.size() + 1 != arch.depth()) throw ShapeMismatch("need H-1 invariants");
  if (v.shape() != arch.end_to_end_shape()) throw ShapeMismatch("end-to-end filter shape does not match architecture");

  FiberResult fiber;
  if (arch.depth() == 1) {
    fiber.representatives.push_back(ParamTuple<double>{{FilterTensor<double>(arch.layer(0).filter_shape, v.entries())}});
  } else if (is_two_layer_running_architecture(arch)) {
    fiber = recover_two_layer(arch, v);
  } else if (arch.signal_dim() == 1) {
    fiber = enumerate_factorizations(arch, v);
  } else {
    fiber = invert_numeric(arch, v);
  }
  if (fiber.class_count() != 1) {
    throw SingularPoint("fiber has " + std::to_string(fiber.class_count()) + " scaling classes; " + fiber.diagnostics);
  }
  FunctionKernel out = kernel_at_scaled(arch, fiber.representatives.front(), delta);
  out.fiber_classes = fiber.class_count();
  if (out.jacobian_rank < static_cast<int>(arch.neuromanifold_dim())) {
    throw SingularPoint("Jacobian rank " + std::to_string(out.jacobian_rank) + " is below the neuromanifold dimension " +
                        std::to_string(arch.neuromanifold_dim()));
  }
  return out;
}

NTKMatrix<double> ntk_of_function(const Architecture& arch, const EndToEndFilter<double>& v,
                                  std::span<const double> delta) {
  return kernel_of_function(arch, v, delta).kernel;
}

}  // namespace ntk_geom
