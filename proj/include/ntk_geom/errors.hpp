#pragma once

#include <stdexcept>
#include <string>

namespace ntk_geom {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid architecture, parameter or tensor shapes.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// A precondition on the arguments does not hold (wrong architecture class, bad option).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Some layer filter is identically zero where nonzero filters are required.
class ZeroFilter : public Error {
 public:
  using Error::Error;
};

/// The end-to-end filter lies on the singular locus (non-unique fiber or rank drop).
class SingularPoint : public Error {
 public:
  using Error::Error;
};

/// Numerical fiber inversion did not converge to a parametrization.
class FiberNotFound : public Error {
 public:
  using Error::Error;
};

/// The filter does not factor according to the architecture.
class NoFactorization : public Error {
 public:
  using Error::Error;
};

/// Root orbits could not be matched within tolerance.
class AmbiguousGrouping : public Error {
 public:
  using Error::Error;
};

/// The filter violates the defining equation of the neuromanifold.
class NotOnManifold : public Error {
 public:
  using Error::Error;
};

/// Training inputs do not determine a positive definite quadratic form.
class DegenerateData : public Error {
 public:
  using Error::Error;
};

/// Adaptive integration step fell below the minimum step size.
class StepSizeUnderflow : public Error {
 public:
  using Error::Error;
};

class UnknownExample : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (JSON syntax or missing fields).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ntk_geom
