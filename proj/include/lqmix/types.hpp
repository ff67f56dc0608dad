#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lqmix {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;
using Index = Eigen::Index;

/// Quantile level q, strictly inside (0, 1).
class QuantileLevel {
 public:
  QuantileLevel() = default;
  explicit QuantileLevel(double q);

  double value() const noexcept { return q_; }
  operator double() const noexcept { return q_; }

 private:
  double q_ = 0.5;
};

// ---------------------------------------------------------------------------
// Error categories. Every failure raised by the library derives from Error so
// callers (the CLI in particular) can map them onto exit codes.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

#define LQMIX_DEFINE_ERROR(Name, tag)                             \
  class Name : public Error {                                     \
   public:                                                        \
    using Error::Error;                                           \
    const char* category() const noexcept override { return tag; } \
  };

LQMIX_DEFINE_ERROR(ParseError, "parse")
LQMIX_DEFINE_ERROR(StructuralError, "structure")
LQMIX_DEFINE_ERROR(TypeError, "type")
LQMIX_DEFINE_ERROR(SpecificationError, "specification")
LQMIX_DEFINE_ERROR(NameError, "name")
LQMIX_DEFINE_ERROR(DomainError, "domain")
LQMIX_DEFINE_ERROR(SingularDesignError, "singular-design")
LQMIX_DEFINE_ERROR(DegenerateProblemError, "degenerate-problem")
LQMIX_DEFINE_ERROR(ValidationError, "validation")
LQMIX_DEFINE_ERROR(NumericalError, "numerical")
LQMIX_DEFINE_ERROR(SizeError, "size")
LQMIX_DEFINE_ERROR(BootstrapFailure, "bootstrap")
LQMIX_DEFINE_ERROR(PlanError, "plan")
LQMIX_DEFINE_ERROR(SearchFailure, "search")

#undef LQMIX_DEFINE_ERROR

inline QuantileLevel::QuantileLevel(double q) : q_(q) {
  if (!(q > 0.0 && q < 1.0))
    throw DomainError("quantile level must lie in (0,1), got " + std::to_string(q));
}

}  // namespace lqmix
