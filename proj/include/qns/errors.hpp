#pragma once

#include <stdexcept>
#include <string>

namespace qns {

/// Vector or matrix sizes that do not agree with the owning problem.
class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A matrix expected to be symmetric positive definite failed factorization,
/// or a curvature term that must be positive was not.
class NotPositiveDefinite : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A step formula hit a vanishing denominator: either the point is already
/// optimal over the relevant subspace or the inputs are linearly dependent.
class DegenerateStep : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class OutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Malformed problem or experiment description.
class InvalidSpec : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace qns
