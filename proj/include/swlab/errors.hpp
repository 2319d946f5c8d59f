#pragma once

#include <stdexcept>
#include <string>

namespace swlab {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when the direction covariance A = (1/p) sum theta theta^T is not
// invertible above the eigenvalue floor (typically p <= d or degenerate axes).
struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown by operations that require supports with pairwise-distinct rows.
struct NotInUError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when an enumeration or LP instance exceeds its desk-scale guard.
struct SizeGuardError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace swlab
