#pragma once

#include <stdexcept>
#include <string>

namespace qbo {

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Factorization failed even at the maximum jitter. Usually means a
// degenerate pool (duplicated points under a near-noiseless model).
struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularTriangular : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionTooLarge : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A recorded observation exceeds the regret reference value.
struct InconsistentMax : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qbo
