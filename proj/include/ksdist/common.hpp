#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ksd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = std::size_t;

/// Execution policy for the data-parallel kernels. Both paths accumulate
/// per-index partial results and reduce them in index order, so `parallel`
/// returns bit-identical values to `serial` for any thread count.
enum class Exec { serial, parallel };

/// Bad input that the caller can fix (malformed config, wrong dimension).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector/matrix dimensions that do not agree.
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// A computation that ran but produced an unusable result
/// (non-SPD moment matrix, disconnected graph, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_dim(Index expected, Index got, const char* what) {
  if (expected != got) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                         ", got " + std::to_string(got));
  }
}

/// Number of OpenMP workers available (1 when built without OpenMP).
int max_threads();
/// Caps the OpenMP worker count; no-op without OpenMP.
void set_threads(int n);

}  // namespace ksd
