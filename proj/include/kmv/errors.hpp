#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kmv {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A model definition violates its contract (non-finite parameter,
// non-SPD covariance, bad dimensions, ...).
struct InvalidModelError : Error {
  using Error::Error;
};

// A run configuration is malformed or inconsistent.
struct ConfigError : Error {
  using Error::Error;
};

// A simulated coordinate left the admissible range (|z| > 1e8 or non-finite).
struct BlowUpError : Error {
  BlowUpError(const std::string& what, double t_, std::uint64_t step_, std::size_t particle_)
      : Error(what), t(t_), step(step_), particle(particle_) {}
  double t = 0.0;
  std::uint64_t step = 0;
  std::size_t particle = 0;
};

// Not enough snapshots / moment orders to perform the requested computation.
struct InsufficientDataError : Error {
  using Error::Error;
};

// Requested a density value where the law is singular.
struct DegenerateDensityError : Error {
  using Error::Error;
};

// The moment matrix is exactly singular; carries the numerical rank.
struct SingularSystemError : Error {
  SingularSystemError(const std::string& what, int rank_) : Error(what), rank(rank_) {}
  int rank = 0;
};

// Moment functionals are defined for scalar position/velocity only.
struct UnsupportedDimensionError : Error {
  using Error::Error;
};

}  // namespace kmv
