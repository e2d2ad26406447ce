#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "kmv/errors.hpp"

namespace kmv {

// State of N particles at one time: positions X and velocities Y, each a
// flat n x dim row-major array.
struct Ensemble {
  int dim = 1;
  std::size_t n = 0;
  double t = 0.0;
  std::vector<double> xs;
  std::vector<double> ys;

  static Ensemble zeros(std::size_t n, int dim) {
    Ensemble e;
    e.dim = dim;
    e.n = n;
    e.xs.assign(n * static_cast<std::size_t>(dim), 0.0);
    e.ys.assign(n * static_cast<std::size_t>(dim), 0.0);
    return e;
  }

  std::span<const double> x(std::size_t i) const {
    return {xs.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  std::span<const double> y(std::size_t i) const {
    return {ys.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  std::span<double> x(std::size_t i) {
    return {xs.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  std::span<double> y(std::size_t i) {
    return {ys.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }

  void validate() const {
    if (n < 1) throw InvalidModelError("ensemble must contain at least one particle");
    if (dim < 1) throw InvalidModelError("ensemble dimension must be positive");
    const std::size_t len = n * static_cast<std::size_t>(dim);
    if (xs.size() != len || ys.size() != len)
      throw InvalidModelError("ensemble arrays do not match n x dim");
  }

  // Index of the first particle with a non-finite coordinate, or n if none.
  std::size_t first_non_finite() const {
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
        return i / static_cast<std::size_t>(dim);
    return n;
  }
};

// Relabels particles: out[i] = in[perm[i]].
inline Ensemble permute(const Ensemble& e, std::span<const std::size_t> perm) {
  Ensemble out = Ensemble::zeros(e.n, e.dim);
  out.t = e.t;
  const auto d = static_cast<std::size_t>(e.dim);
  for (std::size_t i = 0; i < e.n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      out.xs[i * d + c] = e.xs[perm[i] * d + c];
      out.ys[i * d + c] = e.ys[perm[i] * d + c];
    }
  }
  return out;
}

}  // namespace kmv
