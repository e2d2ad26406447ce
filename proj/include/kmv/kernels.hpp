#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "kmv/ensemble.hpp"
#include "kmv/models.hpp"

// Hot per-particle loops. Production kernels are OpenMP-parallel with
// deterministic blocked reductions: given the same inputs they return the
// same bits for any thread count (pass parallel = false to force the serial
// path). kernels::reference holds plain single-threaded implementations kept
// as oracles for the tests and the benchmark target.
namespace kmv::kernels {

inline constexpr int kMomentMaxOrder = 8;
inline constexpr int kMomentCount = 45;  // pairs (k, l) with k + l <= 8

constexpr int moment_index(int k, int l) {
  if (k < 0 || l < 0 || k + l > kMomentMaxOrder) return -1;
  const int s = k + l;
  return s * (s + 1) / 2 + k;
}

// Per-coordinate mean of the position block.
std::vector<double> ensemble_mean_x(const Ensemble& e, bool parallel = true);

// Mean-field force rows. Linear: -lambda (x_i - mean x), O(N). General:
// row i = mean_j H(z_i - z_j), O(N^2), self-term included.
void linear_force(const Ensemble& e, double lambda, std::span<double> out, bool parallel = true);
void general_force(const Ensemble& e, const PairKernelFn& h, std::span<double> out,
                   bool parallel = true);

// Interaction dispatch; `out` may be left empty for interaction-free specs.
void interaction(const Ensemble& e, const DriftSpec& spec, std::vector<double>& out,
                 bool parallel = true);

// Evaluates b1_single (+force when non-empty) and b2 for every particle.
void drift(const DriftSpec& spec, double t, const Ensemble& e, std::span<const double> force,
           std::span<double> dx, std::span<double> dy, bool parallel = true);

// Fills out[i*dim + c] = sqrt_dt * xi with xi standard normal, read from the
// counter-based stream of particle i at the given step.
void gaussian_increments(std::uint64_t seed, std::span<const std::uint64_t> stream_ids,
                         std::size_t n, int dim, std::uint64_t step_index, double sqrt_dt,
                         std::span<double> out, bool parallel = true);

// First particle whose position or velocity is non-finite or exceeds `limit`
// in magnitude; returns n when all entries are admissible.
std::size_t first_inadmissible(const Ensemble& e, double limit, bool parallel = true);

// All raw mixed-moment sums sum_i x_i^k y_i^l for k + l <= 8 in one pass
// (dim == 1), compensated and blocked. Divide by n for moments.
std::array<double, kMomentCount> raw_moment_sums(const Ensemble& e, bool parallel = true);

namespace reference {

std::vector<double> ensemble_mean_x(const Ensemble& e);
void general_force(const Ensemble& e, const PairKernelFn& h, std::span<double> out);
double mixed_moment_sum(const Ensemble& e, int k, int l);  // long-double plain loop

}  // namespace reference

}  // namespace kmv::kernels
