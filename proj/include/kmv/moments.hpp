#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kmv/ensemble.hpp"
#include "kmv/simulator.hpp"

namespace kmv {

// Empirical moment functionals on R^2 (dim == 1 throughout; higher
// dimensions raise UnsupportedDimensionError).

// (1/N) sum_i x_i^k y_i^l, compensated summation.
double mixed_moment(const Ensemble& e, int k, int l);

// a_k = m_{k,0} + m_{0,k}.
double additive_moment(const Ensemble& e, int k);

// Trapezoidal rule over recorded snapshot moments: int_0^T m_{k,l}(mu_t) dt.
double time_integrated_moment(const TrajectoryRecord& traj, int k, int l);

// Same rule for a product of two moment curves:
// int_0^T m_{k1,l1}(mu_t) m_{k2,l2}(mu_t) dt.
double time_integrated_product(const TrajectoryRecord& traj, int k1, int l1, int k2, int l2);

// Exact W1 between two 1-d empirical measures with the same sample size:
// mean absolute difference of order statistics.
double wasserstein1_1d(std::vector<double> a, std::vector<double> b);

// Unequal sizes: the larger sample is subsampled uniformly without
// replacement (deterministic given seed), then matched as above.
double wasserstein1_1d_subsampled(std::span<const double> a, std::span<const double> b,
                                  std::uint64_t seed);

// Sliced W1 proxy on R^2: average over n_proj uniformly random unit
// directions of the 1-d W1 between the projected samples.
double sliced_w1(const Ensemble& a, const Ensemble& b, int n_proj, std::uint64_t seed);

}  // namespace kmv
