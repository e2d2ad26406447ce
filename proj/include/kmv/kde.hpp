#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "kmv/ensemble.hpp"

namespace kmv {

// Compactly supported product kernels on R^{2 dim}, normalized to integrate
// to 1 (verified by quadrature at construction).
enum class KernelProfile { epanechnikov, gaussian_truncated, uniform_box };

struct Kernel {
  KernelProfile profile = KernelProfile::epanechnikov;
  int dim = 1;            // state dimension d; the kernel lives on R^{2d}
  double support = 1.0;   // half-width of the support per coordinate
  double l2_norm_sq = 0.0;
  double sup_norm = 0.0;
  int order = 2;  // vanishing moments

  static Kernel make(KernelProfile profile, int dim);

  // 1-d profile factor; the kernel value is the product over 2d coordinates.
  double profile_1d(double u) const;
  double eval(std::span<const double> u) const;  // u in kernel units, length 2d
};

// Admissible bandwidths: geometric grid inside [(log^2 n / n)^{1/d}, 1],
// at most n points.
struct BandwidthGrid {
  std::vector<double> hs;
  std::size_t n = 0;
  int dim = 1;

  static double min_bandwidth(std::size_t n, int dim);
  static BandwidthGrid geometric(std::size_t n, int dim, double ratio = 1.25);
  static BandwidthGrid with_count(std::size_t n, int dim, int count);
  void validate() const;
};

// Cell-hashed index over the 2d state coordinates; gather() returns the
// particle indices within one cell of a query, in deterministic order.
class SpatialIndex {
 public:
  SpatialIndex(const Ensemble& e, double cell_size);
  std::vector<std::size_t> gather(std::span<const double> x0, std::span<const double> y0) const;

 private:
  const Ensemble& e_;
  double cell_ = 1.0;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
  std::uint64_t key(std::span<const double> x, std::span<const double> y) const;
};

// (1/N) sum_i K_h(x0 - x_i, y0 - y_i) with K_h(z) = h^{-2d} K(z / h).
// The indexed version visits only particles within the kernel support.
double kde_at(const Ensemble& e, const Kernel& kern, double h, std::span<const double> x0,
              std::span<const double> y0);
double kde_at(const Ensemble& e, const Kernel& kern, const SpatialIndex& index, double h,
              std::span<const double> x0, std::span<const double> y0);
double kde_at_naive(const Ensemble& e, const Kernel& kern, double h, std::span<const double> x0,
                    std::span<const double> y0);

// Variance majorant V_h = varpi |K|_2^2 log(n) / (n h^{2d}).
double variance_term(double h, double n, double varpi, const Kernel& kern);

// Default calibration constant; fixed once on the linear-kinetic benchmark
// with frozen seeds (smallest power of two passing the oracle-ratio check).
inline constexpr double kDefaultVarpi = 0.5;

struct GlResult {
  struct Entry {
    double h = 0.0;
    double mu_hat = 0.0;
    double v = 0.0;
    double a = 0.0;
  };
  double estimate = 0.0;
  double h_selected = 0.0;
  double varpi = 0.0;
  std::vector<Entry> table;  // ascending in h
};

// Data-driven bandwidth selection: computes the estimate for every h in the
// grid, the pairwise comparison statistic
//   A_h = max_{h' <= h} { (mu_h - mu_h')^2 - (V_h + V_h') }_+,
// and returns the estimate at argmin (A_h + V_h), ties resolved toward the
// largest bandwidth.
GlResult gl_select(const Ensemble& e, const Kernel& kern, const BandwidthGrid& grid, double varpi,
                   std::span<const double> x0, std::span<const double> y0);

// Seed-averaged squared error of the selected estimate divided by the best
// seed-averaged squared error over fixed bandwidths (all runs share a grid).
double oracle_ratio(std::span<const GlResult> runs, double truth);

}  // namespace kmv
