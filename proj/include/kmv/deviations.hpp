#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "kmv/simulator.hpp"

namespace kmv {

// Test functions phi(t, x, y) paired with their growth class and the time
// measure rho against which the empirical functional integrates.
struct BoundedClass {
  double sup = 1.0;
};
struct PolyGrowthClass {
  double c_phi = 1.0;
  int k = 1;  // |phi| <= c_phi |(x, y)|^k
};
struct DiracAt {
  double t = 0.0;
};
struct UniformOn {};  // Lebesgue on [0, T], trapezoid over snapshots

struct TestFunction {
  std::string name;
  std::function<double(double t, std::span<const double> x, std::span<const double> y)> eval;
  std::variant<BoundedClass, PolyGrowthClass> growth = PolyGrowthClass{};
  std::variant<DiracAt, UniformOn> rho = UniformOn{};
};

// int phi d(nu^N - nu): particle average of phi integrated against rho,
// minus the supplied reference value of int phi d nu.
double empirical_functional(const TrajectoryRecord& traj, const TestFunction& phi,
                            double reference);

// ---------------------------------------------------------------------------
// Monte Carlo tail study of the centered functional across replicate runs.

struct TailReport {
  struct Cell {
    std::size_t n = 0;
    double gamma = 0.0;
    double p_hat = 0.0;  // two-sided: P(|functional| >= gamma)
    double ci_lo = 0.0, ci_hi = 0.0;  // Wilson interval
  };
  std::vector<std::size_t> ns;
  int replicates = 0;
  std::vector<std::vector<double>> functionals;  // per level, per replicate
  std::vector<Cell> cells;
  // Sub-gamma envelope p ~ exp(-n g^2 / (2 (v + c g))) fitted to log p_hat,
  // and the smallest multiplier c1 that dominates every tabulated cell.
  double v_hat = 0.0, c_hat = 0.0, c1_hat = 0.0;
  int excluded_blowups = 0;

  double quantile_abs(std::size_t level, double q) const;  // of |functional|
};

struct TailExperimentConfig {
  // Builds the run for one replicate; phi's rho nodes must be snapshots.
  std::function<SimConfig(std::size_t n, std::uint64_t seed)> make_config;
  TestFunction phi;
  std::vector<std::size_t> ns;
  int replicates = 200;
  std::vector<double> gammas;  // empty: quantile-based grid from the first level
  double reference = 0.0;
  std::uint64_t seed = 0;
};

TailReport tail_experiment(const TailExperimentConfig& cfg);

// Least-squares fit of the sub-gamma envelope on cells with p_hat > 0.
void fit_subgamma(TailReport& report);

// Wilson score interval for a binomial proportion.
std::pair<double, double> wilson_interval(double p_hat, int n, double z = 1.959963984540054);

// ---------------------------------------------------------------------------
// Empirical-measure convergence: sliced W1 against one large reference run
// per seed.

struct ChaosConfig {
  std::function<SimConfig(std::size_t n, std::uint64_t seed)> make_config;
  std::vector<std::size_t> ns;
  std::size_t n_ref = 0;
  int seeds = 20;
  int n_proj = 64;
  std::uint64_t seed = 0;
};

struct ChaosReport {
  struct Row {
    std::size_t n = 0;
    double w1_mean = 0.0;
    double w1_se = 0.0;
  };
  std::vector<Row> rows;
};

ChaosReport chaos_experiment(const ChaosConfig& cfg);

}  // namespace kmv
