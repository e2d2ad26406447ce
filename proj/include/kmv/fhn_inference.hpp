#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "kmv/models.hpp"
#include "kmv/simulator.hpp"

namespace kmv {

// Moment-matching estimator of the six FhN parameters. Integrating the
// additive moments a_k = m_{k,0} + m_{0,k} along the flow gives one linear
// equation per k:
//   a_k(mu_T) = Lambda_k + [M theta]_k,   k = 1..6,
// with theta = (I, a_bar, b_bar, c_bar, lambda, sigma2), so
// theta = M^{-1}(A - Lambda).

// One summand coef * int_0^T m_{k1,l1}(mu_t) m_{k2,l2}(mu_t) dt. Plain
// moment terms keep (k2, l2) = (0, 0) since m_{0,0} = 1.
struct IntegrandTerm {
  double coef = 0.0;
  int k1 = 0, l1 = 0;
  int k2 = 0, l2 = 0;
};

// Row k of the system, as coefficient templates over time-integrated
// moments. Columns follow the theta order; the intercept is Lambda_k minus
// its a_k(mu_0) part.
struct MomentRowTemplate {
  int k = 0;
  std::array<std::vector<IntegrandTerm>, 6> columns;
  std::vector<IntegrandTerm> intercept;
};

MomentRowTemplate moment_ode_coefficients(int k);

struct MomentSystem {
  Eigen::Matrix<double, 6, 1> a_hat;       // a_k(mu_T^N)
  Eigen::Matrix<double, 6, 6> m_hat;
  Eigen::Matrix<double, 6, 1> lambda_hat;
  double cond = 0.0;   // 2-norm condition number of m_hat
  double horizon = 0.0;
  std::size_t n = 0;
};

// Assembles (A, M, Lambda) from the empirical snapshot moments of a
// trajectory (dim == 1, moments to order 8 on every snapshot).
MomentSystem build_system(const TrajectoryRecord& traj);

// Evaluates the right-hand side Lambda_k + [M theta]_k of row k for a given
// parameter vector; the identity-residual tests compare it to a_k(mu_T).
double row_rhs(const MomentSystem& sys, int k, const FhnTheta& theta);

struct ThetaEstimate {
  std::array<double, 6> theta_hat{};
  double cond = 0.0;
  double residual = 0.0;  // |M theta_hat - (A - Lambda)|
  std::size_t n = 0;
  double horizon = 0.0;
  bool ill_conditioned = false;  // solved in the least-squares sense
};

inline constexpr double kCondFallbackThreshold = 1e12;

ThetaEstimate solve_theta(const MomentSystem& sys);

// ---------------------------------------------------------------------------
// Rate study: RMSE of theta_hat over independent seeds at several N.

struct ScalingConfig {
  FhnTheta truth;
  InitialLaw initial;
  double t_end = 10.0;
  double dt = 1e-3;
  int snapshot_count = 201;  // uniform on [0, t_end]
  Scheme scheme = Scheme::euler_maruyama;
};

struct ScalingReport {
  struct Row {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::array<double, 6> error{};  // theta_hat - theta
    double error_norm = 0.0;
  };
  std::vector<Row> rows;
  std::vector<std::size_t> ns;
  std::vector<double> rmse;                      // per level, over seeds
  std::vector<std::array<double, 6>> rmse_coord;  // per level
  double slope = 0.0;  // log rmse vs log n
};

ScalingReport error_scaling_study(const ScalingConfig& cfg, std::span<const std::size_t> ns,
                                  int seeds, std::uint64_t master_seed);

// Least-squares slope of y against x.
double fit_slope(std::span<const double> x, std::span<const double> y);

}  // namespace kmv
