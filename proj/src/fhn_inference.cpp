#include "kmv/fhn_inference.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "kmv/moments.hpp"
#include "kmv/rng.hpp"
#include "kmv/summation.hpp"

namespace kmv {

MomentRowTemplate moment_ode_coefficients(int k) {
  if (k < 1 || k > 6) throw InvalidModelError("moment system rows are k = 1..6");
  const double kk = static_cast<double>(k);
  MomentRowTemplate row;
  row.k = k;
  const auto plain = [](double coef, int k1, int l1) {
    return IntegrandTerm{coef, k1, l1, 0, 0};
  };
  // d/dt a_k, split into the parameter columns (I, a_bar, b_bar, c_bar,
  // lambda, sigma2) and the parameter-free intercept.
  row.columns[0] = {plain(kk, k - 1, 0)};
  row.columns[1] = {plain(kk, 0, k - 1)};
  row.columns[2] = {plain(-kk, 0, k)};
  row.columns[3] = {plain(kk, 1, k - 1)};
  // Mean-field coupling -lambda (x - m_{1,0}) against k x^{k-1}: the product
  // term makes row 1 vanish identically (the interaction preserves the mean).
  row.columns[4] = {plain(-kk, k, 0), IntegrandTerm{kk, 1, 0, k - 1, 0}};
  if (k >= 2) row.columns[5] = {plain(0.5 * kk * (kk - 1.0), k - 2, 0)};
  row.intercept = {plain(kk, k, 0), plain(-kk / 3.0, k + 2, 0), plain(-kk, k - 1, 1)};
  return row;
}

namespace {

double evaluate_terms(const TrajectoryRecord& traj, const std::vector<IntegrandTerm>& terms) {
  NeumaierSum acc;
  for (const auto& t : terms) {
    const double integral = (t.k2 == 0 && t.l2 == 0)
                                ? time_integrated_moment(traj, t.k1, t.l1)
                                : time_integrated_product(traj, t.k1, t.l1, t.k2, t.l2);
    acc.add(t.coef * integral);
  }
  return acc.value();
}

double condition_number(const Eigen::Matrix<double, 6, 6>& m) {
  Eigen::JacobiSVD<Eigen::Matrix<double, 6, 6>> svd(m);
  const auto& sv = svd.singularValues();
  if (sv(5) == 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / sv(5);
}

}  // namespace

MomentSystem build_system(const TrajectoryRecord& traj) {
  if (traj.snapshots.size() < 2)
    throw InsufficientDataError("moment system needs at least two snapshots");
  for (const auto& s : traj.snapshots)
    if (!s.moments || s.state.dim != 1)
      throw InsufficientDataError("moment system needs order-8 snapshot moments (dim == 1)");

  MomentSystem sys;
  sys.horizon = traj.horizon();
  sys.n = traj.front().state.n;
  const auto& first = *traj.front().moments;
  const auto& last = *traj.back().moments;
  for (int k = 1; k <= 6; ++k) {
    const auto row = moment_ode_coefficients(k);
    sys.a_hat(k - 1) = last.a_k(k);
    sys.lambda_hat(k - 1) = first.a_k(k) + evaluate_terms(traj, row.intercept);
    for (int c = 0; c < 6; ++c)
      sys.m_hat(k - 1, c) = evaluate_terms(traj, row.columns[static_cast<std::size_t>(c)]);
  }
  if (!sys.a_hat.allFinite() || !sys.m_hat.allFinite() || !sys.lambda_hat.allFinite())
    throw InsufficientDataError("moment system has non-finite entries");
  sys.cond = condition_number(sys.m_hat);
  return sys;
}

double row_rhs(const MomentSystem& sys, int k, const FhnTheta& theta) {
  if (k < 1 || k > 6) throw InvalidModelError("moment system rows are k = 1..6");
  const auto th = theta.as_array();
  double rhs = sys.lambda_hat(k - 1);
  for (int c = 0; c < 6; ++c) rhs += sys.m_hat(k - 1, c) * th[static_cast<std::size_t>(c)];
  return rhs;
}

ThetaEstimate solve_theta(const MomentSystem& sys) {
  const Eigen::Matrix<double, 6, 1> rhs = sys.a_hat - sys.lambda_hat;
  Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(sys.m_hat);
  if (!lu.isInvertible())
    throw SingularSystemError("moment matrix is singular", static_cast<int>(lu.rank()));

  ThetaEstimate est;
  est.cond = sys.cond;
  est.n = sys.n;
  est.horizon = sys.horizon;
  Eigen::Matrix<double, 6, 1> theta;
  if (sys.cond > kCondFallbackThreshold) {
    est.ill_conditioned = true;
    theta = sys.m_hat.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).solve(rhs);
  } else {
    theta = lu.solve(rhs);
  }
  est.residual = (sys.m_hat * theta - rhs).norm();
  for (int c = 0; c < 6; ++c) est.theta_hat[static_cast<std::size_t>(c)] = theta(c);
  return est;
}

double fit_slope(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / sxx;
}

ScalingReport error_scaling_study(const ScalingConfig& cfg, std::span<const std::size_t> ns,
                                  int seeds, std::uint64_t master_seed) {
  if (ns.size() < 2) throw ConfigError("scaling study needs at least two population sizes");
  if (seeds < 1) throw ConfigError("scaling study needs at least one seed");

  ScalingReport report;
  report.ns.assign(ns.begin(), ns.end());
  const auto truth = cfg.truth.as_array();

  SimConfig base;
  base.drift = fhn_drift(cfg.truth);
  base.initial = cfg.initial;
  base.t_end = cfg.t_end;
  base.dt = cfg.dt;
  base.scheme = cfg.scheme;
  for (int i = 0; i < cfg.snapshot_count; ++i)
    base.snapshot_times.push_back(cfg.t_end * static_cast<double>(i) /
                                  static_cast<double>(cfg.snapshot_count - 1));

  for (std::size_t level = 0; level < ns.size(); ++level) {
    std::array<NeumaierSum, 6> sq_coord;
    NeumaierSum sq_norm;
    for (int s = 0; s < seeds; ++s) {
      SimConfig run = base;
      run.n = ns[level];
      run.seed = rng::derive_seed(master_seed,
                                  (static_cast<std::uint64_t>(level) << 32) |
                                      static_cast<std::uint64_t>(s));
      const auto traj = simulate(run);
      const auto est = solve_theta(build_system(traj));

      ScalingReport::Row row;
      row.n = ns[level];
      row.seed = run.seed;
      double norm_sq = 0.0;
      for (int c = 0; c < 6; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        row.error[ci] = est.theta_hat[ci] - truth[ci];
        norm_sq += row.error[ci] * row.error[ci];
        sq_coord[ci].add(row.error[ci] * row.error[ci]);
      }
      row.error_norm = std::sqrt(norm_sq);
      sq_norm.add(norm_sq);
      report.rows.push_back(row);
    }
    report.rmse.push_back(std::sqrt(sq_norm.value() / seeds));
    std::array<double, 6> coord{};
    for (int c = 0; c < 6; ++c)
      coord[static_cast<std::size_t>(c)] =
          std::sqrt(sq_coord[static_cast<std::size_t>(c)].value() / seeds);
    report.rmse_coord.push_back(coord);
  }

  std::vector<double> lx, ly;
  for (std::size_t level = 0; level < ns.size(); ++level) {
    lx.push_back(std::log(static_cast<double>(ns[level])));
    ly.push_back(std::log(report.rmse[level]));
  }
  report.slope = fit_slope(lx, ly);
  return report;
}

}  // namespace kmv
