#include "kmv/deviations.hpp"

#include <algorithm>
#include <cmath>

#include "kmv/moments.hpp"
#include "kmv/rng.hpp"
#include "kmv/summation.hpp"

namespace kmv {

namespace {

double particle_average(const Snapshot& snap, const TestFunction& phi) {
  const auto& e = snap.state;
  return blocked_mean(e.n, [&](std::size_t i) { return phi.eval(snap.t, e.x(i), e.y(i)); },
                      false);
}

}  // namespace

double empirical_functional(const TrajectoryRecord& traj, const TestFunction& phi,
                            double reference) {
  if (traj.snapshots.empty()) throw InsufficientDataError("trajectory has no snapshots");
  double value = 0.0;
  if (const auto* dirac = std::get_if<DiracAt>(&phi.rho)) {
    value = particle_average(traj.at_time(dirac->t), phi) - reference;
  } else {
    if (traj.snapshots.size() < 2)
      throw InsufficientDataError("time-averaged functional needs at least two snapshots");
    const double horizon = traj.horizon();
    NeumaierSum acc;
    double prev = particle_average(traj.snapshots.front(), phi);
    for (std::size_t j = 0; j + 1 < traj.snapshots.size(); ++j) {
      const double next = particle_average(traj.snapshots[j + 1], phi);
      acc.add(0.5 * (traj.snapshots[j + 1].t - traj.snapshots[j].t) * (prev + next));
      prev = next;
    }
    value = acc.value() / horizon - reference;
  }
  if (const auto* bounded = std::get_if<BoundedClass>(&phi.growth)) {
    if (std::abs(value) > 2.0 * bounded->sup + 1e-12)
      throw Error("bounded test function produced |functional| > 2 sup |phi|");
  }
  return value;
}

double TailReport::quantile_abs(std::size_t level, double q) const {
  std::vector<double> v;
  for (double f : functionals.at(level)) v.push_back(std::abs(f));
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * v[lo] + w * v[hi];
}

std::pair<double, double> wilson_interval(double p_hat, int n, double z) {
  const double nn = static_cast<double>(n);
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p_hat + z2 / (2.0 * nn)) / denom;
  const double half =
      z * std::sqrt(p_hat * (1.0 - p_hat) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

void fit_subgamma(TailReport& report) {
  // Minimize sum (log p + n g^2 / (2 (v + c g)))^2 over v, c > 0 by nested
  // log-grid refinement; deterministic and plenty accurate for a 2-parameter
  // envelope.
  struct Point {
    double n, gamma, logp;
  };
  std::vector<Point> pts;
  for (const auto& cell : report.cells)
    if (cell.p_hat > 0.0 && cell.gamma > 0.0)
      pts.push_back({static_cast<double>(cell.n), cell.gamma, std::log(cell.p_hat)});
  if (pts.empty()) {
    report.v_hat = report.c_hat = 0.0;
    report.c1_hat = 1.0;
    return;
  }
  const auto loss = [&pts](double v, double c) {
    double s = 0.0;
    for (const auto& p : pts) {
      const double model = -p.n * p.gamma * p.gamma / (2.0 * (v + c * p.gamma));
      const double r = p.logp - model;
      s += r * r;
    }
    return s;
  };
  double lo_v = std::log(1e-8), hi_v = std::log(1e4);
  double lo_c = std::log(1e-10), hi_c = std::log(1e4);
  double best_v = 1.0, best_c = 1e-6, best = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 6; ++round) {
    constexpr int kGrid = 33;
    double round_v = best_v, round_c = best_c;
    for (int i = 0; i < kGrid; ++i) {
      const double lv = lo_v + (hi_v - lo_v) * i / (kGrid - 1);
      for (int j = 0; j < kGrid; ++j) {
        const double lc = lo_c + (hi_c - lo_c) * j / (kGrid - 1);
        const double val = loss(std::exp(lv), std::exp(lc));
        if (val < best) {
          best = val;
          round_v = std::exp(lv);
          round_c = std::exp(lc);
        }
      }
    }
    best_v = round_v;
    best_c = round_c;
    const double span_v = (hi_v - lo_v) / (kGrid - 1) * 4.0;
    const double span_c = (hi_c - lo_c) / (kGrid - 1) * 4.0;
    lo_v = std::log(best_v) - span_v;
    hi_v = std::log(best_v) + span_v;
    lo_c = std::log(best_c) - span_c;
    hi_c = std::log(best_c) + span_c;
  }
  report.v_hat = best_v;
  report.c_hat = best_c;
  double c1 = 1.0;
  for (const auto& cell : report.cells) {
    if (cell.gamma <= 0.0) continue;
    const double envelope = std::exp(-static_cast<double>(cell.n) * cell.gamma * cell.gamma /
                                     (2.0 * (best_v + best_c * cell.gamma)));
    if (envelope > 0.0) c1 = std::max(c1, cell.p_hat / envelope);
  }
  report.c1_hat = c1;
}

TailReport tail_experiment(const TailExperimentConfig& cfg) {
  if (cfg.ns.empty()) throw ConfigError("tail experiment needs at least one population size");
  if (cfg.replicates < 1) throw ConfigError("tail experiment needs replicates >= 1");

  TailReport report;
  report.ns = cfg.ns;
  report.replicates = cfg.replicates;
  report.functionals.assign(cfg.ns.size(), {});
  int blowups = 0;

  for (std::size_t level = 0; level < cfg.ns.size(); ++level) {
    std::vector<double> values(static_cast<std::size_t>(cfg.replicates),
                               std::numeric_limits<double>::quiet_NaN());
    // Replicates are independent jobs; results land in their own slot, so
    // the schedule does not matter.
#pragma omp parallel for schedule(dynamic) reduction(+ : blowups)
    for (int r = 0; r < cfg.replicates; ++r) {
      const auto run_seed = rng::derive_seed(
          cfg.seed, (static_cast<std::uint64_t>(level) << 32) | static_cast<std::uint64_t>(r));
      try {
        const auto traj = simulate(cfg.make_config(cfg.ns[level], run_seed));
        values[static_cast<std::size_t>(r)] = empirical_functional(traj, cfg.phi, cfg.reference);
      } catch (const BlowUpError&) {
        ++blowups;  // excluded and counted
      }
    }
    auto& keep = report.functionals[level];
    for (double v : values)
      if (!std::isnan(v)) keep.push_back(v);
    if (keep.empty()) throw InsufficientDataError("all replicates blew up at one level");
  }
  report.excluded_blowups = blowups;

  std::vector<double> gammas = cfg.gammas;
  if (gammas.empty()) {
    // Quantile ladder of the first (smallest-N) level.
    for (double q : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98})
      gammas.push_back(report.quantile_abs(0, q));
  }
  std::sort(gammas.begin(), gammas.end());

  for (std::size_t level = 0; level < cfg.ns.size(); ++level) {
    const auto& vals = report.functionals[level];
    for (double gamma : gammas) {
      std::size_t hits = 0;
      for (double v : vals)
        if (std::abs(v) >= gamma) ++hits;
      TailReport::Cell cell;
      cell.n = cfg.ns[level];
      cell.gamma = gamma;
      cell.p_hat = static_cast<double>(hits) / static_cast<double>(vals.size());
      std::tie(cell.ci_lo, cell.ci_hi) =
          wilson_interval(cell.p_hat, static_cast<int>(vals.size()));
      report.cells.push_back(cell);
    }
  }
  fit_subgamma(report);
  return report;
}

ChaosReport chaos_experiment(const ChaosConfig& cfg) {
  if (cfg.ns.empty() || cfg.n_ref == 0) throw ConfigError("chaos experiment needs ns and n_ref");
  if (cfg.seeds < 1) throw ConfigError("chaos experiment needs seeds >= 1");

  ChaosReport report;
  std::vector<std::vector<double>> w1(cfg.ns.size());
  for (int s = 0; s < cfg.seeds; ++s) {
    const auto ref_seed = rng::derive_seed(cfg.seed, 0xFFFF0000ull + static_cast<std::uint64_t>(s));
    const auto ref = simulate(cfg.make_config(cfg.n_ref, ref_seed));
    const auto& ref_state = ref.back().state;
    for (std::size_t level = 0; level < cfg.ns.size(); ++level) {
      const auto run_seed = rng::derive_seed(
          cfg.seed, (static_cast<std::uint64_t>(level + 1) << 32) | static_cast<std::uint64_t>(s));
      const auto traj = simulate(cfg.make_config(cfg.ns[level], run_seed));
      w1[level].push_back(sliced_w1(traj.back().state, ref_state, cfg.n_proj,
                                    rng::derive_seed(run_seed, 0xA11CE)));
    }
  }
  for (std::size_t level = 0; level < cfg.ns.size(); ++level) {
    const auto& v = w1[level];
    const double mean = blocked_mean(v.size(), [&](std::size_t i) { return v[i]; }, false);
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var = v.size() > 1 ? var / (static_cast<double>(v.size()) * (static_cast<double>(v.size()) - 1.0))
                       : 0.0;
    report.rows.push_back({cfg.ns[level], mean, std::sqrt(var)});
  }
  return report;
}

}  // namespace kmv
