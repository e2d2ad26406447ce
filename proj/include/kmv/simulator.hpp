#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "kmv/ensemble.hpp"
#include "kmv/kernels.hpp"
#include "kmv/models.hpp"

namespace kmv {

enum class Scheme { euler_maruyama, heun };

// Coordinates beyond this magnitude abort the run with BlowUpError.
inline constexpr double kBlowUpLimit = 1e8;

// Order-8 empirical moment table of one snapshot (dim == 1):
// mixed moments m_{k,l} for k + l <= 8 and additive moments a_k, k <= 8.
struct SnapshotMoments {
  double t = 0.0;
  std::array<double, kernels::kMomentCount> m{};
  std::array<double, kernels::kMomentMaxOrder> a{};

  double m_kl(int k, int l) const {
    const int idx = kernels::moment_index(k, l);
    if (idx < 0) throw InsufficientDataError("moment order above the recorded maximum");
    return m[static_cast<std::size_t>(idx)];
  }
  double a_k(int k) const {
    if (k < 1 || k > kernels::kMomentMaxOrder)
      throw InsufficientDataError("additive moment order above the recorded maximum");
    return a[static_cast<std::size_t>(k - 1)];
  }
};

SnapshotMoments snapshot_moments(const Ensemble& e, bool parallel = true);

struct SimConfig {
  DriftSpec drift;
  InitialLaw initial;
  std::size_t n = 0;
  double t_end = 0.0;
  double dt = 1e-3;
  // Sorted, within [0, t_end]; 0 is prepended when missing. Each snapshot
  // time is hit exactly (the step is shortened locally).
  std::vector<double> snapshot_times;
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::euler_maruyama;
  // Optional RNG stream relabeling (stream of particle i = stream_ids[i]).
  std::vector<std::uint64_t> stream_ids;
  bool record_moments = true;  // order-8 table per snapshot when dim == 1

  std::vector<double> normalized_snapshots() const;
  void validate() const;
};

struct Snapshot {
  double t = 0.0;
  Ensemble state;
  std::optional<SnapshotMoments> moments;
};

struct TrajectoryRecord {
  nlohmann::json config_echo;  // empty object for in-memory configs
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::vector<Snapshot> snapshots;

  double horizon() const { return snapshots.empty() ? 0.0 : snapshots.back().t; }
  const Snapshot& front() const { return snapshots.front(); }
  const Snapshot& back() const { return snapshots.back(); }
  // Snapshot with time closest to t; throws if off by more than tol.
  const Snapshot& at_time(double t, double tol = 1e-9) const;
};

// One mean-field force evaluation, dispatched on the interaction kind.
// Returns an empty vector for interaction-free drifts.
std::vector<double> interaction_force(const Ensemble& e, const DriftSpec& spec,
                                      bool parallel = true);

// Advances the ensemble by dt with externally supplied Brownian increments
// (n x dim array of Delta B). Used directly by strong-error studies that
// couple step sizes on one Brownian path.
void step_with_increments(Ensemble& e, const DriftSpec& spec, double dt,
                          std::span<const double> db, Scheme scheme, std::uint64_t step_index,
                          bool parallel = true);

// Advances the ensemble by dt, drawing the increments from the per-particle
// counter streams of (seed, stream_ids) at the given global step index.
void step(Ensemble& e, const DriftSpec& spec, double dt, std::uint64_t seed,
          std::uint64_t step_index, Scheme scheme,
          std::span<const std::uint64_t> stream_ids = {}, bool parallel = true);

// Runs the particle system and records the requested snapshots.
TrajectoryRecord simulate(const SimConfig& cfg, bool parallel = true);

}  // namespace kmv
