#include "kmv/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kmv/rng.hpp"
#include "kmv/summation.hpp"

namespace kmv {

SnapshotMoments snapshot_moments(const Ensemble& e, bool parallel) {
  const auto sums = kernels::raw_moment_sums(e, parallel);
  SnapshotMoments out;
  out.t = e.t;
  const double inv_n = 1.0 / static_cast<double>(e.n);
  for (int i = 0; i < kernels::kMomentCount; ++i)
    out.m[static_cast<std::size_t>(i)] = sums[static_cast<std::size_t>(i)] * inv_n;
  for (int k = 1; k <= kernels::kMomentMaxOrder; ++k)
    out.a[static_cast<std::size_t>(k - 1)] = out.m_kl(k, 0) + out.m_kl(0, k);
  return out;
}

std::vector<double> SimConfig::normalized_snapshots() const {
  std::vector<double> times = snapshot_times;
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  if (times.empty() || times.front() > 0.0) times.insert(times.begin(), 0.0);
  return times;
}

void SimConfig::validate() const {
  drift.validate();
  initial.validate();
  if (initial.dim() != drift.dim)
    throw ConfigError("initial law dimension does not match the drift dimension");
  if (n < 1) throw ConfigError("particle count n must be >= 1");
  if (!(t_end > 0.0)) throw ConfigError("t_end must be positive");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (dt > t_end) throw ConfigError("dt must not exceed t_end");
  for (double s : snapshot_times)
    if (s < 0.0 || s > t_end + 1e-12)
      throw ConfigError("snapshot times must lie in [0, t_end]");
  if (!stream_ids.empty() && stream_ids.size() != n)
    throw ConfigError("stream_ids must match the particle count");
}

const Snapshot& TrajectoryRecord::at_time(double t, double tol) const {
  const Snapshot* best = nullptr;
  double best_gap = tol;
  for (const auto& s : snapshots) {
    const double gap = std::abs(s.t - t);
    if (gap <= best_gap) {
      best = &s;
      best_gap = gap;
    }
  }
  if (!best) throw InsufficientDataError("no snapshot at t = " + std::to_string(t));
  return *best;
}

std::vector<double> interaction_force(const Ensemble& e, const DriftSpec& spec, bool parallel) {
  std::vector<double> out;
  kernels::interaction(e, spec, out, parallel);
  return out;
}

// ---------------------------------------------------------------------------
// Stepping core. One fused per-particle loop per stage keeps the number of
// OpenMP regions per step small; the per-particle branches are cheap next to
// the normal draw. Everything a particle reads is either its own row or a
// reduction computed beforehand, so updates are race-free and deterministic.

namespace {

// Ensembles below this size run the fused loops serially; the arithmetic is
// identical, only the threading is skipped.
constexpr std::size_t kParallelCutoff = 512;

enum class ForceKind { none, linear, general };
enum class NoiseKind { stream, array };

struct StepScratch {
  std::vector<double> mean, mean2;    // linear interaction: current / predicted state
  std::vector<double> force, force2;  // general interaction: current / predicted state
  Ensemble pred;                      // Heun predictor state
};

struct StageInputs {
  const DriftSpec* spec;
  ForceKind force_kind;
  NoiseKind noise_kind;
  std::span<const double> db;  // NoiseKind::array
  std::uint64_t seed = 0;
  std::span<const std::uint64_t> stream_ids;
  std::uint64_t step_index = 0;
  double sqrt_dt = 0.0;
};

inline void eval_drift_one(const DriftSpec& spec, double t, const double* x, const double* y,
                           std::size_t d, double* bx, double* by, std::vector<double>& sx,
                           std::vector<double>& sy) {
  switch (spec.family) {
    case DriftSpec::Family::fhn:
      bx[0] = fhn_f(spec.theta, x[0], y[0]);
      by[0] = fhn_g(spec.theta, x[0], y[0]);
      break;
    case DriftSpec::Family::linear:
      for (std::size_t r = 0; r < d; ++r) {
        double vx = 0.0, vy = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          vx += spec.a11[r * d + c] * x[c] + spec.a12[r * d + c] * y[c];
          vy += spec.a21[r * d + c] * x[c] + spec.a22[r * d + c] * y[c];
        }
        bx[r] = vx;
        by[r] = vy;
      }
      break;
    case DriftSpec::Family::generic:
      spec.b1_single(t, {x, d}, {y, d}, sx);
      spec.b2(t, {x, d}, {y, d}, sy);
      for (std::size_t c = 0; c < d; ++c) {
        bx[c] = sx[c];
        by[c] = sy[c];
      }
      break;
  }
}

inline double noise_of(const StageInputs& in, std::size_t i, std::size_t d, std::size_t c) {
  if (in.noise_kind == NoiseKind::array) return in.db[i * d + c];
  const std::uint64_t sid = in.stream_ids.empty() ? i : in.stream_ids[i];
  return in.sqrt_dt * rng::normal_draw(in.seed, rng::stream_id(rng::Domain::path, sid),
                                       in.step_index * d + c);
}

// Euler stage: out = e + drift(e) dt + sigma dB. When `pred` is given, the
// Heun corrector out = e + (drift(e) + drift(pred))/2 dt + sigma dB, with the
// stage-1 force read from mean/force and the stage-2 force from mean2/force2.
// Returns the first particle with an inadmissible updated coordinate (or n).
std::size_t fused_stage(const Ensemble& e, const Ensemble* pred, Ensemble& out, double dt,
                        const StageInputs& in, const StepScratch& scratch, double lambda,
                        bool parallel) {
  const auto d = static_cast<std::size_t>(e.dim);
  const double sigma = in.spec->sigma;
  const bool par = parallel && e.n > kParallelCutoff;
  std::size_t bad = e.n;
#pragma omp parallel if (par)
  {
    std::vector<double> bx(d), by(d), bx2(d), by2(d), sx(d), sy(d);
#pragma omp for schedule(static) reduction(min : bad)
    for (std::ptrdiff_t ip = 0; ip < static_cast<std::ptrdiff_t>(e.n); ++ip) {
      const auto i = static_cast<std::size_t>(ip);
      eval_drift_one(*in.spec, e.t, e.xs.data() + i * d, e.ys.data() + i * d, d, bx.data(),
                     by.data(), sx, sy);
      if (pred)
        eval_drift_one(*in.spec, pred->t, pred->xs.data() + i * d, pred->ys.data() + i * d, d,
                       bx2.data(), by2.data(), sx, sy);
      bool ok = true;
      for (std::size_t c = 0; c < d; ++c) {
        double fx = bx[c];
        if (in.force_kind == ForceKind::linear)
          fx += -lambda * (e.xs[i * d + c] - scratch.mean[c]);
        else if (in.force_kind == ForceKind::general)
          fx += scratch.force[i * d + c];
        double fy = by[c];
        if (pred) {
          double fx2 = bx2[c];
          if (in.force_kind == ForceKind::linear)
            fx2 += -lambda * (pred->xs[i * d + c] - scratch.mean2[c]);
          else if (in.force_kind == ForceKind::general)
            fx2 += scratch.force2[i * d + c];
          fx = 0.5 * (fx + fx2);
          fy = 0.5 * (fy + by2[c]);
        }
        const double nx = e.xs[i * d + c] + fx * dt + sigma * noise_of(in, i, d, c);
        const double ny = e.ys[i * d + c] + fy * dt;
        out.xs[i * d + c] = nx;
        out.ys[i * d + c] = ny;
        ok = ok && std::isfinite(nx) && std::isfinite(ny) && std::abs(nx) <= kBlowUpLimit &&
             std::abs(ny) <= kBlowUpLimit;
      }
      if (!ok) bad = std::min(bad, i);
    }
  }
  return bad;
}

void step_core(Ensemble& e, const DriftSpec& spec, double dt, const StageInputs& inputs,
               StepScratch& scratch, Scheme scheme, bool parallel) {
  const auto d = static_cast<std::size_t>(e.dim);
  const auto len = e.n * d;

  StageInputs in = inputs;
  in.spec = &spec;
  in.sqrt_dt = std::sqrt(dt);
  double lambda = 0.0;
  if (const auto* lin = std::get_if<LinearInteraction>(&spec.interaction)) {
    in.force_kind = ForceKind::linear;
    lambda = lin->lambda;
    scratch.mean = kernels::ensemble_mean_x(e, parallel);
  } else if (std::holds_alternative<GeneralInteraction>(spec.interaction)) {
    in.force_kind = ForceKind::general;
    scratch.force.resize(len);
    kernels::general_force(e, std::get<GeneralInteraction>(spec.interaction).h, scratch.force,
                           parallel);
  } else {
    in.force_kind = ForceKind::none;
  }

  std::size_t bad = e.n;
  if (scheme == Scheme::euler_maruyama) {
    bad = fused_stage(e, nullptr, e, dt, in, scratch, lambda, parallel);
  } else {
    auto& pred = scratch.pred;
    if (pred.n != e.n || pred.dim != e.dim) pred = Ensemble::zeros(e.n, e.dim);
    const std::size_t pred_bad = fused_stage(e, nullptr, pred, dt, in, scratch, lambda, parallel);
    pred.t = e.t + dt;
    if (pred_bad < e.n) {
      e.t += dt;
      throw BlowUpError("simulation blew up at t = " + std::to_string(e.t) + " (step " +
                            std::to_string(in.step_index) + ", particle " +
                            std::to_string(pred_bad) + ")",
                        e.t, in.step_index, pred_bad);
    }
    // Corrector force at the predicted state.
    if (in.force_kind == ForceKind::linear) {
      scratch.mean2 = kernels::ensemble_mean_x(pred, parallel);
    } else if (in.force_kind == ForceKind::general) {
      scratch.force2.resize(len);
      kernels::general_force(pred, std::get<GeneralInteraction>(spec.interaction).h,
                             scratch.force2, parallel);
    }
    bad = fused_stage(e, &pred, e, dt, in, scratch, lambda, parallel);
  }
  e.t += dt;
  if (bad < e.n)
    throw BlowUpError("simulation blew up at t = " + std::to_string(e.t) + " (step " +
                          std::to_string(in.step_index) + ", particle " + std::to_string(bad) +
                          ")",
                      e.t, in.step_index, bad);
}

}  // namespace

void step_with_increments(Ensemble& e, const DriftSpec& spec, double dt,
                          std::span<const double> db, Scheme scheme, std::uint64_t step_index,
                          bool parallel) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (db.size() != e.n * static_cast<std::size_t>(e.dim))
    throw ConfigError("noise increment array has the wrong shape");
  StageInputs in;
  in.noise_kind = NoiseKind::array;
  in.db = db;
  in.step_index = step_index;
  StepScratch scratch;
  step_core(e, spec, dt, in, scratch, scheme, parallel);
}

void step(Ensemble& e, const DriftSpec& spec, double dt, std::uint64_t seed,
          std::uint64_t step_index, Scheme scheme, std::span<const std::uint64_t> stream_ids,
          bool parallel) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  StageInputs in;
  in.noise_kind = NoiseKind::stream;
  in.seed = seed;
  in.stream_ids = stream_ids;
  in.step_index = step_index;
  StepScratch scratch;
  step_core(e, spec, dt, in, scratch, scheme, parallel);
}

TrajectoryRecord simulate(const SimConfig& cfg, bool parallel) {
  cfg.validate();
  const auto times = cfg.normalized_snapshots();

  Ensemble e = sample_initial(cfg.initial, cfg.n, cfg.seed, cfg.stream_ids);
  const std::size_t bad = kernels::first_inadmissible(e, kBlowUpLimit, parallel);
  if (bad < e.n)
    throw BlowUpError("initial ensemble has inadmissible coordinates", 0.0, 0, bad);

  TrajectoryRecord rec;
  rec.config_echo = nlohmann::json::object();
  rec.seed = cfg.seed;
  rec.dt = cfg.dt;

  const bool with_moments = cfg.record_moments && cfg.drift.dim == 1;
  const auto record = [&](const Ensemble& state) {
    Snapshot snap;
    snap.t = state.t;
    snap.state = state;
    if (with_moments) snap.moments = snapshot_moments(state, parallel);
    rec.snapshots.push_back(std::move(snap));
  };

  record(e);

  StageInputs in;
  in.noise_kind = NoiseKind::stream;
  in.seed = cfg.seed;
  in.stream_ids = cfg.stream_ids;
  StepScratch scratch;

  std::uint64_t step_index = 0;
  // March segment by segment so every snapshot time is hit exactly; a final
  // segment without a snapshot covers (last snapshot, t_end].
  std::vector<double> marks(times.begin() + 1, times.end());
  if (marks.empty() || marks.back() < cfg.t_end - 1e-12) marks.push_back(cfg.t_end);
  double t_lo = 0.0;
  std::size_t next_snapshot = 1;  // index into `times`
  for (double t_hi : marks) {
    const double span = t_hi - t_lo;
    const auto substeps =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / cfg.dt - 1e-9)));
    const double h = span / static_cast<double>(substeps);
    for (std::size_t j = 0; j < substeps; ++j) {
      in.step_index = step_index++;
      step_core(e, cfg.drift, h, in, scratch, cfg.scheme, parallel);
      e.t = t_lo + static_cast<double>(j + 1) * h;
    }
    e.t = t_hi;
    if (next_snapshot < times.size() && std::abs(t_hi - times[next_snapshot]) < 1e-12) {
      record(e);
      ++next_snapshot;
    }
    t_lo = t_hi;
  }
  return rec;
}

}  // namespace kmv
