#include "kmv/moments.hpp"

#include <algorithm>
#include <cmath>

#include "kmv/rng.hpp"
#include "kmv/summation.hpp"

namespace kmv {

namespace {

void require_dim1(const Ensemble& e) {
  if (e.dim != 1)
    throw UnsupportedDimensionError("moment functionals are defined for dim == 1 only");
}

double pow_int(double base, int p) {
  double v = 1.0;
  for (int i = 0; i < p; ++i) v *= base;
  return v;
}

const std::vector<Snapshot>& moment_snapshots(const TrajectoryRecord& traj) {
  if (traj.snapshots.size() < 2)
    throw InsufficientDataError("time integration needs at least two snapshots");
  for (const auto& s : traj.snapshots)
    if (!s.moments)
      throw InsufficientDataError("trajectory snapshots carry no moment tables");
  return traj.snapshots;
}

double trapezoid(const std::vector<Snapshot>& snaps, const std::function<double(const SnapshotMoments&)>& f) {
  NeumaierSum acc;
  for (std::size_t j = 0; j + 1 < snaps.size(); ++j) {
    const double h = snaps[j + 1].t - snaps[j].t;
    acc.add(0.5 * h * (f(*snaps[j].moments) + f(*snaps[j + 1].moments)));
  }
  return acc.value();
}

}  // namespace

double mixed_moment(const Ensemble& e, int k, int l) {
  require_dim1(e);
  if (k < 0 || l < 0) throw InvalidModelError("moment orders must be >= 0");
  return blocked_mean(e.n, [&](std::size_t i) { return pow_int(e.xs[i], k) * pow_int(e.ys[i], l); });
}

double additive_moment(const Ensemble& e, int k) {
  if (k < 1) throw InvalidModelError("additive moment order must be >= 1");
  return mixed_moment(e, k, 0) + mixed_moment(e, 0, k);
}

double time_integrated_moment(const TrajectoryRecord& traj, int k, int l) {
  const auto& snaps = moment_snapshots(traj);
  return trapezoid(snaps, [k, l](const SnapshotMoments& m) { return m.m_kl(k, l); });
}

double time_integrated_product(const TrajectoryRecord& traj, int k1, int l1, int k2, int l2) {
  const auto& snaps = moment_snapshots(traj);
  return trapezoid(snaps, [=](const SnapshotMoments& m) { return m.m_kl(k1, l1) * m.m_kl(k2, l2); });
}

double wasserstein1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InsufficientDataError("W1 of an empty sample");
  if (a.size() != b.size())
    throw InvalidModelError("W1 requires equal sample sizes (use the subsampled variant)");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return blocked_mean(a.size(), [&](std::size_t i) { return std::abs(a[i] - b[i]); }, false);
}

namespace {

// m of [0, total) uniformly without replacement (partial Fisher-Yates).
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t m, rng::Stream& st) {
  std::vector<std::size_t> pool(total);
  for (std::size_t i = 0; i < total; ++i) pool[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + static_cast<std::size_t>(st.uniform() * static_cast<double>(total - i));
    std::swap(pool[i], pool[std::min(j, total - 1)]);
  }
  pool.resize(m);
  return pool;
}

std::vector<double> subsample(std::span<const double> v, std::size_t m, rng::Stream& st) {
  std::vector<double> out;
  out.reserve(m);
  for (std::size_t idx : sample_indices(v.size(), m, st)) out.push_back(v[idx]);
  return out;
}

}  // namespace

double wasserstein1_1d_subsampled(std::span<const double> a, std::span<const double> b,
                                  std::uint64_t seed) {
  if (a.empty() || b.empty()) throw InsufficientDataError("W1 of an empty sample");
  const std::size_t m = std::min(a.size(), b.size());
  rng::Stream st(seed, rng::stream_id(rng::Domain::subsample, 0));
  std::vector<double> aa = a.size() == m ? std::vector<double>(a.begin(), a.end())
                                         : subsample(a, m, st);
  std::vector<double> bb = b.size() == m ? std::vector<double>(b.begin(), b.end())
                                         : subsample(b, m, st);
  return wasserstein1_1d(std::move(aa), std::move(bb));
}

double sliced_w1(const Ensemble& a, const Ensemble& b, int n_proj, std::uint64_t seed) {
  require_dim1(a);
  require_dim1(b);
  if (n_proj < 1) throw InvalidModelError("n_proj must be >= 1");
  const std::size_t m = std::min(a.n, b.n);

  // Subsample the larger ensemble once, then reuse the index set for every
  // projection.
  rng::Stream sub_stream(seed, rng::stream_id(rng::Domain::subsample, 1));
  std::vector<std::size_t> ia(m), ib(m);
  {
    auto iota = [](std::size_t n) {
      std::vector<std::size_t> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = i;
      return v;
    };
    ia = a.n == m ? iota(m) : sample_indices(a.n, m, sub_stream);
    ib = b.n == m ? iota(m) : sample_indices(b.n, m, sub_stream);
  }

  NeumaierSum acc;
  std::vector<double> pa(m), pb(m);
  for (int p = 0; p < n_proj; ++p) {
    rng::Stream st(seed, rng::stream_id(rng::Domain::projection, static_cast<std::uint64_t>(p)));
    const double angle = rng::kTwoPi * st.uniform();
    const double ux = std::cos(angle), uy = std::sin(angle);
    for (std::size_t i = 0; i < m; ++i) {
      pa[i] = ux * a.xs[ia[i]] + uy * a.ys[ia[i]];
      pb[i] = ux * b.xs[ib[i]] + uy * b.ys[ib[i]];
    }
    acc.add(wasserstein1_1d(pa, pb));
  }
  return acc.value() / static_cast<double>(n_proj);
}

}  // namespace kmv
