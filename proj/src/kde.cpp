#include "kmv/kde.hpp"

#include <algorithm>
#include <cmath>

#include "kmv/summation.hpp"

namespace kmv {

namespace {

constexpr double kTruncatedGaussianHalfWidth = 3.0;

double simpson(double lo, double hi, int intervals, const std::function<double(double)>& f) {
  // intervals must be even
  const double h = (hi - lo) / intervals;
  NeumaierSum acc;
  acc.add(f(lo));
  acc.add(f(hi));
  for (int i = 1; i < intervals; ++i) acc.add((i % 2 ? 4.0 : 2.0) * f(lo + i * h));
  return acc.value() * h / 3.0;
}

}  // namespace

double Kernel::profile_1d(double u) const {
  if (std::abs(u) > support) return 0.0;
  switch (profile) {
    case KernelProfile::epanechnikov:
      return 0.75 * (1.0 - u * u);
    case KernelProfile::uniform_box:
      return 1.0;
    case KernelProfile::gaussian_truncated: {
      static const double norm =
          1.0 / std::erf(kTruncatedGaussianHalfWidth / std::sqrt(2.0));
      return norm * std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI);
    }
  }
  return 0.0;
}

double Kernel::eval(std::span<const double> u) const {
  double v = 1.0;
  for (double c : u) {
    v *= profile_1d(c);
    if (v == 0.0) return 0.0;
  }
  return v;
}

Kernel Kernel::make(KernelProfile profile, int dim) {
  if (dim < 1) throw InvalidModelError("kernel dimension must be positive");
  Kernel k;
  k.profile = profile;
  k.dim = dim;
  k.order = 2;
  switch (profile) {
    case KernelProfile::epanechnikov:
      k.support = 1.0;
      break;
    case KernelProfile::uniform_box:
      k.support = 0.5;
      break;
    case KernelProfile::gaussian_truncated:
      k.support = kTruncatedGaussianHalfWidth;
      break;
  }
  const auto f1 = [&k](double u) { return k.profile_1d(u); };
  const auto f2 = [&k](double u) {
    const double v = k.profile_1d(u);
    return v * v;
  };
  const double mass_1d = simpson(-k.support, k.support, 20000, f1);
  if (std::abs(mass_1d - 1.0) > 1e-10)
    throw InvalidModelError("kernel profile does not integrate to 1");
  const double l2_1d = simpson(-k.support, k.support, 20000, f2);
  const int coords = 2 * dim;
  k.l2_norm_sq = std::pow(l2_1d, coords);
  k.sup_norm = std::pow(k.profile_1d(0.0), coords);
  return k;
}

// ---------------------------------------------------------------------------

double BandwidthGrid::min_bandwidth(std::size_t n, int dim) {
  const double ln = std::log(static_cast<double>(n));
  return std::pow(ln * ln / static_cast<double>(n), 1.0 / dim);
}

BandwidthGrid BandwidthGrid::geometric(std::size_t n, int dim, double ratio) {
  if (ratio <= 1.0) throw ConfigError("bandwidth grid ratio must exceed 1");
  const double h_min = min_bandwidth(n, dim);
  if (h_min >= 1.0) throw ConfigError("sample too small for an admissible bandwidth grid");
  BandwidthGrid g;
  g.n = n;
  g.dim = dim;
  for (double h = 1.0; h >= h_min; h /= ratio) g.hs.push_back(h);
  std::reverse(g.hs.begin(), g.hs.end());
  g.validate();
  return g;
}

BandwidthGrid BandwidthGrid::with_count(std::size_t n, int dim, int count) {
  if (count < 1) throw ConfigError("bandwidth grid needs at least one point");
  const double h_min = min_bandwidth(n, dim);
  if (h_min >= 1.0) throw ConfigError("sample too small for an admissible bandwidth grid");
  BandwidthGrid g;
  g.n = n;
  g.dim = dim;
  if (count == 1) {
    g.hs.push_back(1.0);
  } else {
    for (int i = 0; i < count; ++i)
      g.hs.push_back(h_min * std::pow(1.0 / h_min, static_cast<double>(i) / (count - 1)));
    g.hs.front() = h_min;
    g.hs.back() = 1.0;
  }
  g.validate();
  return g;
}

void BandwidthGrid::validate() const {
  if (hs.empty()) throw ConfigError("bandwidth grid is empty");
  if (hs.size() > n) throw ConfigError("bandwidth grid larger than the sample size");
  const double h_min = min_bandwidth(n, dim);
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (hs[i] < h_min * (1.0 - 1e-12) || hs[i] > 1.0 + 1e-12)
      throw ConfigError("bandwidth outside the admissible range");
    if (i > 0 && hs[i] <= hs[i - 1]) throw ConfigError("bandwidth grid must be increasing");
  }
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t hash_cells(std::span<const long long> cells) {
  std::uint64_t h = 0x9E3779B97F4A7C15ull;
  for (long long c : cells) {
    std::uint64_t x = static_cast<std::uint64_t>(c);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    h ^= (x ^ (x >> 31)) + 0x9E3779B9ull + (h << 6) + (h >> 2);
  }
  return h;
}

}  // namespace

SpatialIndex::SpatialIndex(const Ensemble& e, double cell_size) : e_(e), cell_(cell_size) {
  if (!(cell_size > 0.0)) throw InvalidModelError("cell size must be positive");
  cells_.reserve(e.n);
  for (std::size_t i = 0; i < e.n; ++i) cells_[key(e.x(i), e.y(i))].push_back(i);
}

std::uint64_t SpatialIndex::key(std::span<const double> x, std::span<const double> y) const {
  const auto d = static_cast<std::size_t>(e_.dim);
  std::vector<long long> cells(2 * d);
  for (std::size_t c = 0; c < d; ++c) {
    cells[c] = static_cast<long long>(std::floor(x[c] / cell_));
    cells[d + c] = static_cast<long long>(std::floor(y[c] / cell_));
  }
  return hash_cells(cells);
}

std::vector<std::size_t> SpatialIndex::gather(std::span<const double> x0,
                                              std::span<const double> y0) const {
  const auto d = static_cast<std::size_t>(e_.dim);
  const std::size_t coords = 2 * d;
  std::vector<long long> base(coords);
  for (std::size_t c = 0; c < d; ++c) {
    base[c] = static_cast<long long>(std::floor(x0[c] / cell_));
    base[d + c] = static_cast<long long>(std::floor(y0[c] / cell_));
  }
  // All neighbor cells (offsets in {-1,0,1}^{2d}); keys deduplicated so a
  // hash collision can never double-count a bucket.
  std::vector<std::uint64_t> keys;
  std::vector<long long> cell(coords);
  std::vector<int> offset(coords, -1);
  while (true) {
    for (std::size_t c = 0; c < coords; ++c) cell[c] = base[c] + offset[c];
    keys.push_back(hash_cells(cell));
    std::size_t c = 0;
    while (c < coords && ++offset[c] > 1) offset[c++] = -1;
    if (c == coords) break;
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  std::vector<std::size_t> out;
  for (std::uint64_t k : keys) {
    const auto it = cells_.find(k);
    if (it != cells_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double kde_term(const Ensemble& e, const Kernel& kern, double h, std::span<const double> x0,
                std::span<const double> y0, std::size_t i) {
  const auto d = static_cast<std::size_t>(e.dim);
  double v = 1.0;
  for (std::size_t c = 0; c < d; ++c) {
    v *= kern.profile_1d((x0[c] - e.xs[i * d + c]) / h);
    if (v == 0.0) return 0.0;
  }
  for (std::size_t c = 0; c < d; ++c) {
    v *= kern.profile_1d((y0[c] - e.ys[i * d + c]) / h);
    if (v == 0.0) return 0.0;
  }
  return v;
}

}  // namespace

double kde_at_naive(const Ensemble& e, const Kernel& kern, double h, std::span<const double> x0,
                    std::span<const double> y0) {
  if (!(h > 0.0)) throw InvalidModelError("bandwidth must be positive");
  const double scale = std::pow(h, -2.0 * kern.dim) / static_cast<double>(e.n);
  const double sum =
      blocked_sum(e.n, [&](std::size_t i) { return kde_term(e, kern, h, x0, y0, i); });
  return sum * scale;
}

double kde_at(const Ensemble& e, const Kernel& kern, const SpatialIndex& index, double h,
              std::span<const double> x0, std::span<const double> y0) {
  if (!(h > 0.0)) throw InvalidModelError("bandwidth must be positive");
  const double scale = std::pow(h, -2.0 * kern.dim) / static_cast<double>(e.n);
  NeumaierSum acc;
  for (std::size_t i : index.gather(x0, y0)) acc.add(kde_term(e, kern, h, x0, y0, i));
  return acc.value() * scale;
}

double kde_at(const Ensemble& e, const Kernel& kern, double h, std::span<const double> x0,
              std::span<const double> y0) {
  if (!(h > 0.0)) throw InvalidModelError("bandwidth must be positive");
  const SpatialIndex index(e, kern.support * h);
  return kde_at(e, kern, index, h, x0, y0);
}

double variance_term(double h, double n, double varpi, const Kernel& kern) {
  return varpi * kern.l2_norm_sq * std::log(n) / (n * std::pow(h, 2.0 * kern.dim));
}

GlResult gl_select(const Ensemble& e, const Kernel& kern, const BandwidthGrid& grid, double varpi,
                   std::span<const double> x0, std::span<const double> y0) {
  grid.validate();
  if (grid.n != e.n) throw ConfigError("bandwidth grid was built for a different sample size");
  GlResult res;
  res.varpi = varpi;
  res.table.reserve(grid.hs.size());
  for (double h : grid.hs) {
    GlResult::Entry entry;
    entry.h = h;
    entry.mu_hat = kde_at(e, kern, h, x0, y0);
    entry.v = variance_term(h, static_cast<double>(e.n), varpi, kern);
    res.table.push_back(entry);
  }
  for (std::size_t i = 0; i < res.table.size(); ++i) {
    double a = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      const double diff = res.table[i].mu_hat - res.table[j].mu_hat;
      a = std::max(a, diff * diff - (res.table[i].v + res.table[j].v));
    }
    res.table[i].a = a;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < res.table.size(); ++i)
    if (res.table[i].a + res.table[i].v <= res.table[best].a + res.table[best].v) best = i;
  res.h_selected = res.table[best].h;
  res.estimate = res.table[best].mu_hat;
  return res;
}

double oracle_ratio(std::span<const GlResult> runs, double truth) {
  if (runs.empty()) throw InsufficientDataError("oracle ratio needs at least one run");
  const std::size_t grid_size = runs.front().table.size();
  NeumaierSum gl_err;
  std::vector<NeumaierSum> fixed_err(grid_size);
  for (const auto& r : runs) {
    if (r.table.size() != grid_size)
      throw InvalidModelError("oracle ratio runs must share one bandwidth grid");
    const double d = r.estimate - truth;
    gl_err.add(d * d);
    for (std::size_t k = 0; k < grid_size; ++k) {
      const double dk = r.table[k].mu_hat - truth;
      fixed_err[k].add(dk * dk);
    }
  }
  double best = fixed_err[0].value();
  for (std::size_t k = 1; k < grid_size; ++k) best = std::min(best, fixed_err[k].value());
  return gl_err.value() / best;
}

}  // namespace kmv
