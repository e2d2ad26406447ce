#include "kmv/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "kmv/rng.hpp"
#include "kmv/summation.hpp"

namespace kmv::kernels {

std::vector<double> ensemble_mean_x(const Ensemble& e, bool parallel) {
  const auto d = static_cast<std::size_t>(e.dim);
  std::vector<double> mean(d);
  for (std::size_t c = 0; c < d; ++c)
    mean[c] = blocked_mean(e.n, [&](std::size_t i) { return e.xs[i * d + c]; }, parallel);
  return mean;
}

void linear_force(const Ensemble& e, double lambda, std::span<double> out, bool parallel) {
  const auto d = static_cast<std::size_t>(e.dim);
  const auto mean = ensemble_mean_x(e, parallel);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t ip = 0; ip < static_cast<std::ptrdiff_t>(e.n); ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    for (std::size_t c = 0; c < d; ++c)
      out[i * d + c] = -lambda * (e.xs[i * d + c] - mean[c]);
  }
}

void general_force(const Ensemble& e, const PairKernelFn& h, std::span<double> out,
                   bool parallel) {
  const auto d = static_cast<std::size_t>(e.dim);
  const double inv_n = 1.0 / static_cast<double>(e.n);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t ip = 0; ip < static_cast<std::ptrdiff_t>(e.n); ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    std::vector<double> du(d), dv(d), hij(d);
    std::vector<NeumaierSum> acc(d);
    for (std::size_t j = 0; j < e.n; ++j) {
      for (std::size_t c = 0; c < d; ++c) {
        du[c] = e.xs[i * d + c] - e.xs[j * d + c];
        dv[c] = e.ys[i * d + c] - e.ys[j * d + c];
      }
      h(du, dv, hij);
      for (std::size_t c = 0; c < d; ++c) acc[c].add(hij[c]);
    }
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] = acc[c].value() * inv_n;
  }
}

void interaction(const Ensemble& e, const DriftSpec& spec, std::vector<double>& out,
                 bool parallel) {
  if (std::holds_alternative<std::monostate>(spec.interaction)) {
    out.clear();
    return;
  }
  out.resize(e.n * static_cast<std::size_t>(e.dim));
  if (const auto* lin = std::get_if<LinearInteraction>(&spec.interaction)) {
    linear_force(e, lin->lambda, out, parallel);
  } else {
    general_force(e, std::get<GeneralInteraction>(spec.interaction).h, out, parallel);
  }
}

namespace {

inline void matvec_rm(const std::vector<double>& m, std::size_t d, const double* v, double* out,
                      bool accumulate) {
  for (std::size_t r = 0; r < d; ++r) {
    double s = accumulate ? out[r] : 0.0;
    for (std::size_t c = 0; c < d; ++c) s += m[r * d + c] * v[c];
    out[r] = s;
  }
}

}  // namespace

void drift(const DriftSpec& spec, double t, const Ensemble& e, std::span<const double> force,
           std::span<double> dx, std::span<double> dy, bool parallel) {
  const auto d = static_cast<std::size_t>(e.dim);
  const bool has_force = !force.empty();
  switch (spec.family) {
    case DriftSpec::Family::fhn: {
      const FhnTheta th = spec.theta;
#pragma omp parallel for schedule(static) if (parallel)
      for (std::ptrdiff_t ip = 0; ip < static_cast<std::ptrdiff_t>(e.n); ++ip) {
        const auto i = static_cast<std::size_t>(ip);
        const double x = e.xs[i], y = e.ys[i];
        dx[i] = fhn_f(th, x, y) + (has_force ? force[i] : 0.0);
        dy[i] = fhn_g(th, x, y);
      }
      break;
    }
    case DriftSpec::Family::linear: {
#pragma omp parallel for schedule(static) if (parallel)
      for (std::ptrdiff_t ip = 0; ip < static_cast<std::ptrdiff_t>(e.n); ++ip) {
        const auto i = static_cast<std::size_t>(ip);
        matvec_rm(spec.a11, d, e.xs.data() + i * d, dx.data() + i * d, false);
        matvec_rm(spec.a12, d, e.ys.data() + i * d, dx.data() + i * d, true);
        matvec_rm(spec.a21, d, e.xs.data() + i * d, dy.data() + i * d, false);
        matvec_rm(spec.a22, d, e.ys.data() + i * d, dy.data() + i * d, true);
        if (has_force)
          for (std::size_t c = 0; c < d; ++c) dx[i * d + c] += force[i * d + c];
      }
      break;
    }
    case DriftSpec::Family::generic: {
#pragma omp parallel for schedule(static) if (parallel)
      for (std::ptrdiff_t ip = 0; ip < static_cast<std::ptrdiff_t>(e.n); ++ip) {
        const auto i = static_cast<std::size_t>(ip);
        spec.b1_single(t, e.x(i), e.y(i), dx.subspan(i * d, d));
        spec.b2(t, e.x(i), e.y(i), dy.subspan(i * d, d));
        if (has_force)
          for (std::size_t c = 0; c < d; ++c) dx[i * d + c] += force[i * d + c];
      }
      break;
    }
  }
}

void gaussian_increments(std::uint64_t seed, std::span<const std::uint64_t> stream_ids,
                         std::size_t n, int dim, std::uint64_t step_index, double sqrt_dt,
                         std::span<double> out, bool parallel) {
  const auto d = static_cast<std::size_t>(dim);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t ip = 0; ip < static_cast<std::ptrdiff_t>(n); ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    const std::uint64_t sid = stream_ids.empty() ? i : stream_ids[i];
    const std::uint64_t stream = rng::stream_id(rng::Domain::path, sid);
    for (std::size_t c = 0; c < d; ++c)
      out[i * d + c] =
          sqrt_dt * rng::normal_draw(seed, stream, step_index * d + c);
  }
}

std::size_t first_inadmissible(const Ensemble& e, double limit, bool parallel) {
  const auto d = static_cast<std::size_t>(e.dim);
  std::size_t bad = e.n;
#pragma omp parallel for schedule(static) reduction(min : bad) if (parallel)
  for (std::ptrdiff_t ip = 0; ip < static_cast<std::ptrdiff_t>(e.n); ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    for (std::size_t c = 0; c < d; ++c) {
      const double x = e.xs[i * d + c], y = e.ys[i * d + c];
      if (!std::isfinite(x) || !std::isfinite(y) || std::abs(x) > limit || std::abs(y) > limit) {
        bad = std::min(bad, i);
        break;
      }
    }
  }
  return bad;
}

std::array<double, kMomentCount> raw_moment_sums(const Ensemble& e, bool parallel) {
  if (e.dim != 1)
    throw UnsupportedDimensionError("moment functionals are defined for dim == 1 only");
  const std::size_t n = e.n;
  const std::size_t nblocks = sum_block_count(n);
  std::vector<std::array<NeumaierSum, kMomentCount>> partial(nblocks);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t bp = 0; bp < static_cast<std::ptrdiff_t>(nblocks); ++bp) {
    const auto b = static_cast<std::size_t>(bp);
    const std::size_t lo = b * kSumBlock;
    const std::size_t hi = std::min(lo + kSumBlock, n);
    auto& acc = partial[b];
    double px[kMomentMaxOrder + 1], py[kMomentMaxOrder + 1];
    for (std::size_t i = lo; i < hi; ++i) {
      px[0] = 1.0;
      py[0] = 1.0;
      for (int p = 1; p <= kMomentMaxOrder; ++p) {
        px[p] = px[p - 1] * e.xs[i];
        py[p] = py[p - 1] * e.ys[i];
      }
      for (int s = 0; s <= kMomentMaxOrder; ++s)
        for (int k = 0; k <= s; ++k) acc[static_cast<std::size_t>(moment_index(k, s - k))].add(px[k] * py[s - k]);
    }
  }
  std::array<double, kMomentCount> out{};
  for (int m = 0; m < kMomentCount; ++m) {
    NeumaierSum total;
    for (std::size_t b = 0; b < nblocks; ++b)
      total.add(partial[b][static_cast<std::size_t>(m)].value());
    out[static_cast<std::size_t>(m)] = total.value();
  }
  return out;
}

namespace reference {

std::vector<double> ensemble_mean_x(const Ensemble& e) {
  const auto d = static_cast<std::size_t>(e.dim);
  std::vector<long double> acc(d, 0.0L);
  for (std::size_t i = 0; i < e.n; ++i)
    for (std::size_t c = 0; c < d; ++c) acc[c] += e.xs[i * d + c];
  std::vector<double> mean(d);
  for (std::size_t c = 0; c < d; ++c)
    mean[c] = static_cast<double>(acc[c] / static_cast<long double>(e.n));
  return mean;
}

void general_force(const Ensemble& e, const PairKernelFn& h, std::span<double> out) {
  const auto d = static_cast<std::size_t>(e.dim);
  std::vector<double> du(d), dv(d), hij(d);
  for (std::size_t i = 0; i < e.n; ++i) {
    std::vector<long double> acc(d, 0.0L);
    for (std::size_t j = 0; j < e.n; ++j) {
      for (std::size_t c = 0; c < d; ++c) {
        du[c] = e.xs[i * d + c] - e.xs[j * d + c];
        dv[c] = e.ys[i * d + c] - e.ys[j * d + c];
      }
      h(du, dv, hij);
      for (std::size_t c = 0; c < d; ++c) acc[c] += hij[c];
    }
    for (std::size_t c = 0; c < d; ++c)
      out[i * d + c] = static_cast<double>(acc[c] / static_cast<long double>(e.n));
  }
}

double mixed_moment_sum(const Ensemble& e, int k, int l) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < e.n; ++i) {
    long double term = 1.0L;
    for (int p = 0; p < k; ++p) term *= e.xs[i];
    for (int p = 0; p < l; ++p) term *= e.ys[i];
    acc += term;
  }
  return static_cast<double>(acc);
}

}  // namespace reference

}  // namespace kmv::kernels
