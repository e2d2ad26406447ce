// Serial reference vs production kernels (1 thread) vs OpenMP (all cores).

#include <benchmark/benchmark.h>
#include <omp.h>

#include "kmv/kde.hpp"
#include "kmv/kernels.hpp"
#include "kmv/models.hpp"
#include "kmv/simulator.hpp"

namespace {

kmv::Ensemble make_ensemble(std::size_t n) {
  kmv::InitialLaw law;
  Eigen::VectorXd mean(2);
  mean << 0.1, -0.2;
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.2, 0.2, 0.5;
  law.law = kmv::GaussianLaw{mean, cov};
  return kmv::sample_initial(law, n, 99);
}

kmv::DriftSpec fhn_spec() {
  return kmv::fhn_drift({0.5, 0.7 / 3.0, 0.8 / 3.0, 1.0 / 3.0, 0.3, 0.04});
}

void bench_mean_reference(benchmark::State& state) {
  const auto e = make_ensemble(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kmv::kernels::reference::ensemble_mean_x(e));
}

void bench_mean_blocked(benchmark::State& state) {
  const auto e = make_ensemble(static_cast<std::size_t>(state.range(0)));
  const bool parallel = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(kmv::kernels::ensemble_mean_x(e, parallel));
}

void bench_moment_table(benchmark::State& state) {
  const auto e = make_ensemble(static_cast<std::size_t>(state.range(0)));
  const bool parallel = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(kmv::kernels::raw_moment_sums(e, parallel));
}

void bench_step(benchmark::State& state) {
  auto e = make_ensemble(static_cast<std::size_t>(state.range(0)));
  const bool parallel = state.range(1) != 0;
  const auto spec = fhn_spec();
  std::uint64_t step_index = 0;
  for (auto _ : state) {
    kmv::step(e, spec, 1e-3, 7, step_index++, kmv::Scheme::euler_maruyama, {}, parallel);
    benchmark::DoNotOptimize(e.xs.data());
  }
}

void bench_general_force_reference(benchmark::State& state) {
  const auto e = make_ensemble(static_cast<std::size_t>(state.range(0)));
  const kmv::PairKernelFn h = [](std::span<const double> du, std::span<const double>,
                                 std::span<double> out) { out[0] = -0.3 * du[0]; };
  std::vector<double> out(e.n);
  for (auto _ : state) {
    kmv::kernels::reference::general_force(e, h, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void bench_general_force(benchmark::State& state) {
  const auto e = make_ensemble(static_cast<std::size_t>(state.range(0)));
  const bool parallel = state.range(1) != 0;
  const kmv::PairKernelFn h = [](std::span<const double> du, std::span<const double>,
                                 std::span<double> out) { out[0] = -0.3 * du[0]; };
  std::vector<double> out(e.n);
  for (auto _ : state) {
    kmv::kernels::general_force(e, h, out, parallel);
    benchmark::DoNotOptimize(out.data());
  }
}

void bench_kde_naive(benchmark::State& state) {
  const auto e = make_ensemble(static_cast<std::size_t>(state.range(0)));
  const auto kern = kmv::Kernel::make(kmv::KernelProfile::epanechnikov, 1);
  const double x0 = 0.0, y0 = 0.0;
  for (auto _ : state)
    benchmark::DoNotOptimize(kmv::kde_at_naive(e, kern, 0.3, {&x0, 1}, {&y0, 1}));
}

void bench_kde_indexed(benchmark::State& state) {
  const auto e = make_ensemble(static_cast<std::size_t>(state.range(0)));
  const auto kern = kmv::Kernel::make(kmv::KernelProfile::epanechnikov, 1);
  const kmv::SpatialIndex index(e, kern.support * 0.3);
  const double x0 = 0.0, y0 = 0.0;
  for (auto _ : state)
    benchmark::DoNotOptimize(kmv::kde_at(e, kern, index, 0.3, {&x0, 1}, {&y0, 1}));
}

}  // namespace

BENCHMARK(bench_mean_reference)->Arg(100000);
BENCHMARK(bench_mean_blocked)->Args({100000, 0})->Args({100000, 1});
BENCHMARK(bench_moment_table)->Args({100000, 0})->Args({100000, 1});
BENCHMARK(bench_step)->Args({100000, 0})->Args({100000, 1});
BENCHMARK(bench_general_force_reference)->Arg(2048);
BENCHMARK(bench_general_force)->Args({2048, 0})->Args({2048, 1});
BENCHMARK(bench_kde_naive)->Arg(100000);
BENCHMARK(bench_kde_indexed)->Arg(100000);

BENCHMARK_MAIN();
