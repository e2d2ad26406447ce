#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <omp.h>

#include <algorithm>
#include <cmath>

#include "kmv/kernels.hpp"
#include "kmv/models.hpp"
#include "kmv/rng.hpp"

using namespace kmv;

namespace {

Ensemble random_ensemble(std::size_t n, std::uint64_t seed, double spread = 2.0) {
  Ensemble e = Ensemble::zeros(n, 1);
  rng::Stream st(seed, 0);
  for (std::size_t i = 0; i < n; ++i) {
    e.xs[i] = spread * st.normal();
    e.ys[i] = spread * st.normal();
  }
  return e;
}

PairKernelFn linear_pair_kernel(double lambda) {
  return [lambda](std::span<const double> du, std::span<const double>, std::span<double> out) {
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = -lambda * du[c];
  };
}

}  // namespace

TEST_CASE("moment index enumerates all pairs up to total order 8") {
  int count = 0;
  std::vector<bool> seen(kernels::kMomentCount, false);
  for (int k = 0; k <= 8; ++k)
    for (int l = 0; l + k <= 8; ++l) {
      const int idx = kernels::moment_index(k, l);
      REQUIRE(idx >= 0);
      REQUIRE(idx < kernels::kMomentCount);
      CHECK(!seen[static_cast<std::size_t>(idx)]);
      seen[static_cast<std::size_t>(idx)] = true;
      ++count;
    }
  CHECK(count == kernels::kMomentCount);
  CHECK(kernels::moment_index(9, 0) == -1);
  CHECK(kernels::moment_index(4, 5) == -1);
}

TEST_CASE("parallel kernels reproduce the serial bits for any thread count") {
  const auto e = random_ensemble(12345, 7);
  const auto serial_mean = kernels::ensemble_mean_x(e, false);
  const auto serial_moments = kernels::raw_moment_sums(e, false);
  std::vector<double> serial_force(e.n);
  kernels::linear_force(e, 0.8, serial_force, false);

  const int original = omp_get_max_threads();
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    CHECK(kernels::ensemble_mean_x(e, true) == serial_mean);
    CHECK(kernels::raw_moment_sums(e, true) == serial_moments);
    std::vector<double> force(e.n);
    kernels::linear_force(e, 0.8, force, true);
    CHECK(force == serial_force);
  }
  omp_set_num_threads(original);
}

TEST_CASE("blocked mean agrees with the long-double reference") {
  const auto e = random_ensemble(30000, 11);
  const auto blocked = kernels::ensemble_mean_x(e);
  const auto reference = kernels::reference::ensemble_mean_x(e);
  CHECK(blocked[0] == doctest::Approx(reference[0]).epsilon(1e-13));
}

TEST_CASE("two-particle linear force matches the worked example") {
  Ensemble e = Ensemble::zeros(2, 1);
  e.xs = {0.0, 2.0};
  std::vector<double> force(2);
  kernels::linear_force(e, 2.0, force, false);
  CHECK(force[0] == doctest::Approx(2.0));
  CHECK(force[1] == doctest::Approx(-2.0));
}

TEST_CASE("single particle feels only the self term") {
  Ensemble e = Ensemble::zeros(1, 1);
  e.xs = {1.3};
  std::vector<double> lin(1), gen(1);
  kernels::linear_force(e, 2.5, lin, false);
  kernels::general_force(e, linear_pair_kernel(2.5), gen, false);
  CHECK(lin[0] == 0.0);
  CHECK(gen[0] == 0.0);
}

TEST_CASE("linear force equals the O(N^2) evaluation of H(u,v) = -lambda u") {
  const double lambda = 0.7;
  for (std::size_t n : {2ul, 50ul, 1000ul}) {
    const auto e = random_ensemble(n, 100 + n);
    std::vector<double> lin(n), gen(n), ref(n);
    kernels::linear_force(e, lambda, lin);
    kernels::general_force(e, linear_pair_kernel(lambda), gen);
    kernels::reference::general_force(e, linear_pair_kernel(lambda), ref);
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(lin[i]));
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(lin[i] - gen[i]) <= 1e-12 * static_cast<double>(n) * std::max(scale, 1.0));
      CHECK(std::abs(gen[i] - ref[i]) <= 1e-13 * static_cast<double>(n) * std::max(scale, 1.0));
    }
  }
}

TEST_CASE("family fast paths equal the generic callables bit for bit") {
  const FhnTheta th{0.5, 0.233, 0.267, 0.333, 0.3, 0.04};
  auto spec = fhn_drift(th);
  const auto e = random_ensemble(4096, 3);
  std::vector<double> fx(e.n), fy(e.n), gx(e.n), gy(e.n);
  kernels::drift(spec, 0.0, e, {}, fx, fy);
  DriftSpec generic = spec;
  generic.family = DriftSpec::Family::generic;
  kernels::drift(generic, 0.0, e, {}, gx, gy);
  CHECK(fx == gx);
  CHECK(fy == gy);

  KineticOuParams p;
  p.a11 = Eigen::MatrixXd::Constant(1, 1, -0.5);
  p.a12 = Eigen::MatrixXd::Constant(1, 1, 1.0);
  p.a21 = Eigen::MatrixXd::Constant(1, 1, -1.0);
  p.a22 = Eigen::MatrixXd::Constant(1, 1, -0.5);
  p.sigma = 1.0;
  p.initial.mean = Eigen::Vector2d::Zero();
  p.initial.cov = Eigen::Matrix2d::Identity();
  auto kou = kou_drift(p);
  kernels::drift(kou, 0.0, e, {}, fx, fy);
  DriftSpec kou_generic = kou;
  kou_generic.family = DriftSpec::Family::generic;
  kernels::drift(kou_generic, 0.0, e, {}, gx, gy);
  CHECK(fx == gx);
  CHECK(fy == gy);
}

TEST_CASE("moment sums match the long-double reference and survive shuffles") {
  const auto e = random_ensemble(20000, 23);
  const auto sums = kernels::raw_moment_sums(e);
  for (int k = 0; k <= 8; ++k)
    for (int l = 0; l + k <= 8; ++l) {
      const double ref = kernels::reference::mixed_moment_sum(e, k, l);
      const double got = sums[static_cast<std::size_t>(kernels::moment_index(k, l))];
      CHECK(got == doctest::Approx(ref).epsilon(1e-12));
    }

  // Deterministic shuffle; every moment moves by < 1e-12 relative.
  std::vector<std::size_t> perm(e.n);
  for (std::size_t i = 0; i < e.n; ++i) perm[i] = i;
  rng::Stream st(99, 0);
  for (std::size_t i = e.n; i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(st.uniform() * i)]);
  const auto shuffled = permute(e, perm);
  const auto sums2 = kernels::raw_moment_sums(shuffled);
  for (int m = 0; m < kernels::kMomentCount; ++m) {
    const double a = sums[static_cast<std::size_t>(m)];
    const double b = sums2[static_cast<std::size_t>(m)];
    CHECK(std::abs(a - b) <= 1e-12 * std::max({std::abs(a), std::abs(b), 1.0}));
  }
}

TEST_CASE("gaussian increments are stream-addressed and thread-independent") {
  std::vector<double> a(1000), b(1000);
  kernels::gaussian_increments(5, {}, 1000, 1, 17, 0.1, a, false);
  const int original = omp_get_max_threads();
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    kernels::gaussian_increments(5, {}, 1000, 1, 17, 0.1, b, true);
    CHECK(a == b);
  }
  omp_set_num_threads(original);

  // Draw for particle i depends only on its stream id.
  std::vector<std::uint64_t> ids(1000);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = 999 - i;
  kernels::gaussian_increments(5, ids, 1000, 1, 17, 0.1, b, true);
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(b[i] == a[999 - i]);
}

TEST_CASE("inadmissible coordinates are located at the first offender") {
  auto e = random_ensemble(5000, 31);
  CHECK(kernels::first_inadmissible(e, 1e8) == e.n);
  e.ys[4321] = std::numeric_limits<double>::quiet_NaN();
  e.xs[777] = 2e9;
  CHECK(kernels::first_inadmissible(e, 1e8) == 777);
  CHECK(kernels::first_inadmissible(e, 1e8, false) == 777);
}
