#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kmv/ensemble.hpp"
#include "kmv/errors.hpp"

#include <nlohmann/json_fwd.hpp>

namespace kmv {

// ---------------------------------------------------------------------------
// FitzHugh-Nagumo parameter vector, in the linear-in-parameters form
//   X-drift  F(x, y) = x - x^3/3 - y + I
//   Y-drift  G(x, y) = c_bar x + a_bar - b_bar y
// with mean-field coupling strength lambda and squared diffusivity sigma2.
struct FhnTheta {
  double current = 0.0;  // I
  double a_bar = 0.0;
  double b_bar = 0.0;
  double c_bar = 0.0;
  double lambda = 0.0;
  double sigma2 = 1.0;

  // Fixed coordinate order (I, a_bar, b_bar, c_bar, lambda, sigma2) shared
  // with the moment-system estimator.
  std::array<double, 6> as_array() const { return {current, a_bar, b_bar, c_bar, lambda, sigma2}; }
  static FhnTheta from_array(const std::array<double, 6>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
  }
  void validate() const;
};

inline double fhn_f(const FhnTheta& th, double x, double y) {
  return x - x * x * x / 3.0 - y + th.current;
}
inline double fhn_g(const FhnTheta& th, double x, double y) {
  return th.c_bar * x + th.a_bar - th.b_bar * y;
}

// ---------------------------------------------------------------------------
// Drift specification of the particle system
//   dX_i = ( b1_single(t, X_i, Y_i) + mean_j H(Z_i - Z_j) ) dt + sigma dB_i
//   dY_i =   b2(t, X_i, Y_i) dt
// Noise acts on X only.

using VectorField =
    std::function<void(double t, std::span<const double> x, std::span<const double> y,
                       std::span<double> out)>;
using PairKernelFn = std::function<void(std::span<const double> du, std::span<const double> dv,
                                        std::span<double> out)>;

struct LinearInteraction {
  double lambda = 0.0;  // H(u, v) = -lambda u
};
struct GeneralInteraction {
  PairKernelFn h;
};
using Interaction = std::variant<std::monostate, LinearInteraction, GeneralInteraction>;

struct DriftSpec {
  int dim = 1;
  VectorField b1_single;  // X-drift without the interaction part
  VectorField b2;         // Y-drift
  Interaction interaction{};
  double sigma = 1.0;

  // The stepping kernels special-case the two analytic families; the generic
  // callables above are always populated and must agree with the fast path.
  enum class Family { generic, fhn, linear };
  Family family = Family::generic;
  FhnTheta theta{};                          // family == fhn
  std::vector<double> a11, a12, a21, a22;    // family == linear, dim x dim row-major

  void validate() const;
};

// Builds the FhN drift (dim = 1, linear interaction, sigma = sqrt(sigma2)).
DriftSpec fhn_drift(const FhnTheta& theta);

// ---------------------------------------------------------------------------
// Initial laws on R^d x R^d. The first `dim` coordinates of mean/lo/hi/z0 are
// the position block, the last `dim` the velocity block. All four kinds have
// sub-Gaussian tails.

struct InitialLaw;

struct GaussianLaw {
  Eigen::VectorXd mean;  // length 2 dim
  Eigen::MatrixXd cov;   // SPD, 2 dim x 2 dim
};
struct UniformBoxLaw {
  std::vector<double> lo, hi;
};
struct PointMassLaw {
  std::vector<double> z0;
};
struct MixtureLaw {
  std::vector<double> weights;
  std::vector<InitialLaw> components;
};

struct InitialLaw {
  std::variant<GaussianLaw, UniformBoxLaw, PointMassLaw, MixtureLaw> law;

  int state_dim() const;            // 2 dim
  int dim() const { return state_dim() / 2; }
  std::vector<double> mean() const;  // length 2 dim
  void validate() const;
};

// n i.i.d. draws; deterministic given seed. Particle i reads stream
// stream_ids[i] (identity when empty).
Ensemble sample_initial(const InitialLaw& law, std::size_t n, std::uint64_t seed,
                        std::span<const std::uint64_t> stream_ids = {});

// ---------------------------------------------------------------------------
// Linear kinetic model with Gaussian initial law: the one sub-family whose
// law stays Gaussian for all t, used as analytic ground truth in tests and
// benchmarks.
//   X' = A11 X + A12 Y + sigma dB,   Y' = A21 X + A22 Y.

struct KineticOuParams {
  Eigen::MatrixXd a11, a12, a21, a22;  // each dim x dim
  double sigma = 1.0;
  GaussianLaw initial;

  int dim() const { return static_cast<int>(a11.rows()); }
  void validate() const;
};

DriftSpec kou_drift(const KineticOuParams& p);

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Mean and covariance of the law at time t. The pair solves
//   m' = A m,   S' = A S + S A^T + diag(sigma^2 I, 0),
// integrated with classical RK4 at step <= max_step.
GaussianMoments lyapunov_moments(const KineticOuParams& p, double t, double max_step = 1e-3);

// Gaussian density value; throws DegenerateDensityError when cov is singular.
double gaussian_density(const GaussianMoments& g, std::span<const double> z);

// Density of the law at (x, y) at time t.
double density_at(const KineticOuParams& p, double t, std::span<const double> x,
                  std::span<const double> y);

// ---------------------------------------------------------------------------
// JSON model document
//   {"model": "fhn"|"kou"|"custom", "theta": {...} | "matrices": {...},
//    "sigma": ..., "initial": {...}}

struct ModelSpec {
  DriftSpec drift;
  InitialLaw initial;
  // Present for "fhn" / "kou" so analytic references are available downstream.
  std::variant<std::monostate, FhnTheta, KineticOuParams> source;

  const FhnTheta* fhn() const { return std::get_if<FhnTheta>(&source); }
  const KineticOuParams* kou() const { return std::get_if<KineticOuParams>(&source); }
};

ModelSpec model_from_json(const nlohmann::json& j);
nlohmann::json initial_law_to_json(const InitialLaw& law);
InitialLaw initial_law_from_json(const nlohmann::json& j);
nlohmann::json fhn_theta_to_json(const FhnTheta& th);

}  // namespace kmv
