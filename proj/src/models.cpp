#include "kmv/models.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <nlohmann/json.hpp>

#include "kmv/rng.hpp"

namespace kmv {

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void matvec(const std::vector<double>& m, int dim, std::span<const double> v,
            std::span<double> out, bool accumulate) {
  for (int r = 0; r < dim; ++r) {
    double s = accumulate ? out[static_cast<std::size_t>(r)] : 0.0;
    for (int c = 0; c < dim; ++c)
      s += m[static_cast<std::size_t>(r * dim + c)] * v[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = s;
  }
}

std::vector<double> to_row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      out[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return out;
}

}  // namespace

void FhnTheta::validate() const {
  for (double v : as_array())
    if (!std::isfinite(v)) throw InvalidModelError("FhN parameter is not finite");
  if (!(sigma2 > 0.0)) throw InvalidModelError("FhN sigma2 must be positive");
}

void DriftSpec::validate() const {
  if (dim < 1) throw InvalidModelError("drift dimension must be positive");
  // sigma = 0 is allowed for deterministic test configurations even though
  // the modelled systems have sigma > 0.
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw InvalidModelError("diffusivity sigma must be finite and >= 0");
  if (!b1_single || !b2) throw InvalidModelError("drift fields are not set");
  if (const auto* lin = std::get_if<LinearInteraction>(&interaction)) {
    if (!(lin->lambda >= 0.0) || !std::isfinite(lin->lambda))
      throw InvalidModelError("interaction strength lambda must be finite and >= 0");
  }
}

DriftSpec fhn_drift(const FhnTheta& theta) {
  theta.validate();
  DriftSpec spec;
  spec.dim = 1;
  spec.family = DriftSpec::Family::fhn;
  spec.theta = theta;
  spec.sigma = std::sqrt(theta.sigma2);
  spec.interaction = LinearInteraction{theta.lambda};
  const FhnTheta th = theta;
  spec.b1_single = [th](double, std::span<const double> x, std::span<const double> y,
                        std::span<double> out) { out[0] = fhn_f(th, x[0], y[0]); };
  spec.b2 = [th](double, std::span<const double> x, std::span<const double> y,
                 std::span<double> out) { out[0] = fhn_g(th, x[0], y[0]); };
  return spec;
}

// ---------------------------------------------------------------------------
// Initial laws

int InitialLaw::state_dim() const {
  return std::visit(
      [](const auto& l) -> int {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GaussianLaw>) {
          return static_cast<int>(l.mean.size());
        } else if constexpr (std::is_same_v<T, UniformBoxLaw>) {
          return static_cast<int>(l.lo.size());
        } else if constexpr (std::is_same_v<T, PointMassLaw>) {
          return static_cast<int>(l.z0.size());
        } else {
          return l.components.empty() ? 0 : l.components.front().state_dim();
        }
      },
      law);
}

std::vector<double> InitialLaw::mean() const {
  return std::visit(
      [](const auto& l) -> std::vector<double> {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GaussianLaw>) {
          return {l.mean.data(), l.mean.data() + l.mean.size()};
        } else if constexpr (std::is_same_v<T, UniformBoxLaw>) {
          std::vector<double> m(l.lo.size());
          for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (l.lo[i] + l.hi[i]);
          return m;
        } else if constexpr (std::is_same_v<T, PointMassLaw>) {
          return l.z0;
        } else {
          std::vector<double> m(l.components.front().mean().size(), 0.0);
          for (std::size_t c = 0; c < l.components.size(); ++c) {
            const auto mc = l.components[c].mean();
            for (std::size_t i = 0; i < m.size(); ++i) m[i] += l.weights[c] * mc[i];
          }
          return m;
        }
      },
      law);
}

void InitialLaw::validate() const {
  const int sd = state_dim();
  if (sd < 2 || sd % 2 != 0)
    throw InvalidModelError("initial law must live on R^d x R^d (even state dimension)");
  std::visit(
      [sd](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GaussianLaw>) {
          if (l.cov.rows() != sd || l.cov.cols() != sd)
            throw InvalidModelError("gaussian covariance shape mismatch");
          if (!l.mean.allFinite() || !l.cov.allFinite())
            throw InvalidModelError("gaussian initial law has non-finite entries");
          Eigen::LLT<Eigen::MatrixXd> llt(l.cov);
          if (llt.info() != Eigen::Success)
            throw InvalidModelError("gaussian covariance is not symmetric positive definite");
        } else if constexpr (std::is_same_v<T, UniformBoxLaw>) {
          if (l.hi.size() != l.lo.size()) throw InvalidModelError("uniform box shape mismatch");
          for (std::size_t i = 0; i < l.lo.size(); ++i)
            if (!(l.lo[i] <= l.hi[i]) || !std::isfinite(l.lo[i]) || !std::isfinite(l.hi[i]))
              throw InvalidModelError("uniform box must satisfy lo <= hi with finite bounds");
        } else if constexpr (std::is_same_v<T, PointMassLaw>) {
          if (!all_finite(l.z0)) throw InvalidModelError("point mass must be finite");
        } else {
          if (l.components.empty() || l.weights.size() != l.components.size())
            throw InvalidModelError("mixture weights/components mismatch");
          double sum = 0.0;
          for (double w : l.weights) {
            if (!(w >= 0.0)) throw InvalidModelError("mixture weights must be >= 0");
            sum += w;
          }
          if (std::abs(sum - 1.0) > 1e-12) throw InvalidModelError("mixture weights must sum to 1");
          for (const auto& c : l.components) {
            c.validate();
            if (c.state_dim() != sd)
              throw InvalidModelError("mixture components must share the state dimension");
          }
        }
      },
      law);
}

namespace {

// Pre-factored sampler so Cholesky is done once, not per particle.
struct PreparedLaw {
  std::function<void(rng::Stream&, std::span<double>)> draw;
};

PreparedLaw prepare(const InitialLaw& law) {
  return std::visit(
      [](const auto& l) -> PreparedLaw {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GaussianLaw>) {
          Eigen::LLT<Eigen::MatrixXd> llt(l.cov);
          if (llt.info() != Eigen::Success)
            throw InvalidModelError("gaussian covariance is not symmetric positive definite");
          const Eigen::MatrixXd chol = llt.matrixL();
          const Eigen::VectorXd mean = l.mean;
          return {[chol, mean](rng::Stream& st, std::span<double> out) {
            const auto k = static_cast<std::size_t>(mean.size());
            Eigen::VectorXd xi(static_cast<Eigen::Index>(k));
            for (std::size_t i = 0; i < k; ++i) xi[static_cast<Eigen::Index>(i)] = st.normal();
            const Eigen::VectorXd z = mean + chol * xi;
            for (std::size_t i = 0; i < k; ++i) out[i] = z[static_cast<Eigen::Index>(i)];
          }};
        } else if constexpr (std::is_same_v<T, UniformBoxLaw>) {
          const auto lo = l.lo;
          const auto hi = l.hi;
          return {[lo, hi](rng::Stream& st, std::span<double> out) {
            for (std::size_t i = 0; i < lo.size(); ++i)
              out[i] = lo[i] + (hi[i] - lo[i]) * st.uniform();
          }};
        } else if constexpr (std::is_same_v<T, PointMassLaw>) {
          const auto z0 = l.z0;
          return {[z0](rng::Stream&, std::span<double> out) {
            for (std::size_t i = 0; i < z0.size(); ++i) out[i] = z0[i];
          }};
        } else {
          std::vector<double> cumulative;
          double acc = 0.0;
          for (double w : l.weights) cumulative.push_back(acc += w);
          cumulative.back() = 1.0;
          std::vector<PreparedLaw> comps;
          comps.reserve(l.components.size());
          for (const auto& c : l.components) comps.push_back(prepare(c));
          return {[cumulative, comps](rng::Stream& st, std::span<double> out) {
            const double u = st.uniform();
            std::size_t c = 0;
            while (c + 1 < cumulative.size() && u >= cumulative[c]) ++c;
            comps[c].draw(st, out);
          }};
        }
      },
      law.law);
}

}  // namespace

Ensemble sample_initial(const InitialLaw& law, std::size_t n, std::uint64_t seed,
                        std::span<const std::uint64_t> stream_ids) {
  law.validate();
  if (n < 1) throw InvalidModelError("cannot sample an empty ensemble");
  if (!stream_ids.empty() && stream_ids.size() != n)
    throw InvalidModelError("stream id list must match the particle count");
  const int d = law.dim();
  const auto prepared = prepare(law);
  Ensemble e = Ensemble::zeros(n, d);
  const auto dd = static_cast<std::size_t>(d);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ip = 0; ip < static_cast<std::ptrdiff_t>(n); ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    const std::uint64_t sid = stream_ids.empty() ? i : stream_ids[i];
    rng::Stream st(seed, rng::stream_id(rng::Domain::init, sid));
    std::vector<double> z(2 * dd);
    prepared.draw(st, z);
    for (std::size_t c = 0; c < dd; ++c) {
      e.xs[i * dd + c] = z[c];
      e.ys[i * dd + c] = z[dd + c];
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Kinetic OU oracle

void KineticOuParams::validate() const {
  const int d = dim();
  if (d < 1) throw InvalidModelError("kinetic OU dimension must be positive");
  for (const auto* m : {&a11, &a12, &a21, &a22}) {
    if (m->rows() != d || m->cols() != d)
      throw InvalidModelError("kinetic OU blocks must share a d x d shape");
    if (!m->allFinite()) throw InvalidModelError("kinetic OU blocks must be finite");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw InvalidModelError("diffusivity sigma must be finite and >= 0");
  if (initial.mean.size() != 2 * d)
    throw InvalidModelError("kinetic OU initial law dimension mismatch");
  // Unlike sampled Gaussian laws, the oracle accepts semi-definite initial
  // covariances (point-mass starts); the density is then defined for t > 0.
  if (initial.cov.rows() != 2 * d || initial.cov.cols() != 2 * d ||
      !initial.cov.allFinite() || !initial.mean.allFinite())
    throw InvalidModelError("kinetic OU initial moments are malformed");
  if ((initial.cov - initial.cov.transpose()).norm() > 1e-12)
    throw InvalidModelError("kinetic OU initial covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(initial.cov);
  if (eig.eigenvalues().minCoeff() < -1e-12)
    throw InvalidModelError("kinetic OU initial covariance must be positive semi-definite");
}

DriftSpec kou_drift(const KineticOuParams& p) {
  p.validate();
  DriftSpec spec;
  spec.dim = p.dim();
  spec.family = DriftSpec::Family::linear;
  spec.sigma = p.sigma;
  spec.a11 = to_row_major(p.a11);
  spec.a12 = to_row_major(p.a12);
  spec.a21 = to_row_major(p.a21);
  spec.a22 = to_row_major(p.a22);
  const int d = spec.dim;
  const auto a11 = spec.a11, a12 = spec.a12, a21 = spec.a21, a22 = spec.a22;
  spec.b1_single = [a11, a12, d](double, std::span<const double> x, std::span<const double> y,
                                 std::span<double> out) {
    matvec(a11, d, x, out, false);
    matvec(a12, d, y, out, true);
  };
  spec.b2 = [a21, a22, d](double, std::span<const double> x, std::span<const double> y,
                          std::span<double> out) {
    matvec(a21, d, x, out, false);
    matvec(a22, d, y, out, true);
  };
  return spec;
}

GaussianMoments lyapunov_moments(const KineticOuParams& p, double t, double max_step) {
  p.validate();
  if (!(t >= 0.0)) throw InvalidModelError("time must be >= 0");
  const int d = p.dim();
  Eigen::MatrixXd a(2 * d, 2 * d);
  a << p.a11, p.a12, p.a21, p.a22;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  q.topLeftCorner(d, d) = p.sigma * p.sigma * Eigen::MatrixXd::Identity(d, d);

  Eigen::VectorXd m = p.initial.mean;
  Eigen::MatrixXd s = p.initial.cov;
  if (t == 0.0) return {m, s};

  const auto steps = static_cast<std::size_t>(std::ceil(t / max_step - 1e-12));
  const double h = t / static_cast<double>(steps);
  const auto fm = [&a](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; };
  const auto fs = [&a, &q](const Eigen::MatrixXd& v) -> Eigen::MatrixXd {
    return a * v + v * a.transpose() + q;
  };
  for (std::size_t i = 0; i < steps; ++i) {
    const Eigen::VectorXd k1 = fm(m);
    const Eigen::VectorXd k2 = fm(m + 0.5 * h * k1);
    const Eigen::VectorXd k3 = fm(m + 0.5 * h * k2);
    const Eigen::VectorXd k4 = fm(m + h * k3);
    const Eigen::MatrixXd l1 = fs(s);
    const Eigen::MatrixXd l2 = fs(s + 0.5 * h * l1);
    const Eigen::MatrixXd l3 = fs(s + 0.5 * h * l2);
    const Eigen::MatrixXd l4 = fs(s + h * l3);
    m += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    s += (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
  }
  return {m, s};
}

double gaussian_density(const GaussianMoments& g, std::span<const double> z) {
  const auto k = g.mean.size();
  if (static_cast<Eigen::Index>(z.size()) != k)
    throw InvalidModelError("density evaluation point has wrong dimension");
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success)
    throw DegenerateDensityError("law is singular at the requested time");
  Eigen::VectorXd diff(k);
  for (Eigen::Index i = 0; i < k; ++i) diff[i] = z[static_cast<std::size_t>(i)] - g.mean[i];
  const Eigen::VectorXd w = llt.matrixL().solve(diff);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) log_det += std::log(llt.matrixL()(i, i));
  const double log_density = -0.5 * w.squaredNorm() - log_det -
                             0.5 * static_cast<double>(k) * std::log(2.0 * M_PI);
  return std::exp(log_density);
}

double density_at(const KineticOuParams& p, double t, std::span<const double> x,
                  std::span<const double> y) {
  const auto g = lyapunov_moments(p, t);
  std::vector<double> z(x.begin(), x.end());
  z.insert(z.end(), y.begin(), y.end());
  return gaussian_density(g, z);
}

// ---------------------------------------------------------------------------
// JSON

using nlohmann::json;

namespace {

void require_keys(const json& j, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional, const std::string& where) {
  for (const char* k : required)
    if (!j.contains(k)) throw ConfigError(where + ": missing required field \"" + k + "\"");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : required) known = known || it.key() == k;
    for (const char* k : optional) known = known || it.key() == k;
    if (!known) throw ConfigError(where + ": unknown field \"" + it.key() + "\"");
  }
}

std::vector<double> as_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of numbers");
  std::vector<double> v;
  for (const auto& e : j) {
    if (!e.is_number()) throw ConfigError(where + " must be an array of numbers");
    v.push_back(e.get<double>());
  }
  return v;
}

Eigen::MatrixXd as_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a non-empty 2-d array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto first = as_vector(j[0], where);
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(first.size()));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = as_vector(j[static_cast<std::size_t>(r)], where);
    if (static_cast<Eigen::Index>(row.size()) != m.cols())
      throw ConfigError(where + " must be rectangular");
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

}  // namespace

InitialLaw initial_law_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("initial: missing field \"kind\"");
  const std::string kind = j.at("kind").get<std::string>();
  InitialLaw law;
  if (kind == "gaussian") {
    require_keys(j, {"kind", "mean", "cov"}, {}, "initial(gaussian)");
    GaussianLaw g;
    const auto mean = as_vector(j.at("mean"), "initial.mean");
    g.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    g.cov = as_matrix(j.at("cov"), "initial.cov");
    law.law = std::move(g);
  } else if (kind == "uniform") {
    require_keys(j, {"kind", "lo", "hi"}, {}, "initial(uniform)");
    law.law = UniformBoxLaw{as_vector(j.at("lo"), "initial.lo"), as_vector(j.at("hi"), "initial.hi")};
  } else if (kind == "point_mass") {
    require_keys(j, {"kind", "z0"}, {}, "initial(point_mass)");
    law.law = PointMassLaw{as_vector(j.at("z0"), "initial.z0")};
  } else if (kind == "mixture") {
    require_keys(j, {"kind", "weights", "components"}, {}, "initial(mixture)");
    MixtureLaw mix;
    mix.weights = as_vector(j.at("weights"), "initial.weights");
    for (const auto& c : j.at("components")) mix.components.push_back(initial_law_from_json(c));
    law.law = std::move(mix);
  } else {
    throw ConfigError("initial: unknown kind \"" + kind + "\"");
  }
  law.validate();
  return law;
}

json initial_law_to_json(const InitialLaw& law) {
  return std::visit(
      [](const auto& l) -> json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GaussianLaw>) {
          json cov = json::array();
          for (Eigen::Index r = 0; r < l.cov.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < l.cov.cols(); ++c) row.push_back(l.cov(r, c));
            cov.push_back(row);
          }
          return {{"kind", "gaussian"},
                  {"mean", std::vector<double>(l.mean.data(), l.mean.data() + l.mean.size())},
                  {"cov", cov}};
        } else if constexpr (std::is_same_v<T, UniformBoxLaw>) {
          return {{"kind", "uniform"}, {"lo", l.lo}, {"hi", l.hi}};
        } else if constexpr (std::is_same_v<T, PointMassLaw>) {
          return {{"kind", "point_mass"}, {"z0", l.z0}};
        } else {
          json comps = json::array();
          for (const auto& c : l.components) comps.push_back(initial_law_to_json(c));
          return {{"kind", "mixture"}, {"weights", l.weights}, {"components", comps}};
        }
      },
      law.law);
}

json fhn_theta_to_json(const FhnTheta& th) {
  return {{"I", th.current},     {"a_bar", th.a_bar},   {"b_bar", th.b_bar},
          {"c_bar", th.c_bar},   {"lambda", th.lambda}, {"sigma2", th.sigma2}};
}

ModelSpec model_from_json(const json& j) {
  if (!j.is_object() || !j.contains("model")) throw ConfigError("model: missing field \"model\"");
  const std::string kind = j.at("model").get<std::string>();
  ModelSpec spec;
  if (kind == "fhn") {
    require_keys(j, {"model", "theta", "initial"}, {"sigma"}, "model(fhn)");
    const json& tj = j.at("theta");
    require_keys(tj, {"I", "a_bar", "b_bar", "c_bar", "lambda", "sigma2"}, {}, "model.theta");
    FhnTheta th{tj.at("I").get<double>(),      tj.at("a_bar").get<double>(),
                tj.at("b_bar").get<double>(),  tj.at("c_bar").get<double>(),
                tj.at("lambda").get<double>(), tj.at("sigma2").get<double>()};
    if (j.contains("sigma")) {
      const double sigma = j.at("sigma").get<double>();
      if (std::abs(sigma * sigma - th.sigma2) > 1e-12 * std::max(1.0, th.sigma2))
        throw ConfigError("model(fhn): sigma is inconsistent with theta.sigma2");
    }
    spec.drift = fhn_drift(th);
    spec.source = th;
  } else if (kind == "kou") {
    require_keys(j, {"model", "matrices", "sigma", "initial"}, {}, "model(kou)");
    const json& mj = j.at("matrices");
    require_keys(mj, {"a11", "a12", "a21", "a22"}, {}, "model.matrices");
    KineticOuParams p;
    p.a11 = as_matrix(mj.at("a11"), "model.matrices.a11");
    p.a12 = as_matrix(mj.at("a12"), "model.matrices.a12");
    p.a21 = as_matrix(mj.at("a21"), "model.matrices.a21");
    p.a22 = as_matrix(mj.at("a22"), "model.matrices.a22");
    p.sigma = j.at("sigma").get<double>();
    const InitialLaw init = initial_law_from_json(j.at("initial"));
    const auto* g = std::get_if<GaussianLaw>(&init.law);
    if (!g) throw ConfigError("model(kou): initial law must be gaussian");
    p.initial = *g;
    spec.drift = kou_drift(p);
    spec.initial = init;
    spec.source = p;
    return spec;
  } else if (kind == "custom") {
    require_keys(j, {"model", "fields", "sigma", "initial"}, {}, "model(custom)");
    const json& fj = j.at("fields");
    require_keys(fj, {"b1", "b2"}, {"interaction", "dim"}, "model.fields");
    const int dim = fj.contains("dim") ? fj.at("dim").get<int>() : 1;
    DriftSpec d;
    d.dim = dim;
    d.sigma = j.at("sigma").get<double>();
    const auto named_field = [&](const std::string& name) -> VectorField {
      if (name == "zero")
        return [](double, std::span<const double>, std::span<const double>,
                  std::span<double> out) {
          for (auto& v : out) v = 0.0;
        };
      throw ConfigError("model(custom): unknown field \"" + name + "\" (supported: zero)");
    };
    d.b1_single = named_field(fj.at("b1").get<std::string>());
    d.b2 = named_field(fj.at("b2").get<std::string>());
    if (fj.contains("interaction")) {
      const json& ij = fj.at("interaction");
      require_keys(ij, {"kind"}, {"lambda"}, "model.fields.interaction");
      const std::string ik = ij.at("kind").get<std::string>();
      if (ik == "linear") {
        d.interaction = LinearInteraction{ij.at("lambda").get<double>()};
      } else if (ik != "none") {
        throw ConfigError("model(custom): unknown interaction kind \"" + ik + "\"");
      }
    }
    spec.drift = std::move(d);
  } else {
    throw ConfigError("model: unknown model \"" + kind + "\"");
  }
  spec.initial = initial_law_from_json(j.at("initial"));
  if (spec.initial.dim() != spec.drift.dim)
    throw ConfigError("model: initial law dimension does not match the drift dimension");
  spec.drift.validate();
  return spec;
}

}  // namespace kmv
