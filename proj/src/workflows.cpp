#include "kmv/workflows.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>

#include "kmv/io.hpp"
#include "kmv/kde.hpp"
#include "kmv/fhn_inference.hpp"
#include "kmv/log.hpp"
#include "kmv/moments.hpp"
#include "kmv/rng.hpp"
#include "kmv/summation.hpp"

#ifndef KMV_VERSION
#define KMV_VERSION "0.0.0"
#endif
#ifndef KMV_GIT_DESCRIBE
#define KMV_GIT_DESCRIBE "unknown"
#endif

namespace kmv {

using nlohmann::json;

namespace {

void require_keys(const json& j, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const char* k : required)
    if (!j.contains(k)) throw ConfigError(where + ": missing required field \"" + k + "\"");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : required) known = known || it.key() == k;
    for (const char* k : optional) known = known || it.key() == k;
    if (!known) throw ConfigError(where + ": unknown field \"" + it.key() + "\"");
  }
}

std::vector<double> uniform_grid(double t_end, int count) {
  std::vector<double> times;
  for (int i = 0; i < count; ++i)
    times.push_back(t_end * static_cast<double>(i) / static_cast<double>(count - 1));
  return times;
}

std::vector<std::size_t> parse_ns(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a non-empty array");
  std::vector<std::size_t> ns;
  for (const auto& e : j) {
    if (!e.is_number_unsigned() || e.get<std::uint64_t>() < 1)
      throw ConfigError(where + " entries must be positive integers");
    ns.push_back(e.get<std::size_t>());
  }
  return ns;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  require_keys(j, {"schema", "workflow", "model", "sim"},
               {"threads", "density", "params", "deviations", "convergence"}, "config");
  if (!j.at("schema").is_string() || j.at("schema").get<std::string>() != kRunSchemaId)
    throw ConfigError(std::string("config: schema must be \"") + kRunSchemaId + "\"");

  RunConfig cfg;
  cfg.raw = j;
  cfg.workflow = j.at("workflow").get<std::string>();
  const bool known_workflow = cfg.workflow == "simulate" || cfg.workflow == "density" ||
                              cfg.workflow == "params" || cfg.workflow == "deviations" ||
                              cfg.workflow == "convergence";
  if (!known_workflow) throw ConfigError("config: unknown workflow \"" + cfg.workflow + "\"");
  for (const char* block : {"density", "params", "deviations", "convergence"})
    if (j.contains(block) && cfg.workflow != block)
      throw ConfigError(std::string("config: block \"") + block +
                        "\" does not match the requested workflow");

  cfg.model_json = j.at("model");
  ModelSpec model = model_from_json(cfg.model_json);
  cfg.model_source = model.source;

  const json& sim = j.at("sim");
  require_keys(sim, {"n", "t_end", "dt", "seed"}, {"snapshots", "scheme"}, "sim");
  if (!sim.at("n").is_number_unsigned() || sim.at("n").get<std::uint64_t>() < 1)
    throw ConfigError("sim.n must be a positive integer");
  cfg.sim.drift = std::move(model.drift);
  cfg.sim.initial = std::move(model.initial);
  cfg.sim.n = sim.at("n").get<std::size_t>();
  cfg.sim.t_end = sim.at("t_end").get<double>();
  cfg.sim.dt = sim.at("dt").get<double>();
  if (!sim.at("seed").is_number_unsigned()) throw ConfigError("sim.seed must be an unsigned integer");
  cfg.sim.seed = sim.at("seed").get<std::uint64_t>();
  if (sim.contains("scheme")) {
    const std::string s = sim.at("scheme").get<std::string>();
    if (s == "euler_maruyama") {
      cfg.sim.scheme = Scheme::euler_maruyama;
    } else if (s == "heun") {
      cfg.sim.scheme = Scheme::heun;
    } else {
      throw ConfigError("sim.scheme must be \"euler_maruyama\" or \"heun\"");
    }
  }
  if (sim.contains("snapshots")) {
    const json& snaps = sim.at("snapshots");
    if (snaps.is_number_unsigned() && snaps.get<std::uint64_t>() >= 2) {
      cfg.sim.snapshot_times = uniform_grid(cfg.sim.t_end, snaps.get<int>());
    } else if (snaps.is_array()) {
      for (const auto& e : snaps) cfg.sim.snapshot_times.push_back(e.get<double>());
    } else {
      throw ConfigError("sim.snapshots must be a count >= 2 or an array of times");
    }
  } else {
    cfg.sim.snapshot_times = uniform_grid(cfg.sim.t_end, 201);
  }
  cfg.sim.validate();

  if (j.contains("threads")) {
    if (!j.at("threads").is_number_unsigned() || j.at("threads").get<std::uint64_t>() < 1)
      throw ConfigError("threads must be a positive integer");
    cfg.threads = j.at("threads").get<int>();
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Named test functions and analytic references

TestFunction named_test_function(const std::string& name) {
  TestFunction phi;
  phi.name = name;
  if (name == "one") {
    phi.eval = [](double, std::span<const double>, std::span<const double>) { return 1.0; };
    phi.growth = BoundedClass{1.0};
  } else if (name == "x") {
    phi.eval = [](double, std::span<const double> x, std::span<const double>) { return x[0]; };
    phi.growth = PolyGrowthClass{1.0, 1};
  } else if (name == "y") {
    phi.eval = [](double, std::span<const double>, std::span<const double> y) { return y[0]; };
    phi.growth = PolyGrowthClass{1.0, 1};
  } else if (name == "x2") {
    phi.eval = [](double, std::span<const double> x, std::span<const double>) {
      return x[0] * x[0];
    };
    phi.growth = PolyGrowthClass{1.0, 2};
  } else if (name == "x2py2") {
    phi.eval = [](double, std::span<const double> x, std::span<const double> y) {
      return x[0] * x[0] + y[0] * y[0];
    };
    phi.growth = PolyGrowthClass{1.0, 2};
  } else if (name == "cos_x") {
    phi.eval = [](double, std::span<const double> x, std::span<const double>) {
      return std::cos(x[0]);
    };
    phi.growth = BoundedClass{1.0};
  } else {
    throw ConfigError("unknown test function \"" + name +
                      "\" (supported: one, x, y, x2, x2py2, cos_x)");
  }
  return phi;
}

namespace {

double analytic_expectation(const KineticOuParams& p, const std::string& name, double t) {
  const auto g = lyapunov_moments(p, t);
  const double mx = g.mean(0);
  const double my = g.mean(p.dim());
  const double sxx = g.cov(0, 0);
  const double syy = g.cov(p.dim(), p.dim());
  if (name == "one") return 1.0;
  if (name == "x") return mx;
  if (name == "y") return my;
  if (name == "x2") return sxx + mx * mx;
  if (name == "x2py2") return sxx + syy + mx * mx + my * my;
  if (name == "cos_x") return std::exp(-0.5 * sxx) * std::cos(mx);
  throw ConfigError("no analytic reference for test function \"" + name + "\"");
}

}  // namespace

double analytic_reference(const KineticOuParams& p, const TestFunction& phi,
                          std::span<const double> nodes) {
  if (p.dim() != 1)
    throw UnsupportedDimensionError("analytic references are implemented for dim == 1");
  if (const auto* dirac = std::get_if<DiracAt>(&phi.rho))
    return analytic_expectation(p, phi.name, dirac->t);
  if (nodes.size() < 2)
    throw InsufficientDataError("uniform rho needs at least two quadrature nodes");
  NeumaierSum acc;
  double prev = analytic_expectation(p, phi.name, nodes[0]);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double next = analytic_expectation(p, phi.name, nodes[i + 1]);
    acc.add(0.5 * (nodes[i + 1] - nodes[i]) * (prev + next));
    prev = next;
  }
  return acc.value() / (nodes.back() - nodes.front());
}

double linear_r2(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (syy == 0.0) return 1.0;
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (intercept + slope * x[i]);
    ss_res += r * r;
  }
  return 1.0 - ss_res / syy;
}

double neg_log_linearity_r2(const TailReport& report, double gamma) {
  // The tabulated gamma nearest the requested one.
  double nearest = report.cells.empty() ? gamma : report.cells.front().gamma;
  for (const auto& cell : report.cells)
    if (std::abs(cell.gamma - gamma) < std::abs(nearest - gamma)) nearest = cell.gamma;
  std::vector<double> xs, ys;
  for (const auto& cell : report.cells)
    if (cell.gamma == nearest && cell.p_hat > 0.0) {
      xs.push_back(static_cast<double>(cell.n));
      ys.push_back(-std::log(cell.p_hat));
    }
  if (xs.size() < 3) return 0.0;
  return linear_r2(xs, ys);
}

// ---------------------------------------------------------------------------
// Workflows

namespace {

json run_meta(const RunConfig& cfg, double wall_seconds) {
  return json{{"schema", "kinetic-mv/meta/1"},
              {"version", KMV_VERSION},
              {"git_describe", KMV_GIT_DESCRIBE},
              {"wall_time_s", wall_seconds},
              {"seed", cfg.sim.seed},
              {"config", cfg.raw}};
}

void workflow_simulate(const RunConfig& cfg, const std::filesystem::path& out) {
  auto traj = simulate(cfg.sim);
  traj.config_echo = cfg.raw;
  write_trajectory(traj, out, /*with_meta=*/false);  // the workflow meta covers it
}

void workflow_density(const RunConfig& cfg, const std::filesystem::path& out) {
  const json& block = cfg.raw.at("density");
  require_keys(block, {"t0", "x0", "y0"}, {"kernel", "varpi", "grid"}, "density");
  const double t0 = block.at("t0").get<double>();
  std::vector<double> x0, y0;
  for (const auto& e : block.at("x0")) x0.push_back(e.get<double>());
  for (const auto& e : block.at("y0")) y0.push_back(e.get<double>());
  if (static_cast<int>(x0.size()) != cfg.sim.drift.dim ||
      static_cast<int>(y0.size()) != cfg.sim.drift.dim)
    throw ConfigError("density: x0/y0 must have the model dimension");
  bool have_t0 = false;
  for (double t : cfg.sim.normalized_snapshots()) have_t0 = have_t0 || std::abs(t - t0) < 1e-9;
  if (!have_t0) throw ConfigError("density: t0 must be one of the snapshot times");

  KernelProfile profile = KernelProfile::epanechnikov;
  if (block.contains("kernel")) {
    const std::string k = block.at("kernel").get<std::string>();
    if (k == "epanechnikov") {
      profile = KernelProfile::epanechnikov;
    } else if (k == "uniform_box") {
      profile = KernelProfile::uniform_box;
    } else if (k == "gaussian_truncated") {
      profile = KernelProfile::gaussian_truncated;
    } else {
      throw ConfigError("density: unknown kernel \"" + k + "\"");
    }
  }
  const double varpi = block.contains("varpi") ? block.at("varpi").get<double>() : kDefaultVarpi;
  if (!(varpi > 0.0)) throw ConfigError("density: varpi must be positive");

  const auto traj = simulate(cfg.sim);
  const auto& e = traj.at_time(t0).state;
  const Kernel kern = Kernel::make(profile, cfg.sim.drift.dim);
  BandwidthGrid grid;
  if (!block.contains("grid")) {
    grid = BandwidthGrid::geometric(e.n, e.dim);
  } else if (block.at("grid").is_array()) {
    grid.n = e.n;
    grid.dim = e.dim;
    for (const auto& h : block.at("grid")) grid.hs.push_back(h.get<double>());
    grid.validate();
  } else {
    const json& gj = block.at("grid");
    require_keys(gj, {}, {"count", "ratio"}, "density.grid");
    if (gj.contains("count")) {
      grid = BandwidthGrid::with_count(e.n, e.dim, gj.at("count").get<int>());
    } else if (gj.contains("ratio")) {
      grid = BandwidthGrid::geometric(e.n, e.dim, gj.at("ratio").get<double>());
    } else {
      throw ConfigError("density.grid: give count, ratio, or an explicit list");
    }
  }

  const auto res = gl_select(e, kern, grid, varpi, x0, y0);
  json table = json::array();
  for (const auto& row : res.table)
    table.push_back({{"h", row.h}, {"mu_hat", row.mu_hat}, {"V", row.v}, {"A", row.a}});
  write_json(json{{"estimate", res.estimate},
                  {"h_selected", res.h_selected},
                  {"varpi", res.varpi},
                  {"table", table}},
             out / "gl_result.json");
  CsvWriter curve(out / "gl_curve.csv", {"h", "mu_hat", "V", "A"});
  for (const auto& row : res.table) {
    curve.field(row.h);
    curve.field(row.mu_hat);
    curve.field(row.v);
    curve.field(row.a);
    curve.end_row();
  }
}

void workflow_params(const RunConfig& cfg, const std::filesystem::path& out) {
  const auto* theta = std::get_if<FhnTheta>(&cfg.model_source);
  if (!theta) throw ConfigError("params: the model must be \"fhn\"");
  const json& block = cfg.raw.contains("params") ? cfg.raw.at("params") : json::object();
  require_keys(block, {}, {"Ns", "seeds"}, "params");

  const auto traj = simulate(cfg.sim);
  const auto est = solve_theta(build_system(traj));
  write_json(json{{"theta_hat", est.theta_hat},
                  {"cond", est.cond},
                  {"residual", est.residual},
                  {"n", est.n},
                  {"T", est.horizon},
                  {"ill_conditioned", est.ill_conditioned}},
             out / "theta_hat.json");

  if (block.contains("Ns")) {
    const auto ns = parse_ns(block.at("Ns"), "params.Ns");
    const int seeds = block.contains("seeds") ? block.at("seeds").get<int>() : 20;
    ScalingConfig sc;
    sc.truth = *theta;
    sc.initial = cfg.sim.initial;
    sc.t_end = cfg.sim.t_end;
    sc.dt = cfg.sim.dt;
    sc.snapshot_count = static_cast<int>(cfg.sim.normalized_snapshots().size());
    sc.scheme = cfg.sim.scheme;
    const auto report = error_scaling_study(sc, ns, seeds, cfg.sim.seed);
    CsvWriter csv(out / "scaling.csv", {"N", "seed", "err_I", "err_a_bar", "err_b_bar",
                                        "err_c_bar", "err_lambda", "err_sigma2", "err_norm"});
    for (const auto& row : report.rows) {
      csv.field(static_cast<long long>(row.n));
      csv.field(static_cast<long long>(row.seed));
      for (double v : row.error) csv.field(v);
      csv.field(row.error_norm);
      csv.end_row();
    }
    log_info("params: fitted log-log rmse slope " + format_double(report.slope));
  }
}

void workflow_deviations(const RunConfig& cfg, const std::filesystem::path& out, json& extra_meta) {
  const json& block = cfg.raw.at("deviations");
  require_keys(block, {"Ns", "R", "phi", "rho", "reference"}, {"gammas"}, "deviations");

  TailExperimentConfig tec;
  tec.ns = parse_ns(block.at("Ns"), "deviations.Ns");
  tec.replicates = block.at("R").get<int>();
  tec.seed = cfg.sim.seed;
  tec.phi = named_test_function(block.at("phi").get<std::string>());

  const json& rho = block.at("rho");
  require_keys(rho, {"kind"}, {"t"}, "deviations.rho");
  const std::string rk = rho.at("kind").get<std::string>();
  std::vector<double> snapshot_times;
  if (rk == "dirac") {
    const double t_star = rho.at("t").get<double>();
    if (t_star < 0.0 || t_star > cfg.sim.t_end)
      throw ConfigError("deviations.rho.t must lie in [0, t_end]");
    tec.phi.rho = DiracAt{t_star};
    snapshot_times = {0.0, t_star};
  } else if (rk == "uniform") {
    tec.phi.rho = UniformOn{};
    snapshot_times = cfg.sim.normalized_snapshots();
  } else {
    throw ConfigError("deviations.rho.kind must be \"dirac\" or \"uniform\"");
  }

  const SimConfig base = cfg.sim;
  tec.make_config = [base, snapshot_times](std::size_t n, std::uint64_t seed) {
    SimConfig run = base;
    run.n = n;
    run.seed = seed;
    run.snapshot_times = snapshot_times;
    return run;
  };

  const json& ref = block.at("reference");
  require_keys(ref, {"kind"}, {"n"}, "deviations.reference");
  const std::string ref_kind = ref.at("kind").get<std::string>();
  if (ref_kind == "analytic") {
    const auto* kou = std::get_if<KineticOuParams>(&cfg.model_source);
    if (!kou) throw ConfigError("deviations.reference: analytic references need the kou model");
    tec.reference = analytic_reference(*kou, tec.phi, snapshot_times);
  } else if (ref_kind == "big_run") {
    const auto n_ref = ref.at("n").get<std::size_t>();
    std::size_t n_max = 0;
    for (std::size_t n : tec.ns) n_max = std::max(n_max, n);
    if (n_ref < 64 * n_max)
      throw ConfigError("deviations.reference.n must be at least 64 x max(Ns)");
    auto ref_run = tec.make_config(n_ref, rng::derive_seed(cfg.sim.seed, 0xBEEFull));
    const auto ref_traj = simulate(ref_run);
    tec.reference = empirical_functional(ref_traj, tec.phi, 0.0);
    write_trajectory(ref_traj, out / "reference_run");
    extra_meta["reference_sha256"] = sha256_file(out / "reference_run" / "snapshots.csv");
    extra_meta["reference_n"] = n_ref;
  } else {
    throw ConfigError("deviations.reference.kind must be \"analytic\" or \"big_run\"");
  }
  extra_meta["reference_value"] = tec.reference;

  if (block.contains("gammas"))
    for (const auto& g : block.at("gammas")) tec.gammas.push_back(g.get<double>());

  const auto report = tail_experiment(tec);
  CsvWriter tails(out / "tails.csv", {"N", "gamma", "p_hat", "ci_lo", "ci_hi"});
  for (const auto& cell : report.cells) {
    tails.field(static_cast<long long>(cell.n));
    tails.field(cell.gamma);
    tails.field(cell.p_hat);
    tails.field(cell.ci_lo);
    tails.field(cell.ci_hi);
    tails.end_row();
  }
  const double gamma_star = report.quantile_abs(0, 0.10);
  write_json(json{{"v_hat", report.v_hat},
                  {"c_hat", report.c_hat},
                  {"c1_hat", report.c1_hat},
                  {"r2", neg_log_linearity_r2(report, gamma_star)},
                  {"excluded_blowups", report.excluded_blowups}},
             out / "fit.json");
}

void workflow_convergence(const RunConfig& cfg, const std::filesystem::path& out) {
  const json& block = cfg.raw.at("convergence");
  require_keys(block, {"Ns", "n_ref"}, {"seeds", "n_proj"}, "convergence");
  ChaosConfig cc;
  cc.ns = parse_ns(block.at("Ns"), "convergence.Ns");
  cc.n_ref = block.at("n_ref").get<std::size_t>();
  cc.seeds = block.contains("seeds") ? block.at("seeds").get<int>() : 20;
  cc.n_proj = block.contains("n_proj") ? block.at("n_proj").get<int>() : 64;
  cc.seed = cfg.sim.seed;
  const SimConfig base = cfg.sim;
  cc.make_config = [base](std::size_t n, std::uint64_t seed) {
    SimConfig run = base;
    run.n = n;
    run.seed = seed;
    return run;
  };
  const auto report = chaos_experiment(cc);
  CsvWriter csv(out / "chaos.csv", {"N", "w1_mean", "w1_se"});
  for (const auto& row : report.rows) {
    csv.field(static_cast<long long>(row.n));
    csv.field(row.w1_mean);
    csv.field(row.w1_se);
    csv.end_row();
  }
}

}  // namespace

void run_workflow(const RunConfig& cfg, const std::filesystem::path& out_dir,
                  const RunOptions& opts) {
  const int threads = opts.threads > 0 ? opts.threads : cfg.threads;
  if (threads > 0) omp_set_num_threads(threads);

  if (opts.dry_run) {
    json plan = {{"workflow", cfg.workflow},
                 {"n", cfg.sim.n},
                 {"t_end", cfg.sim.t_end},
                 {"dt", cfg.sim.dt},
                 {"snapshots", cfg.sim.normalized_snapshots().size()},
                 {"seed", cfg.sim.seed},
                 {"out", out_dir.string()},
                 {"threads", threads > 0 ? threads : omp_get_max_threads()}};
    std::printf("%s\n", plan.dump(2).c_str());
    return;
  }

  std::filesystem::create_directories(out_dir);
  const auto start = std::chrono::steady_clock::now();
  json extra_meta = json::object();

  log_info("workflow " + cfg.workflow + ": n=" + std::to_string(cfg.sim.n) +
           " t_end=" + format_double(cfg.sim.t_end) + " dt=" + format_double(cfg.sim.dt));
  if (cfg.workflow == "simulate") {
    workflow_simulate(cfg, out_dir);
  } else if (cfg.workflow == "density") {
    workflow_density(cfg, out_dir);
  } else if (cfg.workflow == "params") {
    workflow_params(cfg, out_dir);
  } else if (cfg.workflow == "deviations") {
    workflow_deviations(cfg, out_dir, extra_meta);
  } else {
    workflow_convergence(cfg, out_dir);
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json meta = run_meta(cfg, wall);
  for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();
  write_json(meta, out_dir / "meta.json");
  log_info("workflow " + cfg.workflow + " finished in " + format_double(wall) + " s");
}

int run_config_file(const std::filesystem::path& config_path,
                    const std::filesystem::path& out_dir, const RunOptions& opts) {
  const auto cfg = parse_run_config(read_json(config_path));
  run_workflow(cfg, out_dir, opts);
  return 0;
}

}  // namespace kmv
