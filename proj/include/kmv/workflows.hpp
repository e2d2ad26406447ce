#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "kmv/deviations.hpp"
#include "kmv/simulator.hpp"

namespace kmv {

inline constexpr const char* kRunSchemaId = "kinetic-mv/run/1";

struct RunOptions {
  int threads = 0;  // 0: leave the OpenMP default
  bool dry_run = false;
};

// Parsed and validated run configuration (strict: unknown fields reject).
struct RunConfig {
  nlohmann::json raw;
  std::string workflow;
  SimConfig sim;
  nlohmann::json model_json;
  // Analytic sources when the model is one of the named families.
  std::variant<std::monostate, FhnTheta, KineticOuParams> model_source;
  int threads = 0;
};

RunConfig parse_run_config(const nlohmann::json& j);

// Named test functions usable from config files.
TestFunction named_test_function(const std::string& name);

// E[phi] under the analytic law of a linear kinetic model, integrated
// against rho (Dirac: one time; uniform: trapezoid over the given nodes).
double analytic_reference(const KineticOuParams& p, const TestFunction& phi,
                          std::span<const double> nodes);

// R^2 of the linear fit -log p_hat ~ N at fixed gamma (levels with
// p_hat > 0); the tail-shape linearity diagnostic.
double neg_log_linearity_r2(const TailReport& report, double gamma);
double linear_r2(std::span<const double> x, std::span<const double> y);

// Executes a workflow and writes its artifacts under out_dir.
void run_workflow(const RunConfig& cfg, const std::filesystem::path& out_dir,
                  const RunOptions& opts);

// Convenience wrapper: load, validate, run. Returns the process exit code.
int run_config_file(const std::filesystem::path& config_path,
                    const std::filesystem::path& out_dir, const RunOptions& opts);

}  // namespace kmv
