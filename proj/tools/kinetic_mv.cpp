#include <CLI11.hpp>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "kmv/errors.hpp"
#include "kmv/log.hpp"
#include "kmv/io.hpp"
#include "kmv/workflows.hpp"

namespace {

// Exit codes: 0 ok, 2 config error, 3 blow-up, 4 insufficient data, 1 other.
constexpr int kExitConfig = 2;
constexpr int kExitBlowUp = 3;
constexpr int kExitInsufficientData = 4;

void emit_error(const char* type, const std::string& message, const nlohmann::json& extra = {}) {
  nlohmann::json err = {{"error", {{"type", type}, {"message", message}}}};
  for (auto it = extra.begin(); it != extra.end(); ++it) err["error"][it.key()] = it.value();
  std::fprintf(stderr, "%s\n", err.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinetic interacting-particle toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  int threads = 0;
  bool dry_run = false;

  for (const char* name : {"simulate", "density", "params", "deviations", "convergence"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run configuration (json)")->required();
    sub->add_option("--out", out_dir, "artifact directory");
    sub->add_option("--threads", threads, "OpenMP worker count");
    sub->add_flag("--dry-run", dry_run, "validate and print the execution plan only");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string requested = app.get_subcommands().front()->get_name();

  try {
    const auto cfg = kmv::parse_run_config(kmv::read_json(config_path));
    if (cfg.workflow != requested)
      throw kmv::ConfigError("config workflow \"" + cfg.workflow +
                             "\" does not match subcommand \"" + requested + "\"");
    kmv::RunOptions opts;
    opts.threads = threads;
    opts.dry_run = dry_run;
    kmv::run_workflow(cfg, out_dir, opts);
    return 0;
  } catch (const kmv::ConfigError& e) {
    emit_error("config", e.what());
    return kExitConfig;
  } catch (const kmv::InvalidModelError& e) {
    emit_error("config", e.what());
    return kExitConfig;
  } catch (const kmv::BlowUpError& e) {
    emit_error("blow_up", e.what(),
               {{"t", e.t}, {"step", e.step}, {"particle", e.particle}});
    return kExitBlowUp;
  } catch (const kmv::InsufficientDataError& e) {
    emit_error("insufficient_data", e.what());
    return kExitInsufficientData;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
}
