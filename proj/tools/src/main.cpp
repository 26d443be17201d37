#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stpnav/cli.hpp"

int main(int argc, char** argv) {
  using namespace stpnav;
  CLI::App app{"Screen-only navigation simulator and evaluation harness"};
  app.require_subcommand(1);

  std::string scenario;
  std::uint64_t seed = 0;
  std::string out;
  auto* worldgen = app.add_subcommand("worldgen", "Generate a scenario world file");
  worldgen->add_option("scenario", scenario, "Scenario template name")->required();
  worldgen->add_option("--seed", seed, "Generator seed");
  worldgen->add_option("--out", out, "Output world file")->required();

  std::string world;
  std::string capture_config;
  auto* capture = app.add_subcommand("capture", "Capture the milestone library of a world");
  capture->add_option("world", world, "World file")->required();
  capture->add_option("--out", out, "Output library directory")->required();
  capture->add_option("--config", capture_config, "Config file providing sim and capture settings");

  std::string config;
  cli::RunOverrides ov;
  std::optional<std::uint64_t> run_seed;
  std::string method;
  auto* run = app.add_subcommand("run", "Run the configured seeds x methods x scenarios matrix");
  run->add_option("config", config, "Config file (JSON)")->required();
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--seed", run_seed, "First seed; the configured number of seeds is kept");
  run->add_option("--method", method, "Restrict to one method")
      ->check(CLI::IsMember({"NAIVE", "FSM", "FULL"}));
  run->add_option("--jobs", ov.jobs, "Parallel route instances")->check(CLI::PositiveNumber);
  run->add_flag("--trace", ov.trace, "Write per-run decision traces");
  run->add_flag("--carry-memory", ov.carry_memory, "Keep the memory bank across segments");

  std::string logs;
  auto* report = app.add_subcommand("report", "Aggregate a run's logs into tables");
  report->add_option("logs", logs, "Run output directory or reports.json")->required();
  report->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitConfig;
  }

  if (*worldgen) return cli::cmd_worldgen(scenario, seed, out);
  if (*capture)
    return cli::cmd_capture(world, out,
                            capture_config.empty() ? std::nullopt : std::optional<std::filesystem::path>(capture_config));
  if (*run) {
    ov.seed = run_seed;
    if (!method.empty()) ov.method = method_from_string(method);
    return cli::cmd_run(config, ov, out);
  }
  return cli::cmd_report(logs, out);
}
