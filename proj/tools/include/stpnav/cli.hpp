#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stpnav/agent.hpp"
#include "stpnav/harness.hpp"
#include "stpnav/sim.hpp"

namespace stpnav::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Malformed or inconsistent configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  /// Generated scenarios; empty when `world` is set.
  std::vector<std::string> scenarios;
  std::optional<std::filesystem::path> world;
  std::optional<std::filesystem::path> library;
  /// Seed for generated worlds; each run's own seed when unset.
  std::optional<std::uint64_t> world_seed;
  std::vector<Method> methods = all_methods();
  std::vector<std::uint64_t> seeds = {0};
  RouteOptions route;
  SimParams sim;
  AgentConfig agent;
  CaptureSweep capture;
  double ticks_per_second = 30.0;
};

/// Parses the JSON config text. Relative paths resolve against `base_dir`.
/// Throws ConfigError on syntax errors, unknown keys, wrong types and
/// failed parameter validation.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<Method> method;
  int jobs = 1;
  bool trace = false;
  bool carry_memory = false;
};

/// Applies command-line overrides. `seed` shifts the seed list to start at
/// the given value, keeping its length.
void apply_overrides(RunConfig& cfg, const RunOverrides& ov);

struct RunCell {
  std::string scenario;
  Method method = Method::kFull;
  std::uint64_t seed = 0;
};

/// Scenario-major, then method in config order, then seed.
std::vector<RunCell> expand_cells(const RunConfig& cfg);

/// Runs every cell with up to `jobs` threads. Results come back in cell order.
/// When `trace_dir` is set, each run writes <scenario>_<method>_<seed>.jsonl.
std::vector<RunReport> run_matrix(const RunConfig& cfg, int jobs,
                                  const std::optional<std::filesystem::path>& trace_dir = std::nullopt);

/// Writes reports.json, segments.jsonl and the aggregate tables into `out`.
void write_run_outputs(const RunConfig& cfg, const std::vector<RunReport>& reports,
                       const std::filesystem::path& out);

// Subcommands. Each returns a process exit code and reports errors on stderr.
int cmd_worldgen(const std::string& scenario, std::uint64_t seed, const std::filesystem::path& out);
int cmd_capture(const std::filesystem::path& world, const std::filesystem::path& out,
                const std::optional<std::filesystem::path>& config);
int cmd_run(const std::filesystem::path& config, const RunOverrides& ov, const std::filesystem::path& out);
int cmd_report(const std::filesystem::path& log_dir, const std::filesystem::path& out);

}  // namespace stpnav::cli
