#include "stpnav/cli.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>
#include <type_traits>

#include <nlohmann/json.hpp>

namespace stpnav::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class T>
struct is_vector : std::false_type {};
template <class T>
struct is_vector<std::vector<T>> : std::true_type {};

template <class T>
T convert(const json& j, const std::string& where) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw ConfigError(where + ": expected a boolean");
    return j.get<bool>();
  } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
    if (!j.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
    return static_cast<T>(j.get<std::uint64_t>());
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
    const auto v = j.get<std::int64_t>();
    if (v < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
        v > static_cast<std::int64_t>(std::numeric_limits<T>::max()))
      throw ConfigError(where + ": integer out of range");
    return static_cast<T>(v);
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) throw ConfigError(where + ": expected a number");
    return j.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw ConfigError(where + ": expected a string");
    return j.get<std::string>();
  } else if constexpr (is_vector<T>::value) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array");
    T out;
    for (std::size_t i = 0; i < j.size(); ++i)
      out.push_back(convert<typename T::value_type>(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
  } else {
    static_assert(sizeof(T) == 0, "unsupported config type");
  }
}

// Reads an object while recording which keys were consumed, so that typos
// surface as errors instead of silently falling back to defaults.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class T>
  bool get(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return false;
    seen_.insert(key);
    out = convert<T>(*it, path(key));
    return true;
  }

  const json* raw(const char* key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path(k) + ": unknown key");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_sim(Section s, SimParams& p) {
  s.get("yaw_per_tap", p.yaw_per_tap);
  s.get("pitch_per_tap", p.pitch_per_tap);
  s.get("speed", p.speed);
  s.get("avatar_radius", p.avatar_radius);
  s.get("fov_deg", p.fov_deg);
  s.get("width", p.width);
  s.get("height", p.height);
  s.get("ticks_per_decision", p.ticks_per_decision);
  s.finish();
}

void read_control(Section s, ControlParams& p) {
  s.get("eps_x_in", p.eps_x_in);
  s.get("eps_x_out", p.eps_x_out);
  s.get("eps_y_in", p.eps_y_in);
  s.get("eps_y_out", p.eps_y_out);
  s.get("k", p.k);
  s.get("n_max", p.n_max);
  s.get("tau_on", p.tau_on);
  s.get("delta", p.delta);
  s.get("t_stag", p.t_stag);
  s.get("ssim_stag", p.ssim_stag);
  s.get("flow_stag", p.flow_stag);
  s.get("ring_size", p.ring_size);
  s.get("mstp_lost_limit", p.mstp_lost_limit);
  s.get("stable_frames", p.stable_frames);
  s.get("stable_iou", p.stable_iou);
  s.get("loop_revisits", p.loop_revisits);
  s.get("loop_hamming", p.loop_hamming);
  s.get("anchor_period", p.anchor_period);
  s.get("anchor_revisit_gap", p.anchor_revisit_gap);
  s.get("recover_backstep", p.recover_backstep);
  s.get("recover_taps", p.recover_taps);
  s.get("recover_escalate_after", p.recover_escalate_after);
  s.get("escape_min_deg", p.escape_min_deg);
  s.get("escape_max_deg", p.escape_max_deg);
  s.get("escape_burst", p.escape_burst);
  s.get("sectors", p.sectors);
  s.finish();
}

void read_bank(Section s, BankParams& p) {
  s.get("insert_period", p.insert_period);
  s.get("delta_h", p.delta_h);
  s.get("delta_z", p.delta_z);
  s.get("t_quar", p.t_quar);
  s.get("t_eval", p.t_eval);
  s.get("tau_iou", p.tau_iou);
  s.get("lambda", p.lambda);
  s.get("knn_k", p.knn_k);
  s.get("sector_kernel_width", p.sector_kernel_width);
  s.get("time_decay_halflife", p.time_decay_halflife);
  s.get("assoc_window", p.assoc_window);
  s.get("capacity", p.capacity);
  s.finish();
}

void read_noise(Section s, NoiseModel& p, bool& bias_set) {
  s.get("miss_prob", p.miss_prob);
  s.get("jitter_px", p.jitter_px);
  bias_set = s.get("sector_bias", p.sector_bias);
  s.get("decoy_rate", p.decoy_rate);
  s.get("dark_miss_boost", p.dark_miss_boost);
  s.finish();
}

void read_weights(Section s, ScoreWeights& p, bool& prior_set) {
  s.get("alpha", p.alpha);
  s.get("beta", p.beta);
  s.get("gamma", p.gamma);
  prior_set = s.get("sector_prior", p.sector_prior);
  s.get("free_weight", p.free_weight);
  s.finish();
}

void read_route(Section s, RouteOptions& p) {
  s.get("budget_ticks", p.budget_ticks);
  s.get("check_period", p.check_period);
  s.get("ncc_threshold", p.ncc_threshold);
  s.get("carry_memory", p.carry_memory);
  s.finish();
}

void read_capture(Section s, CaptureSweep& p) {
  s.get("n_yaw", p.n_yaw);
  s.get("yaw_step", p.yaw_step);
  s.get("pitches", p.pitches);
  s.finish();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Runs `body` and maps exceptions onto exit codes.
template <class F>
int guarded(F&& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "stpnav: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "stpnav: error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

RunConfig parse_config(const std::string& text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("syntax: ") + e.what());
  }
  RunConfig cfg;
  Section top(root, "");

  top.get("scenarios", cfg.scenarios);
  std::string path;
  if (top.get("world", path)) cfg.world = resolve(base_dir, path);
  if (top.get("library", path)) cfg.library = resolve(base_dir, path);
  std::uint64_t world_seed = 0;
  if (top.get("world_seed", world_seed)) cfg.world_seed = world_seed;

  std::vector<std::string> methods;
  if (top.get("methods", methods)) {
    cfg.methods.clear();
    for (const auto& m : methods) {
      try {
        cfg.methods.push_back(method_from_string(m));
      } catch (const std::exception&) {
        throw ConfigError("methods: unknown method '" + m + "'");
      }
    }
  }

  const bool has_seeds = top.get("seeds", cfg.seeds);
  int runs = 0;
  const bool has_runs = top.get("runs", runs);
  std::uint64_t seed_start = 0;
  const bool has_start = top.get("seed_start", seed_start);
  if (has_seeds && (has_runs || has_start)) throw ConfigError("seeds: give either 'seeds' or 'runs'/'seed_start'");
  if (has_runs || has_start) {
    if (has_runs && runs < 1) throw ConfigError("runs: must be >= 1");
    cfg.seeds.clear();
    for (int i = 0; i < (has_runs ? runs : 1); ++i) cfg.seeds.push_back(seed_start + static_cast<std::uint64_t>(i));
  }

  top.get("ticks_per_second", cfg.ticks_per_second);
  bool bias_set = false;
  bool prior_set = false;
  if (const auto* j = top.raw("sim")) read_sim(Section(*j, "sim"), cfg.sim);
  if (const auto* j = top.raw("control")) read_control(Section(*j, "control"), cfg.agent.control);
  if (const auto* j = top.raw("bank")) read_bank(Section(*j, "bank"), cfg.agent.bank);
  if (const auto* j = top.raw("noise")) read_noise(Section(*j, "noise"), cfg.agent.noise, bias_set);
  if (const auto* j = top.raw("weights")) read_weights(Section(*j, "weights"), cfg.agent.weights, prior_set);
  if (const auto* j = top.raw("route")) read_route(Section(*j, "route"), cfg.route);
  if (const auto* j = top.raw("capture")) read_capture(Section(*j, "capture"), cfg.capture);
  top.get("histogram_window", cfg.agent.histogram_window);
  top.finish();

  // Per-sector defaults follow K unless given explicitly.
  const int k = cfg.agent.control.sectors;
  if (k >= 1) {
    if (!bias_set) cfg.agent.noise.sector_bias.assign(static_cast<std::size_t>(k), NoiseModel{}.sector_bias.front());
    if (!prior_set)
      cfg.agent.weights.sector_prior.assign(static_cast<std::size_t>(k), ScoreWeights{}.sector_prior.front());
  }
  // The controller plans turns with the simulator's camera model.
  cfg.agent.control.yaw_per_tap = cfg.sim.yaw_per_tap;
  cfg.agent.control.fov_deg = cfg.sim.fov_deg;

  if (cfg.world && !cfg.scenarios.empty()) throw ConfigError("give either 'scenarios' or 'world', not both");
  if (!cfg.world && cfg.scenarios.empty()) throw ConfigError("one of 'scenarios' or 'world' is required");
  if (cfg.library && !cfg.world) throw ConfigError("library: requires 'world'");
  for (const auto& s : cfg.scenarios)
    if (std::find(scenario_names().begin(), scenario_names().end(), s) == scenario_names().end())
      throw ConfigError("scenarios: unknown scenario '" + s + "'");
  if (cfg.methods.empty()) throw ConfigError("methods: must not be empty");
  if (cfg.seeds.empty()) throw ConfigError("seeds: must not be empty");
  if (!(cfg.ticks_per_second > 0.0)) throw ConfigError("ticks_per_second: must be > 0");

  try {
    cfg.sim.validate();
    cfg.route.validate(cfg.sim);
    cfg.capture.validate();
    cfg.agent.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.parent_path());
}

void apply_overrides(RunConfig& cfg, const RunOverrides& ov) {
  if (ov.seed) {
    const std::size_t n = cfg.seeds.size();
    cfg.seeds.clear();
    for (std::size_t i = 0; i < n; ++i) cfg.seeds.push_back(*ov.seed + i);
  }
  if (ov.method) cfg.methods = {*ov.method};
  if (ov.carry_memory) cfg.route.carry_memory = true;
}

std::vector<RunCell> expand_cells(const RunConfig& cfg) {
  std::vector<std::string> names = cfg.scenarios;
  if (cfg.world) names = {cfg.world->string()};
  std::vector<RunCell> cells;
  for (const auto& name : names)
    for (const Method m : cfg.methods)
      for (const auto seed : cfg.seeds) cells.push_back({name, m, seed});
  return cells;
}

std::vector<RunReport> run_matrix(const RunConfig& cfg, int jobs, const std::optional<fs::path>& trace_dir) {
  if (jobs < 1) throw ConfigError("--jobs must be >= 1");
  const auto cells = expand_cells(cfg);

  // A fixed world file and its library are shared by every cell.
  std::optional<World> fixed_world;
  std::vector<MilestoneGroup> fixed_groups;
  if (cfg.world) {
    fixed_world = load_world(cfg.world->string());
    fixed_groups = cfg.library ? load_library(*cfg.library) : capture_library(*fixed_world, cfg.sim, cfg.capture);
  }
  if (trace_dir) fs::create_directories(*trace_dir);

  std::vector<RunReport> out(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const RunCell& c = cells[i];
        World world;
        std::vector<MilestoneGroup> groups;
        if (fixed_world) {
          world = *fixed_world;
          groups = fixed_groups;
        } else {
          world = generate_world(c.scenario, cfg.world_seed.value_or(c.seed));
          groups = capture_library(world, cfg.sim, cfg.capture);
        }
        AgentConfig agent = cfg.agent;
        agent.method = c.method;

        std::ofstream trace_out;
        TraceSink sink;
        if (trace_dir) {
          const fs::path file = *trace_dir / (world.scenario + "_" + to_string(c.method) + "_" +
                                              std::to_string(c.seed) + ".jsonl");
          trace_out.open(file, std::ios::binary);
          if (!trace_out) throw std::runtime_error("cannot write " + file.string());
          sink = [&trace_out](const std::string& line) { trace_out << line << '\n'; };
        }
        out[i] = run_route(world, groups, agent, cfg.sim, cfg.route, c.seed, sink);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const int n = std::min<int>(jobs, static_cast<int>(cells.size()));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

void write_run_outputs(const RunConfig& cfg, const std::vector<RunReport>& reports, const fs::path& out) {
  fs::create_directories(out);
  emit_report(aggregate(reports, cfg.ticks_per_second), reports, out, cfg.ticks_per_second);

  std::string lines;
  for (const auto& r : reports) {
    for (const auto& s : r.segments) {
      json j = json::parse(segment_to_json(s, cfg.ticks_per_second));
      j["route"] = r.route;
      j["method"] = to_string(r.method);
      j["seed"] = r.seed;
      lines += j.dump();
      lines += '\n';
    }
  }
  write_file(out / "segments.jsonl", lines);
}

int cmd_worldgen(const std::string& scenario, std::uint64_t seed, const fs::path& out) {
  return guarded([&] {
    const auto& names = scenario_names();
    if (std::find(names.begin(), names.end(), scenario) == names.end())
      throw ConfigError("unknown scenario '" + scenario + "'");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_world(generate_world(scenario, seed), out.string());
  });
}

int cmd_capture(const fs::path& world, const fs::path& out, const std::optional<fs::path>& config) {
  return guarded([&] {
    SimParams sim;
    CaptureSweep sweep;
    if (config) {
      // Only the camera and sweep settings matter here; the rest of the file
      // is validated but otherwise ignored.
      json root;
      try {
        root = json::parse(read_file(*config));
      } catch (const json::parse_error& e) {
        throw ConfigError(std::string("syntax: ") + e.what());
      }
      Section top(root, "");
      if (const auto* j = top.raw("sim")) read_sim(Section(*j, "sim"), sim);
      if (const auto* j = top.raw("capture")) read_capture(Section(*j, "capture"), sweep);
      try {
        sim.validate();
        sweep.validate();
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    }
    const World w = load_world(world.string());
    save_library(capture_library(w, sim, sweep), out);
  });
}

int cmd_run(const fs::path& config, const RunOverrides& ov, const fs::path& out) {
  return guarded([&] {
    RunConfig cfg = load_config(config);
    apply_overrides(cfg, ov);
    if (ov.jobs < 1) throw ConfigError("--jobs must be >= 1");
    std::optional<fs::path> trace_dir;
    if (ov.trace) trace_dir = out / "trace";
    fs::create_directories(out);
    const auto reports = run_matrix(cfg, ov.jobs, trace_dir);
    write_run_outputs(cfg, reports, out);
  });
}

int cmd_report(const fs::path& log_dir, const fs::path& out) {
  return guarded([&] {
    const fs::path src = fs::is_directory(log_dir) ? log_dir / "reports.json" : log_dir;
    const std::string text = read_file(src);
    const json root = json::parse(text);
    const double tps = root.value("ticks_per_second", 30.0);
    const auto reports = reports_from_json(text);
    fs::create_directories(out);
    emit_report(aggregate(reports, tps), reports, out, tps);
  });
}

}  // namespace stpnav::cli
