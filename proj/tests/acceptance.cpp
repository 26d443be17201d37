// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Optional arguments select criteria by number.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "stpnav/cli.hpp"
#include "stpnav/controller.hpp"
#include "stpnav/harness.hpp"
#include "stpnav/memory.hpp"
#include "stpnav/rng.hpp"
#include "stpnav/vision.hpp"

using namespace stpnav;
namespace fs = std::filesystem;

namespace {

struct Result {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SegmentLog fixture_segment(int k, bool hit, std::int64_t start) {
  SegmentLog s;
  s.index = k;
  s.from_milestone = k;
  s.to_milestone = k + 1;
  s.termination = hit ? Termination::kMilestone : Termination::kTimeout;
  s.start_tick = start;
  s.end_tick = start + 300;
  s.frames = 100;
  s.fsm_dwell[0] = 300;
  return s;
}

RunReport fixture_run(std::uint64_t seed, const std::vector<bool>& hits) {
  RunReport r;
  r.route = "fixture";
  r.method = Method::kFsm;
  r.seed = seed;
  std::int64_t t = 0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    r.segments.push_back(fixture_segment(static_cast<int>(k), hits[k], t));
    r.milestones_reached.push_back(hits[k]);
    t += 300;
  }
  r.total_ticks = t;
  r.route_success = std::all_of(hits.begin(), hits.end(), [](bool b) { return b; });
  return r;
}

Result criterion_1() {
  const auto t0 = Clock::now();
  const int ok[6] = {10, 10, 6, 7, 10, 10};
  std::vector<RunReport> six_rates;
  for (int run = 0; run < 10; ++run) {
    std::vector<bool> hits;
    for (int k = 0; k < 6; ++k) hits.push_back(run < ok[k]);
    six_rates.push_back(fixture_run(static_cast<std::uint64_t>(run), hits));
  }
  const MetricsRow ms = aggregate(six_rates).at(0);

  std::vector<RunReport> half;
  for (int run = 0; run < 10; ++run) half.push_back(fixture_run(static_cast<std::uint64_t>(run), {true, run < 5, true}));
  const MetricsRow rs = aggregate(half).at(0);
  const double secs = seconds_since(t0);

  Result r;
  r.pass = std::abs(ms.ms_mean - 88.3) <= 0.05 && std::abs(ms.ms_std - 16.8) <= 0.05 && rs.rs_pct == 50.0 &&
           secs < 1.0;
  r.detail = fmt("MS %.4f +- %.4f (want 88.3 +- 16.8, tol 0.05), RS %.1f%% (want 50), %.3fs", ms.ms_mean,
                 ms.ms_std, rs.rs_pct, secs);
  return r;
}

std::vector<double> unit_vec(Rng& rng, const std::vector<double>& center, double spread) {
  std::vector<double> v = center;
  double n = 0;
  for (double& x : v) {
    x += rng.normal(0, spread);
    n += x * x;
  }
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

Result criterion_2() {
  Rng rng(2024);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const double ex = rng.uniform(-0.6, 0.6), ey = rng.uniform(-0.6, 0.6);
    const double k = rng.uniform(0.01, 60.0);
    const int n_max = static_cast<int>(rng.uniform_int(1, 12));
    mismatches += pulse_count({ex, ey}, k, n_max) != oracle::pulse_count(ex, ey, k, n_max);
  }

  Rng brng(4);
  double worst = 0;
  int nonzero = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    BankParams p;
    p.knn_k = static_cast<int>(brng.uniform_int(1, 10));
    p.lambda = brng.uniform(0.1, 2.0);
    p.sector_kernel_width = brng.uniform(0.5, 3.0);
    p.time_decay_halflife = brng.uniform(50, 3000);
    MemoryBank b(p);
    std::vector<double> c(kEmbeddingDim, 0.0);
    c[static_cast<std::size_t>(brng.uniform_int(0, kEmbeddingDim - 1))] = 1.0;
    c = unit_vec(brng, c, 0.3);
    const int steps = static_cast<int>(brng.uniform_int(20, 300));
    for (std::int64_t t = 0; t < steps; ++t) {
      if (brng.bernoulli(0.3)) b.consider_insert(Embedding{unit_vec(brng, c, 0.35)}, brng.next_u64(), 1, t);
      if (brng.bernoulli(0.2)) b.associate_decision(static_cast<int>(brng.uniform_int(1, 8)), {10, 10, 50, 50}, t);
      std::optional<MstpSelection> m;
      if (brng.bernoulli(0.5)) {
        m.emplace();
        m->candidate.box = {10, 10, 50, 50};
      }
      b.label_due(t, m);
      b.promote(t);
    }
    const std::int64_t now = steps + brng.uniform_int(0, 500);
    const Embedding q{unit_vec(brng, c, 0.35)};
    for (int s = 1; s <= 8; ++s) {
      const double got = b.penalty(q, s, now);
      worst = std::max(worst, std::abs(got - oracle::penalty(b.active(), q.values, s, now, p)));
      nonzero += got > 0;
    }
  }
  Result r;
  r.pass = mismatches == 0 && worst <= 1e-12 && nonzero > 0;
  r.detail = fmt("pulse_count mismatches %d/10000, penalty max |err| %.3g over 1000 banks (%d nonzero)", mismatches,
                 worst, nonzero);
  return r;
}

std::vector<RunReport> run_scenario(const std::string& name, Method m, int seeds, const AgentConfig& base,
                                    const RouteOptions& opts) {
  SimParams sim;
  std::vector<RunReport> out;
  for (int s = 0; s < seeds; ++s) {
    const World w = generate_world(name, static_cast<std::uint64_t>(s));
    const auto groups = capture_library(w, sim);
    AgentConfig cfg = base;
    cfg.method = m;
    out.push_back(run_route(w, groups, cfg, sim, opts, static_cast<std::uint64_t>(s)));
  }
  return out;
}

Result criterion_3() {
  const auto t0 = Clock::now();
  std::vector<RunReport> all;
  for (Method m : all_methods()) {
    auto v = run_scenario("straight_corridor", m, 10, AgentConfig{}, RouteOptions{});
    all.insert(all.end(), v.begin(), v.end());
  }
  const double secs = seconds_since(t0);
  bool every = true;
  for (const auto& r : all)
    for (const auto& s : r.segments) every = every && s.termination == Termination::kMilestone;
  std::string rs;
  bool all_rs = true;
  for (const auto& row : aggregate(all)) {
    rs += fmt("%s %.0f%% ", to_string(row.method), row.rs_pct);
    all_rs = all_rs && row.rs_pct == 100.0;
  }
  Result r;
  r.pass = all_rs && every && secs < 60.0;
  r.detail = fmt("RS %sall MILESTONE=%s, %.1fs", rs.c_str(), every ? "yes" : "no", secs);
  return r;
}

Result criterion_4() {
  AgentConfig cfg;
  cfg.noise.dark_miss_boost = 0.5;
  for (int i = 0; i < 4; ++i) cfg.noise.sector_bias[static_cast<std::size_t>(i)] *= 1.3;
  const auto naive = aggregate(run_scenario("dark_right_door", Method::kNaive, 20, cfg, RouteOptions{})).at(0);
  const auto fsm = aggregate(run_scenario("dark_right_door", Method::kFsm, 20, cfg, RouteOptions{})).at(0);
  const double n1 = naive.per_milestone.at(0), n2 = naive.per_milestone.at(1), f1 = fsm.per_milestone.at(0);
  Result r;
  r.pass = n1 < 50.0 && n2 > 80.0 && f1 > n1;
  r.detail = fmt("NAIVE M1 %.0f%% (<50), NAIVE M2 %.0f%% (>80), FSM M1 %.0f%% (> NAIVE M1)", n1, n2, f1);
  return r;
}

Result criterion_5() {
  RouteOptions opts;
  opts.carry_memory = true;
  auto mean_dc = [](const std::vector<RunReport>& v) {
    double s = 0;
    for (const auto& r : v)
      for (const auto& g : r.segments) s += static_cast<double>(g.deadend_commits);
    return s / static_cast<double>(v.size());
  };
  const auto fsm = run_scenario("t_junction_deadend", Method::kFsm, 20, AgentConfig{}, opts);
  const auto full = run_scenario("t_junction_deadend", Method::kFull, 20, AgentConfig{}, opts);
  int probed = 0;
  double min_pen = 1e300;
  for (const auto& r : full)
    if (r.deadend_probe_penalty && *r.deadend_probe_penalty > 0) {
      ++probed;
      min_pen = std::min(min_pen, *r.deadend_probe_penalty);
    }
  const double a = mean_dc(full), b = mean_dc(fsm);
  Result r;
  r.pass = a < b && probed == static_cast<int>(full.size());
  r.detail = fmt("mean dead-end commits FULL %.2f vs FSM %.2f, probe penalty > 0 in %d/%zu FULL runs (min %.3g)", a,
                 b, probed, full.size(), probed ? min_pen : 0.0);
  return r;
}

struct FuzzRun {
  RunReport report;
  std::vector<MilestoneGroup> groups;
  std::int64_t budget = 0;
  std::vector<std::string> trace;
};

const std::vector<FuzzRun>& fuzz_runs() {
  static const std::vector<FuzzRun> runs = [] {
    std::vector<FuzzRun> out;
    Rng rng(8080);
    SimParams sim;
    const auto& names = scenario_names();
    for (int i = 0; i < 100; ++i) {
      FuzzRun f;
      const auto& name = names[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(names.size()) - 1))];
      const World w = generate_world(name, rng.uniform_int(0, 1000));
      f.groups = capture_library(w, sim);
      AgentConfig cfg;
      cfg.method = all_methods()[static_cast<std::size_t>(rng.uniform_int(0, 2))];
      cfg.noise.miss_prob = rng.uniform(0, 0.4);
      cfg.noise.jitter_px = rng.uniform(0, 6);
      cfg.noise.decoy_rate = rng.uniform(0, 0.5);
      RouteOptions opts;
      opts.budget_ticks = sim.ticks_per_decision * rng.uniform_int(0, 150);
      opts.carry_memory = rng.bernoulli(0.5);
      f.budget = opts.budget_ticks;
      f.report = run_route(w, f.groups, cfg, sim, opts, rng.next_u64(),
                           [&](const std::string& l) { f.trace.push_back(l); });
      out.push_back(std::move(f));
    }
    return out;
  }();
  return runs;
}

Result criterion_6() {
  ControlParams p;
  Rng rng(99);
  int pulses = 0;
  for (int traj = 0; traj < 1000; ++traj) {
    bool latch = pulse_plan({0, 0}, p, false).latch;
    for (int step = 0; step < 100; ++step) {
      // Confined: strictly inside the outer band on both axes.
      const double ex = rng.uniform(-p.eps_x_out, p.eps_x_out) * (1 - 1e-9);
      const double ey = rng.uniform(-p.eps_y_out, p.eps_y_out) * (1 - 1e-9);
      const PulsePlan pp = pulse_plan({ex, ey}, p, latch);
      pulses += pp.taps > 0 || pp.dir != CamDir::kNone;
      latch = pp.latch;
    }
  }

  int violations = 0, presses = 0;
  for (const auto& f : fuzz_runs()) {
    bool held = false;
    for (const auto& line : f.trace) {
      const auto j = nlohmann::json::parse(line);
      if (!j.contains("action")) continue;
      if (j["frame"].get<std::int64_t>() == 0) held = false;
      const std::string fwd = j["action"]["forward"].get<std::string>();
      if (fwd == "PRESS") {
        violations += held;
        held = true;
        ++presses;
      } else if (fwd == "RELEASE") {
        violations += !held;
        held = false;
      }
      violations += j["forward"].get<bool>() != held;
    }
  }
  Result r;
  r.pass = pulses == 0 && violations == 0 && presses > 0;
  r.detail = fmt("%d pulses over 1000 confined trajectories; %d alternation violations over 100 fuzzed runs "
                 "(%d presses)",
                 pulses, violations, presses);
  return r;
}

Result criterion_7() {
  Rng rng(7);
  double worst_self = 0;
  for (int i = 0; i < 20; ++i) {
    const Frame f = oracle::textured(320, 180, 500 + static_cast<std::uint64_t>(i));
    worst_self = std::max({worst_self, std::abs(ssim(f, f) - 1.0), std::abs(ncc_score(f, f) - 1.0)});
  }
  int axiom_fail = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = rng.next_u64(), b = rng.next_u64(), c = rng.next_u64();
    axiom_fail += hamming(a, a) != 0 || hamming(a, b) != hamming(b, a) || (hamming(a, b) == 0) != (a == b) ||
                  hamming(a, c) > hamming(a, b) + hamming(b, c);
  }
  double worst_flow = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Frame f = oracle::textured(320, 180, 30 + s);
    const Frame g = oracle::shift_right(f, 2);
    worst_flow = std::max(worst_flow, std::abs(median_flow(f, g) - oracle::sad_flow(f, g)));
  }
  Result r;
  r.pass = worst_self <= 1e-9 && axiom_fail == 0 && worst_flow <= 0.5;
  r.detail = fmt("self-similarity max |err| %.2g, Hamming axiom failures %d/10000, 2-px flow max |err| vs SAD %.3f",
                 worst_self, axiom_fail, worst_flow);
  return r;
}

Result criterion_8() {
  const fs::path dir = fs::temp_directory_path() / "stpnav_acceptance_c8";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream(dir / "cfg.json") << R"({
      "scenarios": ["l_turn", "dark_right_door"],
      "methods": ["NAIVE", "FSM", "FULL"],
      "seeds": [0, 1],
      "route": {"budget_ticks": 900},
      "noise": {"miss_prob": 0.2, "jitter_px": 3.0, "decoy_rate": 0.3}
    })";
  }
  auto invoke = [&](const std::string& tag, int jobs) {
    cli::RunOverrides ov;
    ov.jobs = jobs;
    const int rc = cli::cmd_run(dir / "cfg.json", ov, dir / tag);
    return rc == cli::kExitOk;
  };
  const bool ran = invoke("a", 1) && invoke("b", 1) && invoke("c", 2) && invoke("d", 4);
  std::set<std::uint64_t> rep, seg;
  for (const char* tag : {"a", "b", "c", "d"}) {
    rep.insert(oracle::fnv1a(slurp(dir / tag / "reports.json")));
    seg.insert(oracle::fnv1a(slurp(dir / tag / "segments.jsonl")));
  }
  const bool nonempty = fs::file_size(dir / "a" / "reports.json") > 0;
  Result r;
  r.pass = ran && nonempty && rep.size() == 1 && seg.size() == 1;
  r.detail = fmt("4 invocations (jobs 1,1,2,4): %zu distinct reports.json hash(es) [%s], %zu distinct segments.jsonl "
                 "hash(es)",
                 rep.size(), hash_to_hex(*rep.begin()).c_str(), seg.size());
  fs::remove_all(dir);
  return r;
}

Result criterion_9() {
  int order = 0, timeout = 0, teleport = 0, dwell = 0, teleports_seen = 0;
  for (const auto& f : fuzz_runs()) {
    const auto& r = f.report;
    order += r.segments.size() != f.groups.size();
    std::int64_t dwell_sum = 0;
    for (std::size_t j = 0; j < r.segments.size(); ++j) {
      const SegmentLog& s = r.segments[j];
      order += s.index != static_cast<int>(j) || s.to_milestone != f.groups[j].id ||
               s.from_milestone != (j == 0 ? 0 : f.groups[j - 1].id) ||
               s.start_tick != (j == 0 ? 0 : r.segments[j - 1].end_tick);
      if (s.termination == Termination::kTimeout) {
        timeout += s.duration() != f.budget;
        if (j + 1 < r.segments.size()) {
          AvatarPose want = f.groups[j + 1].save_pose;
          want.forward_held = false;
          teleport += r.segments[j + 1].start_pose != want;
          ++teleports_seen;
        }
      }
      dwell_sum += std::accumulate(s.fsm_dwell.begin(), s.fsm_dwell.end(), std::int64_t{0});
    }
    dwell += dwell_sum != r.total_ticks;
  }
  Result r;
  r.pass = order == 0 && timeout == 0 && teleport == 0 && dwell == 0 && teleports_seen > 0;
  r.detail = fmt("over 100 fuzzed runs: ordering violations %d, TIMEOUT duration mismatches %d, teleport mismatches "
                 "%d/%d, dwell-sum mismatches %d",
                 order, timeout, teleport, teleports_seen, dwell);
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Result()>> checks = {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                                       criterion_6, criterion_7, criterion_8, criterion_9};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  bool all = true;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(n)) continue;
    const auto t0 = Clock::now();
    Result r;
    try {
      r = checks[i]();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    all = all && r.pass;
    std::printf("criterion %d: %s  %s  [%.1fs]\n", n, r.pass ? "PASS" : "FAIL", r.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
