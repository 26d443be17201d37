#include "stpnav/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "stpnav/vision.hpp"

namespace stpnav {

using nlohmann::json;

void CaptureSweep::validate() const {
  if (n_yaw < 1) throw std::invalid_argument("capture sweep: n_yaw must be >= 1");
  if (pitches.empty()) throw std::invalid_argument("capture sweep: need at least one pitch");
  for (double p : pitches)
    if (!(p >= -45.0 && p <= 45.0)) throw std::invalid_argument("capture sweep: pitch outside [-45,45]");
}

MilestoneGroup capture_milestone(const World& world, const SimParams& sim, const AvatarPose& pose,
                                 const CaptureSweep& sweep, int id, int group_index,
                                 std::optional<AvatarPose> save_pose) {
  sweep.validate();
  MilestoneGroup g;
  g.id = id;
  g.group_index = group_index;
  g.save_pose = save_pose.value_or(pose);
  g.save_pose.forward_held = false;
  const double mid = (sweep.n_yaw - 1) / 2.0;
  for (double pitch : sweep.pitches)
    for (int i = 0; i < sweep.n_yaw; ++i) {
      AvatarPose p = pose;
      p.yaw = wrap_yaw(pose.yaw + (i - mid) * sweep.yaw_step);
      p.pitch = pitch;
      Frame f = render(world, p, sim);
      if (!(f.variance() > 0.0))
        throw std::runtime_error("milestone " + std::to_string(id) +
                                 ": template has constant intensity (blank view)");
      g.templates.push_back(std::move(f));
    }
  return g;
}

double milestone_score(const Frame& frame, const MilestoneGroup& group) {
  double best = -1.0;
  for (const auto& t : group.templates) best = std::max(best, ncc_score(frame, t));
  return best;
}

bool check_milestone(const Frame& frame, const MilestoneGroup& group, double threshold) {
  return milestone_score(frame, group) > threshold;
}

std::vector<MilestoneGroup> capture_library(const World& world, const SimParams& sim,
                                            const CaptureSweep& sweep) {
  std::vector<MilestoneGroup> out;
  for (std::size_t i = 0; i < world.milestones.size(); ++i) {
    const auto& m = world.milestones[i];
    teleport(world, m.pose, sim);  // rejects capture poses inside geometry
    teleport(world, m.save, sim);
    out.push_back(capture_milestone(world, sim, m.pose, sweep, m.id, static_cast<int>(i), m.save));
  }
  return out;
}

namespace {

json pose_json(const AvatarPose& p) {
  return {{"x", p.x}, {"y", p.y}, {"yaw", p.yaw}, {"pitch", p.pitch}, {"forward_held", p.forward_held}};
}

AvatarPose pose_from(const json& j) {
  AvatarPose p;
  p.x = j.at("x").get<double>();
  p.y = j.at("y").get<double>();
  p.yaw = j.at("yaw").get<double>();
  p.pitch = j.at("pitch").get<double>();
  p.forward_held = j.value("forward_held", false);
  return p;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("error writing " + path.string());
}

}  // namespace

void save_library(const std::vector<MilestoneGroup>& groups, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "stpnav-milestones";
  manifest["version"] = 1;
  manifest["groups"] = json::array();
  for (const auto& g : groups) {
    json jg;
    jg["id"] = g.id;
    jg["group_index"] = g.group_index;
    jg["save_pose"] = pose_json(g.save_pose);
    jg["templates"] = json::array();
    for (std::size_t k = 0; k < g.templates.size(); ++k) {
      const std::string name = "g" + std::to_string(g.id) + "_t" + std::to_string(k) + ".pgm";
      write_pgm(g.templates[k], dir / name);
      jg["templates"].push_back(name);
    }
    manifest["groups"].push_back(jg);
  }
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<MilestoneGroup> load_library(const std::filesystem::path& dir) {
  const json manifest = json::parse(read_file(dir / "manifest.json"));
  if (manifest.value("format", "") != "stpnav-milestones")
    throw std::runtime_error("milestone manifest: unexpected format");
  std::vector<MilestoneGroup> out;
  for (const auto& jg : manifest.at("groups")) {
    MilestoneGroup g;
    g.id = jg.at("id").get<int>();
    g.group_index = jg.at("group_index").get<int>();
    g.save_pose = pose_from(jg.at("save_pose"));
    for (const auto& name : jg.at("templates")) {
      Frame f = read_pgm(dir / name.get<std::string>());
      if (!(f.variance() > 0.0))
        throw std::runtime_error("milestone " + std::to_string(g.id) + ": constant template " +
                                 name.get<std::string>());
      g.templates.push_back(std::move(f));
    }
    if (g.templates.empty()) throw std::runtime_error("milestone " + std::to_string(g.id) + ": no templates");
    if (!out.empty() && g.group_index <= out.back().group_index)
      throw std::runtime_error("milestone manifest: group indices must increase");
    out.push_back(std::move(g));
  }
  return out;
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::kMilestone:
      return "MILESTONE";
    case Termination::kManual:
      return "MANUAL";
    case Termination::kTimeout:
      break;
  }
  return "TIMEOUT";
}

Termination termination_from_string(const std::string& s) {
  if (s == "MILESTONE") return Termination::kMilestone;
  if (s == "TIMEOUT") return Termination::kTimeout;
  if (s == "MANUAL") return Termination::kManual;
  throw std::invalid_argument("unknown termination: " + s);
}

void RouteOptions::validate(const SimParams& sim) const {
  if (budget_ticks < 0) throw std::invalid_argument("budget_ticks must be >= 0");
  if (budget_ticks % sim.ticks_per_decision != 0)
    throw std::invalid_argument("budget_ticks must be a multiple of ticks_per_decision");
  if (check_period < 1) throw std::invalid_argument("check_period must be >= 1");
}

namespace {

struct Probe {
  std::optional<Embedding> z;
  int sector = 0;
  std::optional<double> penalty;
};

// Dead-end opening id -> index of the closet room behind it.
std::map<int, int> dead_end_rooms(const World& world) {
  std::map<int, int> out;
  for (int pid : world.dead_end_portals()) {
    const Portal* p = world.portal(pid);
    const Vec2 m = (p->a + p->b) * 0.5;
    for (std::size_t i = 0; i < world.rooms.size(); ++i) {
      if (!world.rooms[i].contains(m)) continue;
      int touching = 0;
      for (const auto& q : world.portals) touching += world.rooms[i].contains((q.a + q.b) * 0.5) ? 1 : 0;
      if (touching == 1) out[pid] = static_cast<int>(i);
    }
  }
  return out;
}

int tap_slot(CamDir d) {
  switch (d) {
    case CamDir::kLeft:
      return 0;
    case CamDir::kUp:
      return 1;
    case CamDir::kRight:
      return 2;
    case CamDir::kDown:
      return 3;
    case CamDir::kNone:
      break;
  }
  return -1;
}

json box_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

SegmentLog run_segment_impl(const World& world, const SimParams& sim, Agent& agent, AvatarPose& pose,
                            const MilestoneGroup& target, const RouteOptions& opts,
                            std::int64_t start_tick, int from_milestone, const TraceSink& trace,
                            const StopFn& stop, Probe* probe) {
  opts.validate(sim);
  const auto closets = dead_end_rooms(world);
  const int tpd = sim.ticks_per_decision;

  SegmentLog log;
  log.from_milestone = from_milestone;
  log.to_milestone = target.id;
  log.start_tick = start_tick;
  pose.forward_held = false;
  log.start_pose = pose;

  std::int64_t ticks = 0;
  while (true) {
    if (ticks >= opts.budget_ticks) {
      log.termination = Termination::kTimeout;
      break;
    }
    if (stop && stop()) {
      log.termination = Termination::kManual;
      break;
    }
    const Frame frame = render(world, pose, sim, agent.now());
    const bool check = log.frames % opts.check_period == 0;
    double score = 0.0;
    if (check) {
      score = milestone_score(frame, target);
      if (score > opts.ncc_threshold) {
        log.termination = Termination::kMilestone;
        if (trace) {
          json j{{"tick", start_tick + ticks}, {"frame", log.frames}, {"target", target.id},
                 {"checked", true}, {"ncc", score}, {"hit", true},
                 {"pose", json::array({pose.x, pose.y, pose.yaw})}};
          trace(j.dump());
        }
        break;
      }
    }

    const auto visible = visible_portals(world, pose, sim);
    const StepRecord rec = agent.step(frame, visible);

    if (rec.mstp) ++log.mstp_decisions;
    if (rec.state.committed) {
      ++log.commits;
      const int src = rec.mstp->candidate.source;
      const auto it = closets.find(src);
      if (it != closets.end() && !world.rooms[static_cast<std::size_t>(it->second)].contains(pose.pos())) {
        ++log.deadend_commits;
        if (probe && !probe->z) {
          probe->z = embed(frame);
          probe->sector = rec.state.committed_sector;
        }
      }
    }
    // Labels land while entries may still sit in quarantine; the probe is
    // read once a BAD entry becomes queryable.
    if (probe && probe->z && !probe->penalty && agent.first_bad_label() &&
        std::any_of(agent.memory().active().begin(), agent.memory().active().end(),
                    [](const MemoryEntry& m) { return m.o == Outcome::kBad; }))
      probe->penalty = agent.memory().penalty(*probe->z, probe->sector, agent.now());
    if (const int slot = tap_slot(rec.action.cam); slot >= 0) log.cam_histogram[slot] += rec.action.taps;
    if (rec.action.forward == ForwardDelta::kPress) ++log.forward_presses;

    pose = apply_action(world, pose, rec.action, sim);
    if (pose.forward_held) log.forward_time += tpd;
    log.fsm_dwell[static_cast<std::size_t>(rec.state.fsm)] += tpd;

    if (trace) {
      json j;
      j["tick"] = start_tick + ticks;
      j["frame"] = log.frames;
      j["target"] = target.id;
      j["checked"] = check;
      j["ncc"] = check ? json(score) : json(nullptr);
      j["state"] = to_string(rec.state.fsm);
      j["forward"] = rec.state.forward;
      j["candidates"] = rec.candidates.size();
      if (rec.mstp) {
        const auto& c = rec.mstp->candidate;
        j["mstp"] = {{"box", box_json(c.box)}, {"sector", c.sector}, {"det", c.det_score},
                     {"score", rec.mstp->final_score}, {"source", c.source}};
        j["error"] = json::array({rec.error->ex, rec.error->ey});
      } else {
        j["mstp"] = nullptr;
        j["error"] = nullptr;
      }
      j["action"] = {{"cam", to_string(rec.action.cam)}, {"taps", rec.action.taps},
                     {"forward", to_string(rec.action.forward)}};
      j["signals"] = {{"area_delta", rec.signals.area_delta}, {"ssim", rec.signals.ssim_recent},
                      {"flow", std::isfinite(rec.signals.flow_mag) ? json(rec.signals.flow_mag) : json(nullptr)},
                      {"stagnating", rec.signals.stagnating}};
      if (rec.loop_triggered) j["loop"] = true;
      if (rec.state.committed) j["commit"] = rec.state.committed_sector;
      if (rec.associated) j["associated"] = *rec.associated;
      if (!rec.labeled.empty()) j["labeled"] = rec.labeled;
      j["pose"] = json::array({pose.x, pose.y, pose.yaw});
      trace(j.dump());
    }
    ticks += tpd;
    ++log.frames;
  }
  log.end_tick = start_tick + ticks;
  log.end_pose = pose;
  return log;
}

}  // namespace

SegmentLog run_segment(const World& world, const SimParams& sim, Agent& agent, AvatarPose& pose,
                       const MilestoneGroup& target, const RouteOptions& opts, std::int64_t start_tick,
                       int from_milestone, const TraceSink& trace, const StopFn& stop) {
  return run_segment_impl(world, sim, agent, pose, target, opts, start_tick, from_milestone, trace, stop,
                          nullptr);
}

RunReport run_route(const World& world, const std::vector<MilestoneGroup>& groups,
                    const AgentConfig& agent_cfg, const SimParams& sim, const RouteOptions& opts,
                    std::uint64_t seed, const TraceSink& trace, const StopFn& stop) {
  sim.validate();
  opts.validate(sim);
  RunReport r;
  r.route = world.scenario;
  r.method = agent_cfg.method;
  r.seed = seed;

  Agent agent(agent_cfg, sim.width, sim.height, seed);
  AvatarPose pose = teleport(world, world.spawn, sim);
  Probe probe;
  std::int64_t tick = 0;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    if (j > 0 && r.segments.back().termination == Termination::kTimeout)
      pose = teleport(world, groups[j].save_pose, sim);
    agent.reset(j > 0 && opts.carry_memory);
    const int from = j == 0 ? 0 : groups[j - 1].id;
    SegmentLog log = run_segment_impl(world, sim, agent, pose, groups[j], opts, tick, from, trace, stop,
                                      agent_cfg.memory_enabled() ? &probe : nullptr);
    log.index = static_cast<int>(j);
    tick = log.end_tick;
    r.milestones_reached.push_back(log.termination == Termination::kMilestone);
    const bool manual = log.termination == Termination::kManual;
    r.segments.push_back(std::move(log));
    if (manual) break;
  }
  r.total_ticks = tick;
  r.route_success = r.milestones_reached.size() == groups.size() &&
                    std::all_of(r.milestones_reached.begin(), r.milestones_reached.end(), [](bool b) { return b; });
  r.first_bad_label = agent.first_bad_label();
  r.deadend_probe_penalty = probe.penalty;
  return r;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(v.size()));
}

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::vector<MetricsRow> aggregate(const std::vector<RunReport>& reports, double ticks_per_second) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  if (!(ticks_per_second > 0.0)) throw std::invalid_argument("aggregate: ticks_per_second must be positive");

  std::map<std::pair<std::string, int>, std::vector<const RunReport*>> cells;
  for (const auto& r : reports) cells[{r.route, static_cast<int>(r.method)}].push_back(&r);

  std::vector<MetricsRow> rows;
  for (const auto& [key, runs] : cells) {
    MetricsRow row;
    row.route = key.first;
    row.method = static_cast<Method>(key.second);
    row.runs = static_cast<int>(runs.size());

    int full = 0;
    std::vector<int> attempts, successes;
    std::vector<double> durations, forwards;
    for (const auto* r : runs) {
      full += r->route_success ? 1 : 0;
      for (std::size_t k = 0; k < r->segments.size(); ++k) {
        if (attempts.size() <= k) {
          attempts.resize(k + 1, 0);
          successes.resize(k + 1, 0);
        }
        const auto& s = r->segments[k];
        ++attempts[k];
        successes[k] += s.termination == Termination::kMilestone ? 1 : 0;
        durations.push_back(static_cast<double>(s.duration()) / ticks_per_second);
        forwards.push_back(static_cast<double>(s.forward_time) / ticks_per_second);
      }
    }
    row.rs_pct = 100.0 * full / static_cast<double>(runs.size());
    for (std::size_t k = 0; k < attempts.size(); ++k)
      row.per_milestone.push_back(100.0 * successes[k] / static_cast<double>(attempts[k]));
    mean_std(row.per_milestone, row.ms_mean, row.ms_std);
    mean_std(durations, row.seg_dur_mean, row.seg_dur_std);
    mean_std(forwards, row.fwd_mean, row.fwd_std);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "route,method,rs_pct,ms_mean,ms_std,seg_dur_mean,seg_dur_std,fwd_mean,fwd_std\n";
  for (const auto& r : rows) {
    out += r.route + "," + to_string(r.method) + "," + fmt_num(r.rs_pct) + "," + fmt_num(r.ms_mean) + "," +
           fmt_num(r.ms_std) + "," + fmt_num(r.seg_dur_mean) + "," + fmt_num(r.seg_dur_std) + "," +
           fmt_num(r.fwd_mean) + "," + fmt_num(r.fwd_std) + "\n";
  }
  return out;
}

std::string milestones_csv(const std::vector<MetricsRow>& rows) {
  std::size_t k = 0;
  for (const auto& r : rows) k = std::max(k, r.per_milestone.size());
  std::string out = "route,method";
  for (std::size_t i = 1; i <= k; ++i) out += ",M" + std::to_string(i);
  out += "\n";
  for (const auto& r : rows) {
    out += r.route + "," + to_string(r.method);
    for (std::size_t i = 0; i < k; ++i) out += "," + (i < r.per_milestone.size() ? fmt_num(r.per_milestone[i]) : "");
    out += "\n";
  }
  return out;
}

namespace {

json segment_json(const SegmentLog& s, double tps) {
  json j;
  j["index"] = s.index;
  j["from_milestone"] = s.from_milestone;
  j["to_milestone"] = s.to_milestone;
  j["termination"] = to_string(s.termination);
  j["start_tick"] = s.start_tick;
  j["end_tick"] = s.end_tick;
  j["start_s"] = static_cast<double>(s.start_tick) / tps;
  j["end_s"] = static_cast<double>(s.end_tick) / tps;
  j["frames"] = s.frames;
  j["mstp_decisions"] = s.mstp_decisions;
  j["forward_presses"] = s.forward_presses;
  j["forward_time"] = s.forward_time;
  j["cam_histogram"] = {{"LEFT", s.cam_histogram[0]}, {"UP", s.cam_histogram[1]},
                        {"RIGHT", s.cam_histogram[2]}, {"DOWN", s.cam_histogram[3]}};
  json dwell;
  for (int i = 0; i < kNumFsmStates; ++i) dwell[to_string(static_cast<FsmState>(i))] = s.fsm_dwell[static_cast<std::size_t>(i)];
  j["fsm_dwell"] = dwell;
  j["commits"] = s.commits;
  j["deadend_commits"] = s.deadend_commits;
  j["start_pose"] = pose_json(s.start_pose);
  j["end_pose"] = pose_json(s.end_pose);
  return j;
}

SegmentLog segment_from(const json& j) {
  SegmentLog s;
  s.index = j.at("index").get<int>();
  s.from_milestone = j.at("from_milestone").get<int>();
  s.to_milestone = j.at("to_milestone").get<int>();
  s.termination = termination_from_string(j.at("termination").get<std::string>());
  s.start_tick = j.at("start_tick").get<std::int64_t>();
  s.end_tick = j.at("end_tick").get<std::int64_t>();
  s.frames = j.at("frames").get<std::int64_t>();
  s.mstp_decisions = j.at("mstp_decisions").get<std::int64_t>();
  s.forward_presses = j.at("forward_presses").get<std::int64_t>();
  s.forward_time = j.at("forward_time").get<std::int64_t>();
  const auto& ch = j.at("cam_histogram");
  s.cam_histogram = {ch.at("LEFT").get<std::int64_t>(), ch.at("UP").get<std::int64_t>(),
                     ch.at("RIGHT").get<std::int64_t>(), ch.at("DOWN").get<std::int64_t>()};
  for (int i = 0; i < kNumFsmStates; ++i)
    s.fsm_dwell[static_cast<std::size_t>(i)] = j.at("fsm_dwell").at(to_string(static_cast<FsmState>(i))).get<std::int64_t>();
  s.commits = j.at("commits").get<std::int64_t>();
  s.deadend_commits = j.at("deadend_commits").get<std::int64_t>();
  s.start_pose = pose_from(j.at("start_pose"));
  s.end_pose = pose_from(j.at("end_pose"));
  return s;
}

json report_json(const RunReport& r, double tps) {
  json j;
  j["route"] = r.route;
  j["method"] = to_string(r.method);
  j["seed"] = r.seed;
  j["route_success"] = r.route_success;
  j["milestones_reached"] = r.milestones_reached;
  j["total_ticks"] = r.total_ticks;
  j["first_bad_label"] = r.first_bad_label ? json(*r.first_bad_label) : json(nullptr);
  j["deadend_probe_penalty"] = r.deadend_probe_penalty ? json(*r.deadend_probe_penalty) : json(nullptr);
  j["segments"] = json::array();
  for (const auto& s : r.segments) j["segments"].push_back(segment_json(s, tps));
  return j;
}

}  // namespace

std::string segment_to_json(const SegmentLog& s, double ticks_per_second) {
  return segment_json(s, ticks_per_second).dump();
}

std::string reports_to_json(const std::vector<RunReport>& reports, double ticks_per_second) {
  json j;
  j["format"] = "stpnav-reports";
  j["version"] = 1;
  j["ticks_per_second"] = ticks_per_second;
  j["reports"] = json::array();
  for (const auto& r : reports) j["reports"].push_back(report_json(r, ticks_per_second));
  return j.dump(1) + "\n";
}

std::vector<RunReport> reports_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("format", "") != "stpnav-reports") throw std::runtime_error("reports bundle: unexpected format");
  std::vector<RunReport> out;
  for (const auto& jr : j.at("reports")) {
    RunReport r;
    r.route = jr.at("route").get<std::string>();
    r.method = method_from_string(jr.at("method").get<std::string>());
    r.seed = jr.at("seed").get<std::uint64_t>();
    r.route_success = jr.at("route_success").get<bool>();
    r.milestones_reached = jr.at("milestones_reached").get<std::vector<bool>>();
    r.total_ticks = jr.at("total_ticks").get<std::int64_t>();
    if (!jr.at("first_bad_label").is_null()) r.first_bad_label = jr["first_bad_label"].get<std::int64_t>();
    if (!jr.at("deadend_probe_penalty").is_null())
      r.deadend_probe_penalty = jr["deadend_probe_penalty"].get<double>();
    for (const auto& js : jr.at("segments")) r.segments.push_back(segment_from(js));
    out.push_back(std::move(r));
  }
  return out;
}

void emit_report(const std::vector<MetricsRow>& rows, const std::vector<RunReport>& reports,
                 const std::filesystem::path& dir, double ticks_per_second) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create report directory " + dir.string() + ": " + ec.message());
  write_file(dir / "metrics.csv", metrics_csv(rows));
  write_file(dir / "milestones.csv", milestones_csv(rows));
  json m;
  m["ticks_per_second"] = ticks_per_second;
  m["std"] = "population";
  m["rows"] = json::array();
  for (const auto& r : rows)
    m["rows"].push_back({{"route", r.route}, {"method", to_string(r.method)}, {"runs", r.runs},
                         {"rs_pct", r.rs_pct}, {"ms_mean", r.ms_mean}, {"ms_std", r.ms_std},
                         {"seg_dur_mean", r.seg_dur_mean}, {"seg_dur_std", r.seg_dur_std},
                         {"fwd_mean", r.fwd_mean}, {"fwd_std", r.fwd_std},
                         {"per_milestone", r.per_milestone}});
  m["footer"] = "MS mean/std over per-milestone success rates; durations and forward times in seconds "
                "over segments; all std values are population std.";
  write_file(dir / "metrics.json", m.dump(2) + "\n");
  write_file(dir / "reports.json", reports_to_json(reports, ticks_per_second));
}

}  // namespace stpnav
