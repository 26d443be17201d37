#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stpnav/agent.hpp"
#include "stpnav/frame.hpp"
#include "stpnav/sim.hpp"

namespace stpnav {

struct MilestoneGroup {
  int id = 0;
  int group_index = 0;
  std::vector<Frame> templates;
  AvatarPose save_pose;
};

struct CaptureSweep {
  int n_yaw = 5;
  double yaw_step = 5.0;
  std::vector<double> pitches = {0.0};

  void validate() const;
};

/// Renders templates at yaw offsets (i - (n_yaw-1)/2) * yaw_step for every
/// pitch. The save pose defaults to the capture pose. Throws
/// std::runtime_error when a template has zero variance.
MilestoneGroup capture_milestone(const World& world, const SimParams& sim, const AvatarPose& pose,
                                 const CaptureSweep& sweep = {}, int id = 1, int group_index = 0,
                                 std::optional<AvatarPose> save_pose = std::nullopt);

/// Maximum NCC of the frame against the group's templates.
double milestone_score(const Frame& frame, const MilestoneGroup& group);
bool check_milestone(const Frame& frame, const MilestoneGroup& group, double threshold = 0.80);

/// One group per world milestone, in route order.
std::vector<MilestoneGroup> capture_library(const World& world, const SimParams& sim,
                                            const CaptureSweep& sweep = {});

/// Directory layout: manifest.json plus g<id>_t<k>.pgm per template.
void save_library(const std::vector<MilestoneGroup>& groups, const std::filesystem::path& dir);
std::vector<MilestoneGroup> load_library(const std::filesystem::path& dir);

enum class Termination { kMilestone, kTimeout, kManual };
const char* to_string(Termination t);
Termination termination_from_string(const std::string& s);

inline constexpr int kNumCamTapDirs = 4;  // LEFT, UP, RIGHT, DOWN

struct SegmentLog {
  int index = 0;
  /// 0 for the spawn.
  int from_milestone = 0;
  int to_milestone = 0;
  Termination termination = Termination::kTimeout;
  std::int64_t start_tick = 0;
  std::int64_t end_tick = 0;
  std::int64_t frames = 0;
  std::int64_t mstp_decisions = 0;
  std::int64_t forward_presses = 0;
  std::int64_t forward_time = 0;
  /// Taps per direction: LEFT, UP, RIGHT, DOWN.
  std::array<std::int64_t, kNumCamTapDirs> cam_histogram{};
  /// Ticks spent in each FSM state.
  std::array<std::int64_t, kNumFsmStates> fsm_dwell{};
  std::int64_t commits = 0;
  /// Commitments toward dead-end openings, made from outside the dead end.
  std::int64_t deadend_commits = 0;
  AvatarPose start_pose;
  AvatarPose end_pose;

  std::int64_t duration() const { return end_tick - start_tick; }
  friend bool operator==(const SegmentLog&, const SegmentLog&) = default;
};

struct RunReport {
  std::string route;
  Method method = Method::kFull;
  std::uint64_t seed = 0;
  std::vector<SegmentLog> segments;
  std::vector<bool> milestones_reached;
  bool route_success = false;
  std::int64_t total_ticks = 0;
  /// Decision index of the first BAD memory label, if any.
  std::optional<std::int64_t> first_bad_label;
  /// Memory penalty for the frame and sector of the first dead-end commitment,
  /// taken once both that commitment and a BAD label exist. Empty otherwise.
  std::optional<double> deadend_probe_penalty;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

struct RouteOptions {
  /// Per-segment budget; must be a multiple of ticks_per_decision.
  std::int64_t budget_ticks = 3600;
  int check_period = 10;
  double ncc_threshold = 0.80;
  bool carry_memory = false;

  void validate(const SimParams& sim) const;
};

/// Receives one JSON object per decision when tracing is enabled.
using TraceSink = std::function<void(const std::string& line)>;
/// Polled once per decision; returning true ends the segment as MANUAL.
using StopFn = std::function<bool()>;

/// Runs one segment from `pose` (updated in place) toward `target`.
SegmentLog run_segment(const World& world, const SimParams& sim, Agent& agent, AvatarPose& pose,
                       const MilestoneGroup& target, const RouteOptions& opts,
                       std::int64_t start_tick = 0, int from_milestone = 0,
                       const TraceSink& trace = {}, const StopFn& stop = {});

/// One pass over the ordered groups. A TIMEOUT teleports the avatar to the
/// next group's save pose.
RunReport run_route(const World& world, const std::vector<MilestoneGroup>& groups,
                    const AgentConfig& agent_cfg, const SimParams& sim, const RouteOptions& opts,
                    std::uint64_t seed, const TraceSink& trace = {}, const StopFn& stop = {});

struct MetricsRow {
  std::string route;
  Method method = Method::kFull;
  int runs = 0;
  double rs_pct = 0;
  double ms_mean = 0;
  double ms_std = 0;
  double seg_dur_mean = 0;
  double seg_dur_std = 0;
  double fwd_mean = 0;
  double fwd_std = 0;
  /// Success percentage per milestone, M1..Mk.
  std::vector<double> per_milestone;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// Groups by (route, method). MS statistics run over the per-milestone
/// rates; durations and forward times over segments, in seconds. All
/// standard deviations are population deviations.
std::vector<MetricsRow> aggregate(const std::vector<RunReport>& reports, double ticks_per_second = 30.0);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string milestones_csv(const std::vector<MetricsRow>& rows);

std::string segment_to_json(const SegmentLog& s, double ticks_per_second = 30.0);
std::string reports_to_json(const std::vector<RunReport>& reports, double ticks_per_second = 30.0);
std::vector<RunReport> reports_from_json(const std::string& text);

/// Writes metrics.csv, milestones.csv, metrics.json and reports.json into `dir`.
void emit_report(const std::vector<MetricsRow>& rows, const std::vector<RunReport>& reports,
                 const std::filesystem::path& dir, double ticks_per_second = 30.0);

}  // namespace stpnav
