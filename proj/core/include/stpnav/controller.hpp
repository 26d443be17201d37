#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "stpnav/frame.hpp"
#include "stpnav/perception.hpp"

namespace stpnav {

enum class FsmState {
  kScan,
  kAlign,
  kAdvance,
  kRefine,
  kRecoverLocal,
  kEscapeStuck,
  kLoopBreaker,
};
inline constexpr int kNumFsmStates = 7;

const char* to_string(FsmState s);
FsmState fsm_state_from_string(const std::string& s);

/// States in which the forward key may be held.
bool forward_capable(FsmState s);
bool recovery_state(FsmState s);

enum class CamDir { kNone, kLeft, kUp, kRight, kDown };
inline constexpr int kNumCamDirs = 5;
const char* to_string(CamDir d);

enum class ForwardDelta { kHold, kPress, kRelease };
const char* to_string(ForwardDelta d);

struct Action {
  CamDir cam = CamDir::kNone;
  int taps = 0;
  ForwardDelta forward = ForwardDelta::kHold;

  friend bool operator==(const Action&, const Action&) = default;
};

struct ErrorVec {
  double ex = 0.0;
  double ey = 0.0;
  double norm() const;
};

struct ControlParams {
  // Schmitt thresholds on the normalized error.
  double eps_x_in = 0.03;
  double eps_x_out = 0.08;
  double eps_y_in = 0.05;
  double eps_y_out = 0.12;
  /// Taps per unit error.
  double k = 10.0;
  int n_max = 4;
  int tau_on = 5;

  // Progress meter.
  int delta = 10;
  int t_stag = 45;
  double ssim_stag = 0.98;
  double flow_stag = 0.3;
  int ring_size = 16;

  int mstp_lost_limit = 12;
  int stable_frames = 3;
  double stable_iou = 0.5;

  // Loop anchors.
  int loop_revisits = 3;
  int loop_hamming = 6;
  int anchor_period = 10;
  int anchor_revisit_gap = 20;

  // Scripted maneuvers.
  int recover_backstep = 6;
  int recover_taps = 2;
  int recover_escalate_after = 2;
  double escape_min_deg = 90.0;
  double escape_max_deg = 180.0;
  int escape_burst = 8;

  // Camera model used to plan scripted turns and to compensate scan motion.
  double yaw_per_tap = 5.0;
  double fov_deg = 90.0;
  int sectors = kDefaultSectors;

  /// False restricts the machine to {SCAN, ALIGN, ADVANCE}.
  bool recovery_enabled = true;

  void validate() const;
};

ErrorVec error_vector(double u, double v, double screen_w, double screen_h);

/// clip(floor(k * |e|_2), 0, n_max).
int pulse_count(const ErrorVec& e, double k, int n_max);

struct PulsePlan {
  CamDir dir = CamDir::kNone;
  int taps = 0;
  bool latch = false;

  friend bool operator==(const PulsePlan&, const PulsePlan&) = default;
};

/// Dead-zone pulse planner with hysteresis. A set latch holds until the
/// error crosses the outer threshold on either axis; it sets again when both
/// axes are inside their inner thresholds. The axis with the larger error
/// relative to its outer threshold is pulsed (horizontal on ties).
PulsePlan pulse_plan(const ErrorVec& e, const ControlParams& p, bool centered_latch);

struct ProgressSignals {
  double area_delta = 1.0;
  double ssim_recent = 0.0;
  double flow_mag = std::numeric_limits<double>::infinity();
  /// All three stagnation conditions hold on this frame.
  bool stagnating = false;
};

/// Recent frames plus the MSTP area history used by the progress meter.
class FrameRing {
 public:
  explicit FrameRing(int capacity = 16);

  void push(Frame f, double mstp_area);
  void clear();

  int size() const { return static_cast<int>(frames_.size()); }
  int capacity() const { return capacity_; }
  /// ago = 0 is the newest frame.
  const Frame& frame(int ago) const;
  double area(int ago) const;

 private:
  int capacity_;
  std::deque<Frame> frames_;
  std::deque<double> areas_;
};

/// Neutral signals (area +1, SSIM 0, flow +inf) until Delta+1 frames exist.
ProgressSignals progress_update(const FrameRing& ring, const ControlParams& p);

/// Result of querying the loop-anchor store for the current frame.
struct LoopQuery {
  bool triggered = false;
  /// Bit (s-1) set when sector s was already committed from this anchor.
  std::uint32_t explored_mask = 0;
  /// Memory penalty per sector (size K), zeros when memory is off.
  std::vector<double> sector_penalty;
};

/// Visited-view anchors keyed by perceptual hash. A revisit is counted when
/// an anchor matches again after being out of view for the revisit gap.
class AnchorTracker {
 public:
  explicit AnchorTracker(const ControlParams& p = {});

  /// Returns true when this observation is the r-th revisit of an anchor.
  bool observe(std::uint64_t hash, std::int64_t t);
  void record_commit(int sector);
  std::uint32_t explored_mask() const;
  void clear();
  std::size_t size() const { return anchors_.size(); }

 private:
  struct Anchor {
    std::uint64_t hash = 0;
    int visits = 0;
    std::int64_t last_seen = 0;
    std::uint32_t explored = 0;
  };

  int max_hamming_;
  int revisits_;
  int period_;
  int gap_;
  std::vector<Anchor> anchors_;
  std::optional<std::size_t> current_;
  std::optional<std::int64_t> last_created_;
};

struct ControllerState {
  FsmState fsm = FsmState::kScan;
  bool forward = false;
  bool prev_forward = false;
  int aligned_since = 0;
  bool centered_latch = false;
  int stagnation_clock = 0;
  int mstp_lost_count = 0;
  double scan_sweep_progress = 0.0;
  std::int64_t frames = 0;
  std::array<std::int64_t, kNumFsmStates> state_dwell{};

  double screen_w = 320;
  double screen_h = 180;

  // Stability of the selection across frames, compensated for camera motion.
  int stable_count = 0;
  std::optional<BBox> prev_box;
  int last_mstp_side = 1;

  // Camera command chosen for this frame.
  CamDir plan_cam = CamDir::kNone;
  int plan_taps = 0;

  // Scripted maneuvers.
  int maneuver_step = 0;
  int maneuver_taps = 0;
  CamDir maneuver_dir = CamDir::kNone;
  bool maneuver_all_stagnant = true;
  int burst_remaining = 0;
  int recover_streak = 0;
  int progress_frames = 0;
  int loop_target_sector = 0;

  /// Sector the target occupied when ALIGN was entered.
  int choice_sector = 0;
  /// Set on the frame of an ALIGN -> ADVANCE commitment; the committed
  /// sector is the choice sector, the box is the aligned target.
  bool committed = false;
  int committed_sector = 0;
  BBox committed_box;
};

ControllerState initial_state(double screen_w, double screen_h);

/// Forward gate update. Increments `aligned_since` while aligned, resets it
/// otherwise; open iff aligned for tau_on frames in a forward-capable state.
bool update_forward_gate(ControllerState& state, bool heading_aligned, const ControlParams& p);

/// One transition of the navigation state machine; pure in its arguments.
/// `escape_draw` in [0,1) randomizes the ESCAPE_STUCK turn and is supplied
/// by the caller's seeded stream.
ControllerState fsm_step(const ControllerState& state, const std::optional<MstpSelection>& mstp,
                         const ProgressSignals& prog, const LoopQuery& anchors,
                         const ControlParams& p, double escape_draw = 0.5);

/// Camera pulse chosen by fsm_step, combined with the forward toggle.
Action act(const ControllerState& next, const std::optional<MstpSelection>& mstp,
           const ControlParams& p);

}  // namespace stpnav
