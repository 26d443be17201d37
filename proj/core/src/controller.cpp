#include "stpnav/controller.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "stpnav/vision.hpp"

namespace stpnav {

const char* to_string(FsmState s) {
  switch (s) {
    case FsmState::kScan:
      return "SCAN";
    case FsmState::kAlign:
      return "ALIGN";
    case FsmState::kAdvance:
      return "ADVANCE";
    case FsmState::kRefine:
      return "REFINE";
    case FsmState::kRecoverLocal:
      return "RECOVER_LOCAL";
    case FsmState::kEscapeStuck:
      return "ESCAPE_STUCK";
    case FsmState::kLoopBreaker:
      return "LOOP_BREAKER";
  }
  return "?";
}

FsmState fsm_state_from_string(const std::string& s) {
  for (int i = 0; i < kNumFsmStates; ++i)
    if (s == to_string(static_cast<FsmState>(i))) return static_cast<FsmState>(i);
  throw std::invalid_argument("unknown FSM state: " + s);
}

bool forward_capable(FsmState s) {
  return s == FsmState::kAlign || s == FsmState::kAdvance || s == FsmState::kRefine;
}

bool recovery_state(FsmState s) {
  return s == FsmState::kRecoverLocal || s == FsmState::kEscapeStuck || s == FsmState::kLoopBreaker;
}

const char* to_string(CamDir d) {
  switch (d) {
    case CamDir::kLeft:
      return "LEFT";
    case CamDir::kUp:
      return "UP";
    case CamDir::kRight:
      return "RIGHT";
    case CamDir::kDown:
      return "DOWN";
    case CamDir::kNone:
      break;
  }
  return "NONE";
}

const char* to_string(ForwardDelta d) {
  switch (d) {
    case ForwardDelta::kPress:
      return "PRESS";
    case ForwardDelta::kRelease:
      return "RELEASE";
    case ForwardDelta::kHold:
      break;
  }
  return "HOLD";
}

double ErrorVec::norm() const { return std::hypot(ex, ey); }

void ControlParams::validate() const {
  if (!(eps_x_in < eps_x_out) || !(eps_y_in < eps_y_out) || eps_x_in <= 0 || eps_y_in <= 0)
    throw std::invalid_argument("ControlParams: need 0 < eps_in < eps_out on both axes");
  if (!(k > 0)) throw std::invalid_argument("ControlParams: k must be positive");
  if (n_max < 1) throw std::invalid_argument("ControlParams: n_max must be >= 1");
  if (tau_on < 1 || delta < 1 || t_stag < 1 || mstp_lost_limit < 1 || stable_frames < 1 ||
      loop_revisits < 1 || ring_size < delta + 1)
    throw std::invalid_argument("ControlParams: counters must be positive and ring_size > delta");
  if (!(yaw_per_tap > 0) || !(fov_deg > 0 && fov_deg < 180) || sectors < 2)
    throw std::invalid_argument("ControlParams: bad camera model");
  if (escape_min_deg > escape_max_deg) throw std::invalid_argument("ControlParams: escape range");
}

ErrorVec error_vector(double u, double v, double screen_w, double screen_h) {
  return {(u - screen_w / 2.0) / screen_w, (v - screen_h / 2.0) / screen_h};
}

int pulse_count(const ErrorVec& e, double k, int n_max) {
  const double raw = std::floor(k * e.norm());
  return static_cast<int>(std::clamp(raw, 0.0, static_cast<double>(n_max)));
}

PulsePlan pulse_plan(const ErrorVec& e, const ControlParams& p, bool centered_latch) {
  const double nx = std::abs(e.ex) / p.eps_x_out;
  const double ny = std::abs(e.ey) / p.eps_y_out;
  if (centered_latch && std::max(nx, ny) < 1.0) return {CamDir::kNone, 0, true};
  if (std::abs(e.ex) < p.eps_x_in && std::abs(e.ey) < p.eps_y_in) return {CamDir::kNone, 0, true};

  const int taps = pulse_count(e, p.k, p.n_max);
  if (taps == 0) return {CamDir::kNone, 0, false};
  CamDir dir;
  if (nx >= ny)
    dir = e.ex < 0 ? CamDir::kLeft : CamDir::kRight;
  else
    dir = e.ey < 0 ? CamDir::kUp : CamDir::kDown;
  return {dir, taps, false};
}

FrameRing::FrameRing(int capacity) : capacity_(capacity) {
  if (capacity < 2) throw std::invalid_argument("FrameRing: capacity must be >= 2");
}

void FrameRing::push(Frame f, double mstp_area) {
  frames_.push_back(std::move(f));
  areas_.push_back(mstp_area);
  while (static_cast<int>(frames_.size()) > capacity_) {
    frames_.pop_front();
    areas_.pop_front();
  }
}

void FrameRing::clear() {
  frames_.clear();
  areas_.clear();
}

const Frame& FrameRing::frame(int ago) const {
  return frames_.at(frames_.size() - 1 - static_cast<std::size_t>(ago));
}

double FrameRing::area(int ago) const {
  return areas_.at(areas_.size() - 1 - static_cast<std::size_t>(ago));
}

ProgressSignals progress_update(const FrameRing& ring, const ControlParams& p) {
  ProgressSignals s;
  if (ring.size() < p.delta + 1) return s;
  const double a_now = ring.area(0);
  const double a_old = ring.area(p.delta);
  s.area_delta = (a_now - a_old) / std::max(a_old, 1.0);
  s.ssim_recent = ssim(ring.frame(0), ring.frame(p.delta));
  s.flow_mag = median_flow(ring.frame(1), ring.frame(0));
  s.stagnating = s.ssim_recent > p.ssim_stag && s.flow_mag < p.flow_stag && s.area_delta <= 0.0;
  return s;
}

AnchorTracker::AnchorTracker(const ControlParams& p)
    : max_hamming_(p.loop_hamming),
      revisits_(p.loop_revisits),
      period_(p.anchor_period),
      gap_(p.anchor_revisit_gap) {}

bool AnchorTracker::observe(std::uint64_t hash, std::int64_t t) {
  std::optional<std::size_t> best;
  int best_d = max_hamming_ + 1;
  for (std::size_t i = 0; i < anchors_.size(); ++i) {
    const int d = hamming(hash, anchors_[i].hash);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (best) {
    Anchor& a = anchors_[*best];
    bool triggered = false;
    if (t - a.last_seen > gap_) {
      ++a.visits;
      if (a.visits >= revisits_) {
        triggered = true;
        a.visits = 0;
      }
    }
    a.last_seen = t;
    current_ = best;
    return triggered;
  }
  if (!last_created_ || t - *last_created_ >= period_) {
    anchors_.push_back({hash, 0, t, 0});
    last_created_ = t;
    current_ = anchors_.size() - 1;
  } else {
    current_.reset();
  }
  return false;
}

void AnchorTracker::record_commit(int sector) {
  if (current_ && sector >= 1 && sector <= 32)
    anchors_[*current_].explored |= (1u << (sector - 1));
}

std::uint32_t AnchorTracker::explored_mask() const {
  return current_ ? anchors_[*current_].explored : 0u;
}

void AnchorTracker::clear() {
  anchors_.clear();
  current_.reset();
  last_created_.reset();
}

ControllerState initial_state(double screen_w, double screen_h) {
  ControllerState s;
  s.screen_w = screen_w;
  s.screen_h = screen_h;
  return s;
}

bool update_forward_gate(ControllerState& state, bool heading_aligned, const ControlParams& p) {
  state.aligned_since = heading_aligned ? state.aligned_since + 1 : 0;
  return state.aligned_since >= p.tau_on && forward_capable(state.fsm);
}

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double focal_px(const ControllerState& s, const ControlParams& p) {
  return (s.screen_w / 2.0) / std::tan(p.fov_deg * kDeg / 2.0);
}

// Predicts where a screen column lands after the camera yaws by `deg` (right positive).
double rotate_column(double x, double deg, const ControllerState& s, const ControlParams& p) {
  const double f = focal_px(s, p);
  double th = std::atan((x - s.screen_w / 2.0) / f) - deg * kDeg;
  th = std::clamp(th, -89.0 * kDeg, 89.0 * kDeg);
  return s.screen_w / 2.0 + f * std::tan(th);
}

double planned_yaw_deg(CamDir dir, int taps, const ControlParams& p) {
  if (dir == CamDir::kRight) return taps * p.yaw_per_tap;
  if (dir == CamDir::kLeft) return -taps * p.yaw_per_tap;
  return 0.0;
}

// Chooses the lowest-penalty sector not yet committed from the current
// anchor; ties go to the sector farthest from any explored one, then the
// lower index.
int loop_target(const LoopQuery& q, const ControlParams& p) {
  const int k = p.sectors;
  auto explored = [&](int s) { return (q.explored_mask >> (s - 1)) & 1u; };
  bool any_unexplored = false;
  for (int s = 1; s <= k; ++s) any_unexplored |= !explored(s);

  int best = 0;
  double best_pen = 0.0;
  int best_dist = -1;
  for (int s = 1; s <= k; ++s) {
    if (any_unexplored && explored(s)) continue;
    const double pen =
        s - 1 < static_cast<int>(q.sector_penalty.size()) ? q.sector_penalty[static_cast<std::size_t>(s - 1)] : 0.0;
    int dist = k;
    for (int e = 1; e <= k; ++e)
      if (explored(e)) dist = std::min(dist, std::abs(e - s));
    if (best == 0 || pen < best_pen || (pen == best_pen && dist > best_dist)) {
      best = s;
      best_pen = pen;
      best_dist = dist;
    }
  }
  return best;
}

void enter(ControllerState& s, FsmState next) {
  s.fsm = next;
  s.maneuver_step = 0;
  if (next != FsmState::kAlign && next != FsmState::kAdvance && next != FsmState::kRefine)
    s.aligned_since = 0;
  if (next == FsmState::kScan) {
    s.scan_sweep_progress = 0.0;
    s.stable_count = 0;
  }
  if (!forward_capable(next) || next == FsmState::kAlign) s.forward = false;
}

void start_escape(ControllerState& s, const ControlParams& p, double draw) {
  enter(s, FsmState::kEscapeStuck);
  const double u = std::clamp(draw, 0.0, std::nextafter(1.0, 0.0));
  const double frac = std::fmod(u * 2.0, 1.0);
  const double deg = p.escape_min_deg + (p.escape_max_deg - p.escape_min_deg) * frac;
  s.maneuver_taps = std::max(1, static_cast<int>(std::lround(deg / p.yaw_per_tap)));
  s.maneuver_dir = u < 0.5 ? CamDir::kLeft : CamDir::kRight;
}

void start_recover(ControllerState& s, const ControlParams& p) {
  enter(s, FsmState::kRecoverLocal);
  s.maneuver_taps = p.recover_taps;
  s.maneuver_dir = s.last_mstp_side < 0 ? CamDir::kRight : CamDir::kLeft;
  s.maneuver_all_stagnant = true;
}

}  // namespace

ControllerState fsm_step(const ControllerState& in, const std::optional<MstpSelection>& mstp,
                         const ProgressSignals& prog, const LoopQuery& anchors,
                         const ControlParams& p, double escape_draw) {
  ControllerState s = in;
  s.prev_forward = in.forward;
  s.committed = false;
  s.plan_cam = CamDir::kNone;
  s.plan_taps = 0;
  ++s.frames;

  std::optional<ErrorVec> e;
  // A near opening wider than half the screen that covers the center with
  // margin needs no heading correction; its clipped center is unreliable.
  bool straddle = false;
  if (mstp) {
    const auto& b = mstp->candidate.box;
    e = error_vector(b.cx(), b.cy(), s.screen_w, s.screen_h);
    const double margin = p.eps_x_out * s.screen_w;
    straddle = b.width() >= 0.5 * s.screen_w && b.x1 <= s.screen_w / 2.0 - margin &&
               b.x2 >= s.screen_w / 2.0 + margin;
    s.mstp_lost_count = 0;
    s.last_mstp_side = e->ex < 0 ? -1 : 1;
  } else {
    ++s.mstp_lost_count;
  }

  // Selection stability, with the previous box moved by the last camera pulse.
  if (mstp) {
    bool same = false;
    if (in.prev_box) {
      BBox moved = *in.prev_box;
      const double yaw = planned_yaw_deg(in.plan_cam, in.plan_taps, p);
      moved.x1 = rotate_column(moved.x1, yaw, s, p);
      moved.x2 = rotate_column(moved.x2, yaw, s, p);
      same = moved.valid() && iou(moved, mstp->candidate.box) >= p.stable_iou;
    }
    s.stable_count = same ? in.stable_count + 1 : 1;
    s.prev_box = mstp->candidate.box;
  } else {
    s.stable_count = 0;
    s.prev_box.reset();
  }

  s.stagnation_clock = (in.forward && prog.stagnating) ? in.stagnation_clock + 1 : 0;
  const bool stagnant = s.stagnation_clock >= p.t_stag;
  if (in.forward && !prog.stagnating) {
    if (++s.progress_frames >= p.t_stag) s.recover_streak = 0;
  } else if (!in.forward) {
    s.progress_frames = 0;
  }

  const bool loop_break =
      p.recovery_enabled && anchors.triggered && in.fsm != FsmState::kLoopBreaker;

  if (loop_break) {
    enter(s, FsmState::kLoopBreaker);
    const int target = loop_target(anchors, p);
    s.loop_target_sector = target;
    const double center = (target - 0.5) / p.sectors * s.screen_w;
    const double deg = std::atan((center - s.screen_w / 2.0) / focal_px(s, p)) / kDeg;
    s.maneuver_taps = static_cast<int>(std::lround(std::abs(deg) / p.yaw_per_tap));
    s.maneuver_dir = deg < 0 ? CamDir::kLeft : CamDir::kRight;
  } else {
    switch (in.fsm) {
      case FsmState::kScan: {
        s.scan_sweep_progress += p.yaw_per_tap;
        if (s.stable_count >= p.stable_frames) {
          enter(s, FsmState::kAlign);
          s.choice_sector = mstp->candidate.sector;
        } else if (s.scan_sweep_progress >= 360.0) {
          if (p.recovery_enabled)
            start_escape(s, p, escape_draw);
          else
            s.scan_sweep_progress = 0.0;
        }
        break;
      }
      case FsmState::kAlign: {
        if (!mstp && s.mstp_lost_count >= p.mstp_lost_limit) {
          enter(s, FsmState::kScan);
          break;
        }
        // Detector dropouts shorter than the lost limit hold the gate.
        if (!mstp) break;
        // Schmitt semantics: a latched heading stays aligned inside the outer band.
        const double ax = std::abs(e->ex);
        const bool aligned = straddle || ax < p.eps_x_in || (in.centered_latch && ax < p.eps_x_out);
        if (update_forward_gate(s, aligned, p)) {
          enter(s, FsmState::kAdvance);
          s.forward = true;
          s.committed = true;
          s.committed_sector = s.choice_sector > 0 ? s.choice_sector : mstp->candidate.sector;
          s.committed_box = mstp->candidate.box;
        }
        break;
      }
      case FsmState::kAdvance:
      case FsmState::kRefine: {
        if (in.fsm == FsmState::kAdvance && s.burst_remaining > 0) {
          if (--s.burst_remaining == 0) enter(s, FsmState::kScan);
          break;
        }
        if (!mstp) {
          if (s.mstp_lost_count >= p.mstp_lost_limit) enter(s, FsmState::kScan);
          break;  // coast on the last heading
        }
        if (p.recovery_enabled && stagnant) {
          if (s.recover_streak >= p.recover_escalate_after)
            start_escape(s, p, escape_draw);
          else
            start_recover(s, p);
          s.stagnation_clock = 0;
          break;
        }
        const double ax = straddle ? 0.0 : std::abs(e->ex);
        if (!update_forward_gate(s, ax < p.eps_x_out, p)) {
          enter(s, FsmState::kAlign);
          s.choice_sector = mstp->candidate.sector;
          break;
        }
        if (in.fsm == FsmState::kAdvance) {
          if (p.recovery_enabled && ax > p.eps_x_in) {
            s.fsm = FsmState::kRefine;
            s.centered_latch = false;
          }
        } else if (ax < p.eps_x_in) {
          s.fsm = FsmState::kAdvance;
        }
        break;
      }
      case FsmState::kRecoverLocal: {
        s.maneuver_all_stagnant = in.maneuver_all_stagnant && prog.stagnating;
        ++s.maneuver_step;
        if (s.maneuver_step > p.recover_backstep) {
          ++s.recover_streak;
          if (s.maneuver_all_stagnant)
            start_escape(s, p, escape_draw);
          else
            enter(s, FsmState::kScan);
        }
        break;
      }
      case FsmState::kEscapeStuck: {
        if (s.maneuver_taps <= 0) {
          enter(s, FsmState::kAdvance);
          s.forward = true;
          s.burst_remaining = p.escape_burst;
        }
        break;
      }
      case FsmState::kLoopBreaker: {
        if (s.maneuver_taps <= 0) enter(s, FsmState::kScan);
        break;
      }
    }
  }

  // Camera command for the state we ended in.
  switch (s.fsm) {
    case FsmState::kScan:
      s.plan_cam = CamDir::kLeft;
      s.plan_taps = 1;
      break;
    case FsmState::kAlign:
    case FsmState::kAdvance:
    case FsmState::kRefine: {
      if (!e || s.burst_remaining > 0) break;
      if (straddle) {
        s.centered_latch = true;
        break;
      }
      // REFINE corrects inside the band while the forward key stays held.
      const bool latch = s.fsm == FsmState::kRefine ? false : s.centered_latch;
      PulsePlan pp = pulse_plan(*e, p, latch);
      // Minimum pulse: below 1/k the gain rounds to zero taps while still
      // outside the inner band.
      if (pp.taps == 0 && !pp.latch) {
        if (std::abs(e->ex) / p.eps_x_out >= std::abs(e->ey) / p.eps_y_out)
          pp.dir = e->ex < 0 ? CamDir::kLeft : CamDir::kRight;
        else
          pp.dir = e->ey < 0 ? CamDir::kUp : CamDir::kDown;
        pp.taps = 1;
      }
      s.centered_latch = pp.latch;
      s.plan_cam = pp.dir;
      s.plan_taps = pp.taps;
      break;
    }
    case FsmState::kRecoverLocal:
      if (s.maneuver_step == 0) {
        s.plan_cam = s.maneuver_dir;
        s.plan_taps = std::min(s.maneuver_taps, p.n_max);
      }
      break;
    case FsmState::kEscapeStuck:
    case FsmState::kLoopBreaker: {
      const int n = std::min(s.maneuver_taps, p.n_max);
      if (n > 0) {
        s.plan_cam = s.maneuver_dir;
        s.plan_taps = n;
        s.maneuver_taps -= n;
      }
      break;
    }
  }
  if (s.plan_taps == 0) s.plan_cam = CamDir::kNone;

  ++s.state_dwell[static_cast<std::size_t>(s.fsm)];
  return s;
}

Action act(const ControllerState& next, const std::optional<MstpSelection>& /*mstp*/,
           const ControlParams& /*p*/) {
  Action a;
  a.cam = next.plan_taps > 0 ? next.plan_cam : CamDir::kNone;
  a.taps = next.plan_taps;
  if (next.forward && !next.prev_forward)
    a.forward = ForwardDelta::kPress;
  else if (!next.forward && next.prev_forward)
    a.forward = ForwardDelta::kRelease;
  return a;
}

}  // namespace stpnav
