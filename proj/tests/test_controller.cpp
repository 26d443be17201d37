#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "stpnav/controller.hpp"
#include "stpnav/rng.hpp"
#include "stpnav/vision.hpp"

using namespace stpnav;

namespace {

constexpr double kW = 320, kH = 180;

MstpSelection at(double cx, double cy, double half_w = 20, double half_h = 40, int sectors = 8) {
  MstpSelection m;
  m.candidate.box = {cx - half_w, cy - half_h, cx + half_w, cy + half_h};
  m.candidate.det_score = 0.7;
  m.candidate.sector = sector_of(m.candidate.box, sectors, kW);
  return m;
}

ProgressSignals moving() {
  ProgressSignals s;
  s.area_delta = 0.1;
  s.ssim_recent = 0.5;
  s.flow_mag = 2.0;
  return s;
}

ProgressSignals stuck() {
  ProgressSignals s;
  s.area_delta = 0.0;
  s.ssim_recent = 0.99;
  s.flow_mag = 0.0;
  s.stagnating = true;
  return s;
}

Frame textured_frame(std::uint64_t seed) { return oracle::textured(320, 180, seed); }

}  // namespace

TEST(ErrorVector, Examples) {
  const ErrorVec c = error_vector(400, 300, 800, 600);
  EXPECT_EQ(c.ex, 0.0);
  EXPECT_EQ(c.ey, 0.0);
  const ErrorVec tl = error_vector(0, 0, 800, 600);
  EXPECT_DOUBLE_EQ(tl.ex, -0.5);
  EXPECT_DOUBLE_EQ(tl.ey, -0.5);
  const ErrorVec q = error_vector(600, 450, 800, 600);
  EXPECT_DOUBLE_EQ(q.ex, 0.25);
  EXPECT_DOUBLE_EQ(q.ey, 0.25);
}

TEST(PulsePlan, Examples) {
  ControlParams p;
  EXPECT_EQ(pulse_plan({0, 0}, p, false), (PulsePlan{CamDir::kNone, 0, true}));
  EXPECT_EQ(pulse_plan({0.25, 0}, p, false), (PulsePlan{CamDir::kRight, 2, false}));
  EXPECT_EQ(pulse_plan({0.05, 0}, p, true), (PulsePlan{CamDir::kNone, 0, true}));
}

TEST(PulsePlan, DirectionAndAxis) {
  ControlParams p;
  EXPECT_EQ(pulse_plan({-0.3, 0}, p, false).dir, CamDir::kLeft);
  EXPECT_EQ(pulse_plan({0, -0.3}, p, false).dir, CamDir::kUp);
  EXPECT_EQ(pulse_plan({0, 0.3}, p, false).dir, CamDir::kDown);
  // Normalized tie goes horizontal: 0.16/0.08 == 0.24/0.12.
  EXPECT_EQ(pulse_plan({0.16, 0.24}, p, false).dir, CamDir::kRight);
  // Latch clears once either axis crosses its outer threshold.
  EXPECT_EQ(pulse_plan({0.0, 0.2}, p, true).dir, CamDir::kDown);
}

TEST(PulseCount, MatchesScalarOracle) {
  Rng rng(2024);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const double ex = rng.uniform(-0.6, 0.6);
    const double ey = rng.uniform(-0.6, 0.6);
    const double k = rng.uniform(0.01, 60.0);
    const int n_max = static_cast<int>(rng.uniform_int(1, 12));
    mismatches += pulse_count({ex, ey}, k, n_max) != oracle::pulse_count(ex, ey, k, n_max);
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(PulsePlan, TapBoundsAndNoneIffZero) {
  Rng rng(3);
  for (int i = 0; i < 5000; ++i) {
    ControlParams p;
    p.k = rng.uniform(1, 40);
    p.n_max = static_cast<int>(rng.uniform_int(1, 8));
    const PulsePlan pp = pulse_plan({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)}, p, rng.bernoulli(0.5));
    ASSERT_LE(pp.taps, p.n_max);
    ASSERT_GE(pp.taps, 0);
    ASSERT_EQ(pp.taps == 0, pp.dir == CamDir::kNone);
  }
}

TEST(PulsePlan, HysteresisNoChatter) {
  ControlParams p;
  Rng rng(99);
  for (int traj = 0; traj < 1000; ++traj) {
    bool latch = pulse_plan({0, 0}, p, false).latch;
    ASSERT_TRUE(latch);
    for (int step = 0; step < 100; ++step) {
      const double ex = rng.uniform(p.eps_x_in, p.eps_x_out) * (rng.bernoulli(0.5) ? 1 : -1);
      const double ey = rng.uniform(p.eps_y_in, p.eps_y_out) * (rng.bernoulli(0.5) ? 1 : -1);
      if (std::abs(ex) >= p.eps_x_out || std::abs(ey) >= p.eps_y_out) continue;
      const PulsePlan pp = pulse_plan({ex, ey}, p, latch);
      ASSERT_EQ(pp.taps, 0);
      ASSERT_EQ(pp.dir, CamDir::kNone);
      latch = pp.latch;
    }
  }
}

TEST(ForwardGate, Examples) {
  ControlParams p;
  ControllerState s = initial_state(kW, kH);
  s.fsm = FsmState::kScan;
  for (int i = 0; i < 10; ++i) EXPECT_FALSE(update_forward_gate(s, true, p));

  s = initial_state(kW, kH);
  s.fsm = FsmState::kAlign;
  for (int i = 1; i < p.tau_on; ++i) EXPECT_FALSE(update_forward_gate(s, true, p));
  EXPECT_TRUE(update_forward_gate(s, true, p));

  s.fsm = FsmState::kAdvance;
  EXPECT_FALSE(update_forward_gate(s, false, p));
  EXPECT_EQ(s.aligned_since, 0);
}

TEST(ProgressUpdate, NeutralUntilEnoughFrames) {
  ControlParams p;
  FrameRing ring(p.ring_size);
  for (int i = 0; i < p.delta; ++i) ring.push(textured_frame(1), 100);
  const ProgressSignals s = progress_update(ring, p);
  EXPECT_EQ(s.area_delta, 1.0);
  EXPECT_EQ(s.ssim_recent, 0.0);
  EXPECT_TRUE(std::isinf(s.flow_mag));
  EXPECT_FALSE(s.stagnating);
}

TEST(ProgressUpdate, StaticSceneStagnatesAfterTStag) {
  ControlParams p;
  FrameRing ring(p.ring_size);
  ControllerState s = initial_state(kW, kH);
  s.fsm = FsmState::kAdvance;
  s.forward = true;
  s.centered_latch = true;
  s.aligned_since = p.tau_on;
  const auto m = at(160, 90);
  int frames = 0;
  for (; frames < 500; ++frames) {
    ring.push(textured_frame(5), m.candidate.box.area());
    const ProgressSignals sig = progress_update(ring, p);
    s = fsm_step(s, m, sig, {}, p);
    if (s.fsm == FsmState::kRecoverLocal) break;
  }
  // Signals become valid after delta+1 frames, then t_stag stagnant frames.
  EXPECT_EQ(frames + 1, p.delta + p.t_stag);
}

TEST(ProgressUpdate, MovingFramesNeverStagnate) {
  ControlParams p;
  FrameRing ring(p.ring_size);
  const Frame base = oracle::textured(360, 180, 6);
  for (int i = 0; i < 60; ++i) {
    Frame f(320, 180);
    for (int y = 0; y < 180; ++y)
      for (int x = 0; x < 320; ++x) f.at(x, y) = base.at((x + 2 * i) % 360, y);
    ring.push(f, 100);
    EXPECT_FALSE(progress_update(ring, p).stagnating);
  }
}

TEST(ProgressUpdate, GrowingAreaNeverStagnates) {
  ControlParams p;
  FrameRing ring(p.ring_size);
  double area = 100;
  for (int i = 0; i < 60; ++i) {
    ring.push(textured_frame(7), area);
    area *= std::pow(1.05, 1.0 / p.delta);
    EXPECT_FALSE(progress_update(ring, p).stagnating);
  }
}

TEST(FsmStep, ScanToAlignAfterThreeStableFrames) {
  ControlParams p;
  ControllerState s = initial_state(kW, kH);
  // Scan pulses left each frame, so the target drifts right by one tap's worth.
  const double f = 160.0 / std::tan(45.0 * std::numbers::pi / 180.0);
  double cx = 120;
  for (int i = 0; i < p.stable_frames; ++i) {
    EXPECT_EQ(s.fsm, FsmState::kScan);
    s = fsm_step(s, at(cx, 90), moving(), {}, p);
    const double th = std::atan((cx - 160) / f) + p.yaw_per_tap * std::numbers::pi / 180;
    cx = 160 + f * std::tan(th);
  }
  EXPECT_EQ(s.fsm, FsmState::kAlign);
}

TEST(FsmStep, AdvanceStagnationGoesToRecoverLocal) {
  ControlParams p;
  ControllerState s = initial_state(kW, kH);
  s.fsm = FsmState::kAdvance;
  s.forward = true;
  s.aligned_since = p.tau_on;
  s.centered_latch = true;
  s.stagnation_clock = p.t_stag - 1;
  const ControllerState next = fsm_step(s, at(160, 90), stuck(), {}, p);
  EXPECT_EQ(next.fsm, FsmState::kRecoverLocal);
  EXPECT_FALSE(next.forward);
}

TEST(FsmStep, ThirdAnchorRevisitEntersLoopBreaker) {
  ControlParams p;
  AnchorTracker tracker(p);
  const std::uint64_t h = phash64(textured_frame(8));
  std::int64_t t = 0;
  EXPECT_FALSE(tracker.observe(h, t));  // creates the anchor
  for (int r = 1; r <= p.loop_revisits; ++r) {
    t += p.anchor_revisit_gap + 1;
    const bool fired = tracker.observe(h, t);
    EXPECT_EQ(fired, r == p.loop_revisits) << "revisit " << r;
  }
  // A continuous stay is one visit, not many.
  AnchorTracker steady(p);
  for (int i = 0; i < 200; ++i) EXPECT_FALSE(steady.observe(h, i));

  LoopQuery q;
  q.triggered = true;
  ControllerState s = initial_state(kW, kH);
  s.fsm = FsmState::kAdvance;
  s.forward = true;
  EXPECT_EQ(fsm_step(s, at(160, 90), moving(), q, p).fsm, FsmState::kLoopBreaker);
  p.recovery_enabled = false;
  EXPECT_NE(fsm_step(s, at(160, 90), moving(), q, p).fsm, FsmState::kLoopBreaker);
}

TEST(FsmStep, LoopBreakerTargetsLowestPenaltyUnexploredSector) {
  ControlParams p;
  LoopQuery q;
  q.triggered = true;
  q.explored_mask = 1u << 2;  // sector 3
  q.sector_penalty.assign(8, 0.5);
  q.sector_penalty[6] = 0.1;  // sector 7
  const ControllerState s = fsm_step(initial_state(kW, kH), std::nullopt, moving(), q, p);
  EXPECT_EQ(s.fsm, FsmState::kLoopBreaker);
  EXPECT_EQ(s.loop_target_sector, 7);
  EXPECT_EQ(s.plan_cam, CamDir::kRight);
}

TEST(FsmStep, FullSweepWithoutTargetEscapes) {
  ControlParams p;
  ControllerState s = initial_state(kW, kH);
  const int frames = static_cast<int>(std::ceil(360.0 / p.yaw_per_tap));
  for (int i = 0; i < frames - 1; ++i) s = fsm_step(s, std::nullopt, moving(), {}, p);
  EXPECT_EQ(s.fsm, FsmState::kScan);
  s = fsm_step(s, std::nullopt, moving(), {}, p);
  EXPECT_EQ(s.fsm, FsmState::kEscapeStuck);
  p.recovery_enabled = false;
  ControllerState n = initial_state(kW, kH);
  for (int i = 0; i < 3 * frames; ++i) n = fsm_step(n, std::nullopt, moving(), {}, p);
  EXPECT_EQ(n.fsm, FsmState::kScan);
}

TEST(FsmStep, AdvanceLostTargetReturnsToScan) {
  ControlParams p;
  ControllerState s = initial_state(kW, kH);
  s.fsm = FsmState::kAdvance;
  s.forward = true;
  s.aligned_since = p.tau_on;
  for (int i = 1; i < p.mstp_lost_limit; ++i) {
    s = fsm_step(s, std::nullopt, moving(), {}, p);
    EXPECT_EQ(s.fsm, FsmState::kAdvance);
  }
  s = fsm_step(s, std::nullopt, moving(), {}, p);
  EXPECT_EQ(s.fsm, FsmState::kScan);
  EXPECT_FALSE(s.forward);
}

TEST(FsmStep, AdvanceToRefineAndBack) {
  ControlParams p;
  ControllerState s = initial_state(kW, kH);
  s.fsm = FsmState::kAdvance;
  s.forward = true;
  s.aligned_since = p.tau_on;
  s.centered_latch = true;
  s = fsm_step(s, at(160 + 0.05 * kW, 90), moving(), {}, p);
  EXPECT_EQ(s.fsm, FsmState::kRefine);
  EXPECT_TRUE(s.forward);
  EXPECT_EQ(s.plan_cam, CamDir::kRight);
  s = fsm_step(s, at(160, 90), moving(), {}, p);
  EXPECT_EQ(s.fsm, FsmState::kAdvance);
  EXPECT_TRUE(s.forward);
}

TEST(FsmStep, IsPure) {
  ControlParams p;
  Rng rng(4);
  ControllerState s = initial_state(kW, kH);
  for (int i = 0; i < 300; ++i) {
    const std::optional<MstpSelection> m =
        rng.bernoulli(0.7) ? std::optional<MstpSelection>(at(rng.uniform(30, 290), rng.uniform(50, 130))) : std::nullopt;
    const ProgressSignals sig = rng.bernoulli(0.3) ? stuck() : moving();
    const double draw = rng.uniform();
    const ControllerState a = fsm_step(s, m, sig, {}, p, draw);
    const ControllerState b = fsm_step(s, m, sig, {}, p, draw);
    ASSERT_EQ(a.fsm, b.fsm);
    ASSERT_EQ(a.forward, b.forward);
    ASSERT_EQ(a.plan_cam, b.plan_cam);
    ASSERT_EQ(a.plan_taps, b.plan_taps);
    ASSERT_EQ(a.aligned_since, b.aligned_since);
    ASSERT_EQ(a.maneuver_taps, b.maneuver_taps);
    ASSERT_EQ(a.state_dwell, b.state_dwell);
    s = a;
  }
}

TEST(Act, Examples) {
  ControlParams p;
  ControllerState s = initial_state(kW, kH);
  s.fsm = FsmState::kAlign;
  const auto off = at(160 + 0.25 * kW, 90);
  ControllerState n = fsm_step(s, off, moving(), {}, p);
  EXPECT_EQ(act(n, off, p), (Action{CamDir::kRight, 2, ForwardDelta::kHold}));

  s.aligned_since = p.tau_on - 1;
  s.centered_latch = true;
  const auto mid = at(160, 90);
  n = fsm_step(s, mid, moving(), {}, p);
  EXPECT_EQ(n.fsm, FsmState::kAdvance);
  EXPECT_EQ(act(n, mid, p).forward, ForwardDelta::kPress);

  n = fsm_step(n, mid, moving(), {}, p);
  EXPECT_EQ(n.fsm, FsmState::kAdvance);
  EXPECT_EQ(act(n, mid, p), (Action{CamDir::kNone, 0, ForwardDelta::kHold}));
}

TEST(Act, ScanSweepsLeft) {
  ControlParams p;
  const ControllerState n = fsm_step(initial_state(kW, kH), at(250, 90), moving(), {}, p);
  EXPECT_EQ(n.fsm, FsmState::kScan);
  EXPECT_EQ(act(n, std::nullopt, p), (Action{CamDir::kLeft, 1, ForwardDelta::kHold}));
}

// Random walks through the state machine: forward only in capable states,
// presses and releases alternate, dwell counts add up.
TEST(FsmStep, FuzzedInvariants) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    ControlParams p;
    p.recovery_enabled = seed % 4 != 0;
    ControllerState s = initial_state(kW, kH);
    double cx = rng.uniform(20, 300);
    int presses = 0, releases = 0;
    bool held = false;
    for (int i = 0; i < 600; ++i) {
      cx = std::clamp(cx + rng.normal(0, 8), 5.0, 315.0);
      std::optional<MstpSelection> m;
      if (rng.bernoulli(0.85)) m = at(cx, rng.uniform(70, 110));
      const ProgressSignals sig = rng.bernoulli(0.2) ? stuck() : moving();
      LoopQuery q;
      q.triggered = rng.bernoulli(0.01);
      s = fsm_step(s, m, sig, q, p, rng.uniform());
      const Action a = act(s, m, p);
      if (!forward_capable(s.fsm)) ASSERT_FALSE(s.forward) << to_string(s.fsm);
      if (a.forward == ForwardDelta::kPress) {
        ASSERT_FALSE(held);
        held = true;
        ++presses;
      } else if (a.forward == ForwardDelta::kRelease) {
        ASSERT_TRUE(held);
        held = false;
        ++releases;
      }
      ASSERT_EQ(held, s.forward);
      ASSERT_LE(a.taps, p.n_max);
      ASSERT_EQ(a.taps == 0, a.cam == CamDir::kNone);
    }
    EXPECT_LE(releases, presses);
    EXPECT_EQ(std::accumulate(s.state_dwell.begin(), s.state_dwell.end(), std::int64_t{0}), s.frames);
  }
}

TEST(ControlParams, Validation) {
  ControlParams p;
  EXPECT_NO_THROW(p.validate());
  p.eps_x_in = 0.1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.n_max = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.k = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(FsmNames, RoundTrip) {
  for (int i = 0; i < kNumFsmStates; ++i) {
    const auto s = static_cast<FsmState>(i);
    EXPECT_EQ(fsm_state_from_string(to_string(s)), s);
  }
  EXPECT_TRUE(recovery_state(FsmState::kEscapeStuck));
  EXPECT_FALSE(forward_capable(FsmState::kScan));
  EXPECT_TRUE(forward_capable(FsmState::kRefine));
}
