#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "stpnav/rng.hpp"
#include "stpnav/sim.hpp"

using namespace stpnav;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Two rooms joined by an opening at x=6, y in [1,3].
World two_rooms(std::uint32_t tags = kTagNone, bool with_prop = false) {
  World w;
  w.scenario = "fixture";
  w.textures = {Texture{120, 30, 0.7, 0.0, 10, 0.9}, Texture{170, 35, 0.5, 1.0, 12, 0.7},
                Texture{90, 20, 0.4, 0.5, 0, 1.0}};
  w.rooms = {Room{0, 0, 0, 6, 4, 0}, Room{1, 6, 0, 12, 4, 1}};
  w.portals = {Portal{0, {6, 1}, {6, 3}, tags, 1.0}};
  if (with_prop) {
    Prop p;
    p.id = 0;
    p.shape = PropShape::kBox;
    p.x1 = 4.0;
    p.y1 = 2.0;
    p.x2 = 4.5;
    p.y2 = 3.5;
    p.texture = 2;
    w.props.push_back(p);
  }
  w.spawn = {2, 2, 0, 0, false};
  w.route = {0};
  w.finalize();
  return w;
}

World big_room() {
  World w;
  w.scenario = "box";
  w.textures = {Texture{}};
  w.rooms = {Room{0, 0, 0, 10, 10, 0}};
  w.spawn = {5, 5, 0, 0, false};
  w.finalize();
  return w;
}

// Segment p->q against an axis-aligned box, slab method.
bool segment_hits_box(Vec2 p, Vec2 q, double x1, double y1, double x2, double y2) {
  double t0 = 0, t1 = 1;
  const double d[2] = {q.x - p.x, q.y - p.y};
  const double o[2] = {p.x, p.y};
  const double lo[2] = {x1, y1}, hi[2] = {x2, y2};
  for (int i = 0; i < 2; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (o[i] < lo[i] || o[i] > hi[i]) return false;
      continue;
    }
    double a = (lo[i] - o[i]) / d[i], b = (hi[i] - o[i]) / d[i];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

TEST(ApplyAction, TapsRotate) {
  const World w = big_room();
  SimParams sp;
  AvatarPose p{5, 5, 0, 0, false};
  EXPECT_DOUBLE_EQ(apply_action(w, p, {CamDir::kRight, 2, ForwardDelta::kHold}, sp).yaw, 10.0);
  EXPECT_DOUBLE_EQ(apply_action(w, p, {CamDir::kLeft, 1, ForwardDelta::kHold}, sp).yaw, 355.0);
  p.pitch = 44;
  EXPECT_DOUBLE_EQ(apply_action(w, p, {CamDir::kUp, 3, ForwardDelta::kHold}, sp).pitch, 45.0);
  p.pitch = -44;
  EXPECT_DOUBLE_EQ(apply_action(w, p, {CamDir::kDown, 3, ForwardDelta::kHold}, sp).pitch, -45.0);
}

TEST(ApplyAction, ForwardToggleAndMotion) {
  const World w = big_room();
  SimParams sp;
  const AvatarPose p{5, 5, 0, 0, false};
  const AvatarPose a = apply_action(w, p, {CamDir::kNone, 0, ForwardDelta::kPress}, sp);
  EXPECT_TRUE(a.forward_held);
  EXPECT_NEAR(a.x, 5 + sp.ticks_per_decision * sp.speed, 1e-12);
  const AvatarPose b = apply_action(w, a, {CamDir::kNone, 0, ForwardDelta::kRelease}, sp);
  EXPECT_FALSE(b.forward_held);
  EXPECT_EQ(b.x, a.x);
  EXPECT_EQ(apply_action(w, p, {}, sp), p);
}

TEST(ApplyAction, HeadOnWallBlocks) {
  const World w = big_room();
  SimParams sp;
  const AvatarPose p{5, 10 - sp.avatar_radius, 90, 0, true};
  const AvatarPose q = apply_action(w, p, {}, sp, 10);
  EXPECT_NEAR(q.x, p.x, 1e-12);
  EXPECT_NEAR(q.y, p.y, 1e-12);
}

TEST(ApplyAction, ObliqueWallSlidesAlongTangent) {
  const World w = big_room();
  SimParams sp;
  const AvatarPose p{5, 10 - sp.avatar_radius, 45, 0, true};
  // Analytic projection of the velocity onto the wall tangent (1,0).
  const Vec2 v{sp.speed * std::cos(45 * kDeg), sp.speed * std::sin(45 * kDeg)};
  const Vec2 n{0, 1};
  const Vec2 slide = v - n * dot(v, n);
  for (int ticks = 1; ticks <= 10; ++ticks) {
    const AvatarPose q = apply_action(w, p, {}, sp, ticks);
    EXPECT_NEAR(q.x, p.x + ticks * slide.x, 1e-9);
    EXPECT_NEAR(q.y, p.y, 1e-9);
  }
  EXPECT_NEAR(length(slide), sp.speed * std::cos(45 * kDeg), 1e-15);
}

TEST(ApplyAction, CollisionFuzz) {
  SimParams sp;
  for (const auto& name : scenario_names()) {
    const World w = generate_world(name, 3);
    Rng rng(17);
    AvatarPose p = teleport(w, w.spawn, sp);
    for (int i = 0; i < 1500; ++i) {
      Action a;
      a.cam = static_cast<CamDir>(rng.uniform_int(0, kNumCamDirs - 1));
      a.taps = a.cam == CamDir::kNone ? 0 : static_cast<int>(rng.uniform_int(1, 4));
      const auto r = rng.uniform();
      a.forward = r < 0.15 ? ForwardDelta::kPress : r < 0.2 ? ForwardDelta::kRelease : ForwardDelta::kHold;
      p = apply_action(w, p, a, sp);
      ASSERT_GE(clearance(w, p.pos()), sp.avatar_radius - 1e-9) << name << " step " << i;
      ASSERT_GE(w.room_at(p.pos()), 0) << name << " step " << i;
    }
  }
}

TEST(Render, DeterministicAndYawWraps) {
  const World w = generate_world("l_turn", 1);
  SimParams sp;
  AvatarPose p = w.spawn;
  p.yaw = 30;
  const Frame a = render(w, p, sp);
  EXPECT_EQ(render(w, p, sp), a);
  AvatarPose q = p;
  q.yaw = 390;
  EXPECT_EQ(render(w, q, sp), a);
  EXPECT_EQ(a.width, sp.width);
  EXPECT_EQ(a.height, sp.height);
  EXPECT_GT(a.variance(), 0.0);
}

TEST(Render, DarkPortalDimsByFactor) {
  SimParams sp;
  const World lit = two_rooms();
  const World dark = two_rooms(kTagDark);
  const AvatarPose p{2, 2, 0, 0, false};
  const auto vis = visible_portals(lit, p, sp);
  ASSERT_EQ(vis.size(), 1u);
  const BBox b = vis[0].box;
  const Frame fl = render(lit, p, sp);
  const Frame fd = render(dark, p, sp);
  double sl = 0, sd = 0;
  for (int y = static_cast<int>(std::ceil(b.y1)) + 1; y < static_cast<int>(b.y2) - 1; ++y)
    for (int x = static_cast<int>(std::ceil(b.x1)) + 1; x < static_cast<int>(b.x2) - 1; ++x) {
      sl += fl.at(x, y);
      sd += fd.at(x, y);
    }
  ASSERT_GT(sl, 0);
  EXPECT_NEAR(sd / sl, 0.35, 0.02);
  // Outside the opening nothing changes.
  EXPECT_EQ(fl.at(5, 90), fd.at(5, 90));
}

TEST(VisiblePortals, BehindIsAbsentAheadIsCentered) {
  SimParams sp;
  const World w = two_rooms();
  EXPECT_TRUE(visible_portals(w, {2, 2, 180, 0, false}, sp).empty());
  const auto v = visible_portals(w, {2, 2, 0, 0, false}, sp);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].occlusion, 0.0);
  EXPECT_LT(std::abs(v[0].box.cx() - sp.width / 2.0), 2.0);
  EXPECT_EQ(v[0].id, 0);
  EXPECT_GT(v[0].free_space, 0.0);
}

TEST(VisiblePortals, HalfHiddenByProp) {
  SimParams sp;
  const World w = two_rooms(kTagNone, true);
  const Vec2 eye{2, 2};
  int blocked = 0;
  for (int k = 0; k < 100; ++k) {
    const Vec2 q{6, 1 + 2 * (k + 0.5) / 100};
    blocked += segment_hits_box(eye, q, 4.0, 2.0, 4.5, 3.5);
  }
  const double expected = blocked / 100.0;
  const auto v = visible_portals(w, {eye.x, eye.y, 0, 0, false}, sp);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NEAR(v[0].occlusion, expected, 0.05);
  EXPECT_NEAR(v[0].occlusion, 0.5, 0.1);
}

TEST(VisiblePortals, AreaGrowsWhenApproaching) {
  SimParams sp;
  const World w = two_rooms();
  AvatarPose p{0.5, 2, 0, 0, true};
  double prev = 0;
  for (int i = 0; i < 40; ++i) {
    const auto v = visible_portals(w, p, sp);
    if (v.empty()) break;
    EXPECT_GE(v[0].box.area(), prev);
    prev = v[0].box.area();
    p = apply_action(w, p, {}, sp, 1);
  }
  EXPECT_GT(prev, 0);
}

TEST(Teleport, RestoresExactPose) {
  SimParams sp;
  const World w = two_rooms(kTagNone, true);
  const AvatarPose save{3, 1, 20, 5, true};
  const AvatarPose t = teleport(w, save, sp);
  EXPECT_FALSE(t.forward_held);
  EXPECT_EQ(t.x, 3);
  EXPECT_EQ(t.yaw, 20);
  EXPECT_EQ(teleport(w, t, sp), t);
  AvatarPose copy = save;
  copy.forward_held = false;
  EXPECT_EQ(render(w, t, sp), render(w, copy, sp));
  EXPECT_THROW(teleport(w, {4.2, 2.5, 0, 0, false}, sp), std::invalid_argument);
  EXPECT_THROW(teleport(w, {20, 2, 0, 0, false}, sp), std::invalid_argument);
  EXPECT_THROW(teleport(w, {0.1, 2, 0, 0, false}, sp), std::invalid_argument);
}

TEST(GenerateWorld, AllScenariosDeterministic) {
  ASSERT_EQ(scenario_names().size(), 8u);
  SimParams sp;
  for (const auto& name : scenario_names()) {
    for (std::uint64_t seed : {0ULL, 7ULL}) {
      const World a = generate_world(name, seed);
      const World b = generate_world(name, seed);
      EXPECT_TRUE(a.same_content(b)) << name;
      EXPECT_EQ(world_to_text(a), world_to_text(b));
      EXPECT_GE(a.milestones.size(), 1u);
      EXPECT_LE(a.milestones.size(), 6u);
      EXPECT_FALSE(a.route.empty());
      EXPECT_NO_THROW(teleport(a, a.spawn, sp)) << name;
      for (const auto& m : a.milestones) {
        EXPECT_NO_THROW(teleport(a, m.pose, sp)) << name;
        EXPECT_NO_THROW(teleport(a, m.save, sp)) << name;
      }
    }
  }
  EXPECT_THROW(generate_world("no_such_place", 0), std::invalid_argument);
}

TEST(GenerateWorld, StraightCorridorIsAChain) {
  const World w = generate_world("straight_corridor", 2);
  EXPECT_EQ(w.route.size(), w.portals.size());
  EXPECT_EQ(w.rooms.size(), w.portals.size() + 1);
  for (std::size_t i = 0; i < w.route.size(); ++i) {
    const Portal* p = w.portal(w.route[i]);
    ASSERT_NE(p, nullptr);
    // Each opening joins room i to room i+1.
    const Vec2 m = (p->a + p->b) * 0.5;
    EXPECT_TRUE(w.rooms[i].contains(m));
    EXPECT_TRUE(w.rooms[i + 1].contains(m));
  }
  EXPECT_TRUE(w.dead_end_portals().empty());
}

TEST(GenerateWorld, SymmetricForkMirrorsAboutSpawnAxis) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const World w = generate_world("symmetric_fork", seed);
    bool found = false;
    for (const auto& a : w.portals)
      for (const auto& b : w.portals) {
        if (a.id >= b.id || a.a.x != a.b.x || b.a.x != b.b.x || a.a.x != b.a.x) continue;
        const double ma = 0.5 * (a.a.y + a.b.y) - w.spawn.y;
        const double mb = 0.5 * (b.a.y + b.b.y) - w.spawn.y;
        if (std::abs(ma + mb) < 1e-9 && std::abs(std::abs(a.b.y - a.a.y) - std::abs(b.b.y - b.a.y)) < 1e-9) found = true;
      }
    EXPECT_TRUE(found) << "seed " << seed;
  }
}

TEST(GenerateWorld, DeadEndScenarioHasDeadEnds) {
  EXPECT_FALSE(generate_world("t_junction_deadend", 0).dead_end_portals().empty());
  const World d = generate_world("dark_right_door", 0);
  bool dark = false;
  for (const auto& p : d.portals) dark |= (p.tags & kTagDark) != 0;
  EXPECT_TRUE(dark);
}

TEST(WorldText, RoundTrip) {
  for (const auto& name : scenario_names()) {
    const World w = generate_world(name, 5);
    const std::string text = world_to_text(w);
    const World r = world_from_text(text);
    EXPECT_TRUE(r.same_content(w)) << name;
    EXPECT_EQ(world_to_text(r), text);
  }
  World fixture = two_rooms(kTagDark, true);
  fixture.decoys.push_back(Decoy{0, {0, 3}, {0, 1}, 0.6, 2.2, 230, 1.4});
  Prop cyl;
  cyl.id = 1;
  cyl.shape = PropShape::kCylinder;
  cyl.cx = 9;
  cyl.cy = 2;
  cyl.r = 0.4;
  fixture.props.push_back(cyl);
  fixture.milestones.push_back({1, {9, 1, 90, 0, false}, {2, 2, 0, 0, false}});
  fixture.finalize();
  EXPECT_TRUE(world_from_text(world_to_text(fixture)).same_content(fixture));
}

TEST(WorldText, RejectsMalformedInput) {
  EXPECT_THROW(world_from_text(""), std::invalid_argument);
  EXPECT_THROW(world_from_text("stpnav-world 1\nroom 0 0 0 x 4 0\n"), std::invalid_argument);
  std::string text = world_to_text(two_rooms());
  text += "bogus 1 2 3\n";
  EXPECT_THROW(world_from_text(text), std::invalid_argument);
}

TEST(SimParams, Validation) {
  SimParams p;
  EXPECT_NO_THROW(p.validate());
  p.fov_deg = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  EXPECT_DOUBLE_EQ(wrap_yaw(-10), 350);
  EXPECT_DOUBLE_EQ(wrap_yaw(720), 0);
}
