#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "stpnav/rng.hpp"
#include "stpnav/sim.hpp"
#include "stpnav/vision.hpp"

namespace stpnav {

namespace {

// Coordinates are rounded to millimetres so that world files round-trip
// through text without drift.
double mm(double v) { return std::round(v * 1000.0) / 1000.0; }

constexpr int kTextureAttempts = 32;
constexpr double kMaxViewOverlap = 0.6;

class Builder {
 public:
  Builder(std::string name, std::uint64_t seed) : rng_(Rng::derive(seed, 0x5ce7)) {
    w_.scenario = std::move(name);
    w_.seed = seed;
  }

  Rng& rng() { return rng_; }

  int texture() {
    w_.textures.push_back(draw_texture());
    return static_cast<int>(w_.textures.size()) - 1;
  }

  int room(double x1, double y1, double x2, double y2, int tex = -1) {
    const int id = static_cast<int>(w_.rooms.size());
    w_.rooms.push_back({id, mm(x1), mm(y1), mm(x2), mm(y2), tex < 0 ? texture() : tex});
    return id;
  }

  /// Opening on the vertical line x between y0 and y1.
  int portal_x(double x, double y0, double y1, std::uint32_t tags = kTagNone, double sal = 1.0) {
    return add_portal({mm(x), mm(y0)}, {mm(x), mm(y1)}, tags, sal);
  }
  /// Opening on the horizontal line y between x0 and x1.
  int portal_y(double y, double x0, double x1, std::uint32_t tags = kTagNone, double sal = 1.0) {
    return add_portal({mm(x0), mm(y)}, {mm(x1), mm(y)}, tags, sal);
  }

  void box(double x1, double y1, double x2, double y2) {
    Prop p;
    p.id = static_cast<int>(w_.props.size());
    p.shape = PropShape::kBox;
    p.x1 = mm(x1);
    p.y1 = mm(y1);
    p.x2 = mm(x2);
    p.y2 = mm(y2);
    p.texture = texture();
    w_.props.push_back(p);
  }

  void cylinder(double cx, double cy, double r) {
    Prop p;
    p.id = static_cast<int>(w_.props.size());
    p.shape = PropShape::kCylinder;
    p.cx = mm(cx);
    p.cy = mm(cy);
    p.r = mm(r);
    p.texture = texture();
    w_.props.push_back(p);
  }

  void decoy(Vec2 a, Vec2 b, double sal) {
    Decoy d;
    d.id = static_cast<int>(w_.decoys.size());
    d.a = {mm(a.x), mm(a.y)};
    d.b = {mm(b.x), mm(b.y)};
    d.salience = sal;
    w_.decoys.push_back(d);
  }

  void spawn(double x, double y, double yaw) { w_.spawn = pose(x, y, yaw); }

  void route(std::vector<int> ids) { w_.route = std::move(ids); }

  /// Milestones are saved at the previous milestone (the spawn for the first).
  void milestone(double x, double y, double yaw) {
    MilestoneSpec m;
    m.id = static_cast<int>(w_.milestones.size()) + 1;
    m.pose = pose(x, y, yaw);
    m.save = w_.milestones.empty() ? w_.spawn : w_.milestones.back().pose;
    w_.milestones.push_back(m);
  }

  /// Redraws all textures until milestone views are mutually distinct and
  /// distinct from the spawn view; keeps the best draw otherwise.
  World finish() {
    w_.finalize();
    if (w_.milestones.empty()) return w_;
    World best = w_;
    double best_score = view_overlap(w_);
    for (int attempt = 0; attempt < kTextureAttempts && best_score >= kMaxViewOverlap; ++attempt) {
      for (auto& t : w_.textures) t = draw_texture();
      w_.finalize();
      const double score = view_overlap(w_);
      if (score < best_score) {
        best_score = score;
        best = w_;
      }
    }
    return best;
  }

 private:
  static AvatarPose pose(double x, double y, double yaw) {
    AvatarPose p;
    p.x = mm(x);
    p.y = mm(y);
    p.yaw = wrap_yaw(yaw);
    return p;
  }

  Texture draw_texture() {
    Texture t;
    t.base = mm(rng_.uniform(95.0, 185.0));
    t.amp = mm(rng_.uniform(4.0, 9.0));
    t.period = mm(rng_.uniform(3.0, 7.0));
    t.phase = mm(rng_.uniform(0.0, 2.0 * std::numbers::pi));
    t.vamp = mm(rng_.uniform(25.0, 45.0));
    t.vperiod = mm(rng_.uniform(0.5, 1.6));
    return t;
  }

  // Highest NCC between any milestone view and another milestone or the spawn.
  static double view_overlap(const World& w) {
    const SimParams sim;
    std::vector<Frame> views;
    for (const auto& m : w.milestones) views.push_back(render(w, m.pose, sim));
    const Frame spawn = render(w, w.spawn, sim);
    double worst = -1.0;
    for (std::size_t i = 0; i < views.size(); ++i) {
      worst = std::max(worst, ncc_score(spawn, views[i]));
      for (std::size_t j = 0; j < views.size(); ++j)
        if (i != j) worst = std::max(worst, ncc_score(views[j], views[i]));
    }
    return worst;
  }

  int add_portal(Vec2 a, Vec2 b, std::uint32_t tags, double sal) {
    const int id = static_cast<int>(w_.portals.size());
    w_.portals.push_back({id, a, b, tags, sal});
    return id;
  }

  World w_;
  Rng rng_;
};

World straight_corridor(std::uint64_t seed) {
  Builder b("straight_corridor", seed);
  double x = 0.0;
  std::vector<double> joints;
  for (int i = 0; i < 4; ++i) {
    const double len = 8.0 + b.rng().uniform(-1.0, 1.0);
    b.room(x, 0.0, x + len, 3.0);
    x += len;
    joints.push_back(x);
  }
  b.room(x, -1.5, x + 6.0, 4.5);
  std::vector<int> route;
  for (double j : joints) {
    const double c = 1.5 + b.rng().uniform(-0.3, 0.3);
    route.push_back(b.portal_x(j, c - 0.7, c + 0.7));
  }
  b.spawn(1.5, 1.5, 0.0);
  b.route(route);
  for (std::size_t i = 0; i + 1 < joints.size(); ++i) b.milestone(joints[i] + 3.0, 1.5, 0.0);
  return b.finish();
}

World l_turn(std::uint64_t seed) {
  Builder b("l_turn", seed);
  const double len = 9.0 + b.rng().uniform(-1.0, 1.0);
  b.room(0.0, 0.0, len, 3.0);
  b.room(len, 0.0, len + 4.0, 4.0);
  b.room(len, 4.0, len + 4.0, 13.0);
  b.room(len, 13.0, len + 4.0, 20.0);
  b.room(len - 1.0, 20.0, len + 5.0, 25.0);
  const int p0 = b.portal_x(len, 0.8, 2.2);
  const int p1 = b.portal_y(4.0, len + 1.3, len + 2.7);
  const int p2 = b.portal_y(13.0, len + 1.3, len + 2.7);
  const int p3 = b.portal_y(20.0, len + 1.3, len + 2.7);
  b.spawn(1.5, 1.5, 0.0);
  b.route({p0, p1, p2, p3});
  b.milestone(len - 2.5, 1.5, 0.0);
  b.milestone(len + 2.0, 6.5, 90.0);
  b.milestone(len + 2.0, 16.5, 90.0);
  return b.finish();
}

// Three halls in a row. Each has a salient left opening into a dead-end
// closet and a plain right opening that continues the route. Closets share
// one texture; halls differ so that their milestones stay distinguishable.
World t_junction_deadend(std::uint64_t seed) {
  Builder b("t_junction_deadend", seed);
  const int closet_tex = b.texture();
  std::vector<int> route;
  double x0 = 0.0;
  for (int i = 0; i < 3; ++i) {
    b.room(x0, 0.0, x0 + 10.0, 6.0);
    b.room(x0 + 10.0, 0.0, x0 + 13.0, 3.0, closet_tex);
    b.room(x0 + 10.0, 3.4, x0 + 13.0, 6.0);
    b.portal_x(x0 + 10.0, 0.9, 2.1, kTagNone, 1.6);
    route.push_back(b.portal_x(x0 + 10.0, 3.9, 5.1));
    route.push_back(b.portal_x(x0 + 13.0, 3.9, 5.1));
    x0 += 13.0;
  }
  b.room(x0, 2.0, x0 + 8.0, 7.0);
  b.room(x0 + 8.0, 1.5, x0 + 14.0, 7.5);
  route.push_back(b.portal_x(x0 + 8.0, 3.9, 5.1));
  b.spawn(1.0, 4.5, 0.0);
  b.route(route);
  b.milestone(14.5, 4.5, 0.0);
  b.milestone(27.5, 4.5, 0.0);
  b.milestone(x0 + 3.0, 4.5, 0.0);
  return b.finish();
}

World symmetric_fork(std::uint64_t seed) {
  Builder b("symmetric_fork", seed);
  const double skew = b.rng().uniform(-0.1, 0.1);
  b.room(0.0, 0.0, 10.0, 8.0);
  b.room(10.0, 0.0, 16.0, 3.4);
  b.room(10.0, 4.6, 16.0, 8.0);
  b.room(16.0, 0.0, 24.0, 8.0);
  b.room(24.0, 2.5, 30.0, 5.5);
  b.room(30.0, 1.0, 36.0, 7.0);
  const int a = b.portal_x(10.0, 1.3 + skew, 2.7 + skew);
  b.portal_x(10.0, 5.3 - skew, 6.7 - skew);
  const int a2 = b.portal_x(16.0, 1.3, 2.7);
  b.portal_x(16.0, 5.3, 6.7);
  const int exit = b.portal_x(24.0, 3.3, 4.7);
  const int end = b.portal_x(30.0, 3.3, 4.7);
  b.spawn(1.0, 4.0, 0.0);
  b.route({a, a2, exit, end});
  b.milestone(12.5, 2.0, 0.0);
  b.milestone(26.5, 4.0, 0.0);
  return b.finish();
}

World dark_right_door(std::uint64_t seed) {
  Builder b("dark_right_door", seed);
  const double jitter = b.rng().uniform(-0.3, 0.3);
  b.room(0.0, 0.0, 8.0, 3.0);                // entry corridor
  b.room(8.0, 0.0, 16.0, 6.0);               // hall with the dark door on its right
  b.room(12.5, 6.0, 15.5, 15.0);             // corridor heading +y
  b.room(12.5, 15.0, 18.5, 23.0);            // mirror image of the first hall
  b.room(18.5, 19.5, 28.5, 22.5);            // exit through the bright door on the left
  b.room(28.5, 18.0, 34.5, 24.0);
  // The bright opening opposite the dark door loops back into the entry corridor.
  b.room(12.5, -6.0, 15.5, 0.0);
  b.room(2.5, -9.0, 15.5, -6.0);
  b.room(2.5, -6.0, 5.5, 0.0);
  b.portal_y(0.0, 13.3 + jitter, 14.7 + jitter);
  b.portal_y(-6.0, 12.8, 15.2);
  b.portal_y(-6.0, 2.8, 5.2);
  b.portal_y(0.0, 3.3, 4.7);
  b.room(8.5, 19.5, 12.5, 22.5);             // closet opposite the bright door
  b.portal_x(12.5, 20.3 + jitter, 21.7 + jitter);
  const int p0 = b.portal_x(8.0, 0.8, 2.2);
  const int dark = b.portal_y(6.0, 13.3 + jitter, 14.7 + jitter, kTagDark);
  const int p2 = b.portal_y(15.0, 13.3, 14.7);
  const int bright = b.portal_x(18.5, 20.3 + jitter, 21.7 + jitter);
  b.spawn(1.5, 1.5, 0.0);
  const int end = b.portal_x(28.5, 20.3, 21.7);
  b.route({p0, dark, p2, bright, end});
  b.milestone(14.0, 10.0, 90.0);
  b.milestone(23.0, 21.0, 0.0);
  return b.finish();
}

World decoy_salience(std::uint64_t seed) {
  Builder b("decoy_salience", seed);
  const double jitter = b.rng().uniform(-0.4, 0.4);
  b.room(0.0, 0.0, 8.0, 3.0);
  b.room(8.0, 0.0, 18.0, 8.0);
  b.room(18.0, 5.0, 26.0, 8.0);
  b.room(26.0, 3.5, 32.0, 9.5);
  const int p0 = b.portal_x(8.0, 0.8, 2.2);
  const int exit = b.portal_x(18.0, 5.6 + jitter * 0.5, 7.0 + jitter * 0.5);
  b.decoy({17.98, 1.0 + jitter}, {17.98, 2.6 + jitter}, 1.6);
  b.spawn(1.5, 1.5, 0.0);
  const int end = b.portal_x(26.0, 5.8, 7.2);
  b.route({p0, exit, end});
  b.milestone(21.0, 6.5, 0.0);
  return b.finish();
}

World narrow_oblique_stairs(std::uint64_t seed) {
  Builder b("narrow_oblique_stairs", seed);
  const double off = b.rng().uniform(-0.3, 0.3);
  b.room(0.0, 0.0, 10.0, 6.0);
  b.room(10.0, 4.4 + off, 16.0, 5.4 + off);  // narrow offset passage
  b.room(16.0, 2.0, 24.0, 8.0);
  b.room(24.0, 3.5, 30.0, 6.5);
  b.room(30.0, 2.0, 36.0, 8.0);
  const int n0 = b.portal_x(10.0, 4.4 + off, 5.4 + off, kTagNarrow);
  const int n1 = b.portal_x(16.0, 4.4 + off, 5.4 + off, kTagNarrow);
  const int exit = b.portal_x(24.0, 4.3, 5.7);
  b.spawn(1.0, 1.5, 0.0);
  const int end = b.portal_x(30.0, 4.3, 5.7);
  b.route({n0, n1, exit, end});
  b.milestone(18.5, 4.9 + off, 0.0);
  b.milestone(26.5, 5.0, 0.0);
  return b.finish();
}

World occluded_gap(std::uint64_t seed) {
  Builder b("occluded_gap", seed);
  const double jitter = b.rng().uniform(-0.2, 0.2);
  b.room(0.0, 0.0, 10.0, 6.0);
  b.room(10.0, 1.5, 18.0, 4.5);
  b.room(18.0, 1.5, 24.0, 4.5);
  b.room(24.0, 0.0, 30.0, 6.0);
  const int gap = b.portal_x(10.0, 2.4, 3.6);
  const int exit = b.portal_x(18.0, 2.4, 3.6);
  b.box(7.5, 2.0 + jitter, 8.1, 3.0 + jitter);
  b.cylinder(14.5, 2.1, 0.35);
  b.spawn(1.0, 3.0, 0.0);
  const int end = b.portal_x(24.0, 2.4, 3.6);
  b.route({gap, exit, end});
  b.milestone(12.5, 3.0, 0.0);
  b.milestone(20.5, 3.0, 0.0);
  return b.finish();
}

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {
      "straight_corridor", "l_turn",          "t_junction_deadend",    "symmetric_fork",
      "dark_right_door",   "decoy_salience",  "narrow_oblique_stairs", "occluded_gap"};
  return names;
}

World generate_world(const std::string& scenario, std::uint64_t seed) {
  if (scenario == "straight_corridor") return straight_corridor(seed);
  if (scenario == "l_turn") return l_turn(seed);
  if (scenario == "t_junction_deadend") return t_junction_deadend(seed);
  if (scenario == "symmetric_fork") return symmetric_fork(seed);
  if (scenario == "dark_right_door") return dark_right_door(seed);
  if (scenario == "decoy_salience") return decoy_salience(seed);
  if (scenario == "narrow_oblique_stairs") return narrow_oblique_stairs(seed);
  if (scenario == "occluded_gap") return occluded_gap(seed);
  throw std::invalid_argument("unknown scenario: " + scenario);
}

}  // namespace stpnav
