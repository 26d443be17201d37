#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stpnav/controller.hpp"
#include "stpnav/frame.hpp"
#include "stpnav/perception.hpp"

namespace stpnav {

/// Projection ids of decoys are offset so they never collide with portal ids.
inline constexpr int kDecoyIdBase = 10000;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double dot(Vec2 a, Vec2 b);
double cross(Vec2 a, Vec2 b);
double length(Vec2 a);

/// Procedural wall shading: base + amp*sin(2pi*u/period + phase) + vamp*sin(2pi*z/vperiod + phase).
struct Texture {
  double base = 128.0;
  double amp = 40.0;
  double period = 1.5;
  double phase = 0.0;
  double vamp = 0.0;
  double vperiod = 1.0;

  double value(double u, double z) const;
  friend bool operator==(const Texture&, const Texture&) = default;
};

struct Room {
  int id = 0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  int texture = 0;

  bool contains(Vec2 p) const { return p.x >= x1 && p.x <= x2 && p.y >= y1 && p.y <= y2; }
  friend bool operator==(const Room&, const Room&) = default;
};

/// Full-height opening cut into the room walls it lies on.
struct Portal {
  int id = 0;
  Vec2 a, b;
  std::uint32_t tags = kTagNone;
  double salience = 1.0;

  friend bool operator==(const Portal&, const Portal&) = default;
};

enum class PropShape { kBox, kCylinder };

/// Solid obstacle. Boxes use (x1,y1,x2,y2); cylinders use (cx,cy,r).
struct Prop {
  int id = 0;
  PropShape shape = PropShape::kBox;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double cx = 0, cy = 0, r = 0;
  int texture = 0;

  friend bool operator==(const Prop&, const Prop&) = default;
};

/// Bright wall patch between heights z0 and z1. Visual only.
struct Decoy {
  int id = 0;
  Vec2 a, b;
  double z0 = 0.5, z1 = 2.5;
  double brightness = 235.0;
  double salience = 1.5;

  friend bool operator==(const Decoy&, const Decoy&) = default;
};

struct AvatarPose {
  double x = 0.0;
  double y = 0.0;
  /// Degrees in [0,360); increasing yaw turns right.
  double yaw = 0.0;
  /// Degrees in [-45,45]; positive looks up.
  double pitch = 0.0;
  bool forward_held = false;

  Vec2 pos() const { return {x, y}; }
  friend bool operator==(const AvatarPose&, const AvatarPose&) = default;
};

struct MilestoneSpec {
  int id = 0;
  /// Pose at which the templates are captured.
  AvatarPose pose;
  /// Pose restored when the previous segment times out.
  AvatarPose save;

  friend bool operator==(const MilestoneSpec&, const MilestoneSpec&) = default;
};

struct WallSegment {
  Vec2 a, b;
  int texture = 0;
  /// Texture coordinate at `a`, so split walls keep a continuous pattern.
  double u0 = 0.0;
  /// Edge index 0..3 for room walls; -1 for prop faces.
  int edge = -1;
};

struct World {
  std::string scenario;
  std::uint64_t seed = 0;
  double wall_height = 3.0;
  double eye_height = 1.5;
  double floor_shade = 92.0;
  double ceiling_shade = 52.0;
  AvatarPose spawn;
  std::vector<Texture> textures;
  std::vector<Room> rooms;
  std::vector<Portal> portals;
  std::vector<Prop> props;
  std::vector<Decoy> decoys;
  /// Ordered portal ids along the intended path.
  std::vector<int> route;
  std::vector<MilestoneSpec> milestones;

  /// Derived: room edges minus portal spans, plus box-prop faces.
  std::vector<WallSegment> walls;

  /// Rebuilds `walls` and checks references. Throws std::invalid_argument.
  void finalize();

  const Portal* portal(int id) const;
  /// Rooms reachable through exactly one portal and not on the route.
  std::vector<int> dead_end_portals() const;
  /// Index of the room containing p, or -1.
  int room_at(Vec2 p) const;

  bool same_content(const World& o) const;
};

struct SimParams {
  double yaw_per_tap = 5.0;
  double pitch_per_tap = 3.0;
  double speed = 0.12;
  double avatar_radius = 0.3;
  double fov_deg = 90.0;
  int width = 320;
  int height = 180;
  int ticks_per_decision = 3;

  void validate() const;
  double focal() const;
};

double wrap_yaw(double deg);

/// True iff p lies inside some room and at least `radius` from every wall and prop.
bool is_walkable(const World& world, Vec2 p, double radius);

/// Minimum distance from p to any wall face or prop surface.
double clearance(const World& world, Vec2 p);

/// One tick of forward motion with slide-along-wall collision.
Vec2 move_with_collision(const World& world, Vec2 from, Vec2 delta, double radius);

/// Applies camera taps and the forward toggle, then advances `ticks` ticks
/// (ticks_per_decision when negative).
AvatarPose apply_action(const World& world, const AvatarPose& pose, const Action& action,
                        const SimParams& params, int ticks = -1);

Frame render(const World& world, const AvatarPose& pose, const SimParams& params,
             std::int64_t t = 0);

/// Ground-truth projections of portals and decoys for the simulated detector.
std::vector<PortalProjection> visible_portals(const World& world, const AvatarPose& pose,
                                              const SimParams& params);

/// Exact pose with forward released. Throws std::invalid_argument when the
/// pose is not walkable.
AvatarPose teleport(const World& world, const AvatarPose& spec, const SimParams& params);

const std::vector<std::string>& scenario_names();
World generate_world(const std::string& scenario, std::uint64_t seed);

/// Plain-text world files; see docs/world_format.md.
std::string world_to_text(const World& world);
World world_from_text(const std::string& text);
void save_world(const World& world, const std::string& path);
World load_world(const std::string& path);

}  // namespace stpnav
