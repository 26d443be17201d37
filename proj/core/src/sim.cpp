#include "stpnav/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace stpnav {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNear = 0.05;
constexpr double kDarkFactor = 0.35;
constexpr double kFalloff = 0.15;
constexpr int kSightlines = 100;

struct Hit {
  double t = kInf;
  double u = 0.0;
  int texture = 0;
  int edge = -1;
};

// Ray o + t*d against segment [a,b]; returns t and the segment parameter.
bool ray_segment(Vec2 o, Vec2 d, Vec2 a, Vec2 b, double& t, double& s) {
  const Vec2 e = b - a;
  const double denom = cross(d, e);
  if (std::abs(denom) < 1e-12) return false;
  const Vec2 ao = a - o;
  t = cross(ao, e) / denom;
  s = cross(ao, d) / denom;
  return t > 1e-9 && s >= 0.0 && s <= 1.0;
}

bool ray_circle(Vec2 o, Vec2 d, Vec2 c, double r, double& t) {
  const Vec2 oc = o - c;
  const double b = dot(d, oc);
  const double cc = dot(oc, oc) - r * r;
  const double disc = b * b - cc;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  t = -b - sq;
  if (t <= 1e-9) t = -b + sq;
  return t > 1e-9;
}

Hit cast(const World& w, Vec2 o, Vec2 d) {
  Hit best;
  for (const auto& seg : w.walls) {
    double t, s;
    if (ray_segment(o, d, seg.a, seg.b, t, s) && t < best.t) {
      best.t = t;
      best.u = seg.u0 + s * length(seg.b - seg.a);
      best.texture = seg.texture;
      best.edge = seg.edge;
    }
  }
  for (const auto& p : w.props) {
    if (p.shape != PropShape::kCylinder) continue;
    double t;
    if (ray_circle(o, d, {p.cx, p.cy}, p.r, t) && t < best.t) {
      const Vec2 h = o + d * t;
      best.t = t;
      best.u = (std::atan2(h.y - p.cy, h.x - p.cx) + kPi) * p.r;
      best.texture = p.texture;
      best.edge = -1;
    }
  }
  return best;
}

// True when something solid lies strictly between o and o + d*dist.
bool blocked(const World& w, Vec2 o, Vec2 d, double dist) {
  for (const auto& seg : w.walls) {
    double t, s;
    if (ray_segment(o, d, seg.a, seg.b, t, s) && t < dist - 1e-6) return true;
  }
  for (const auto& p : w.props) {
    if (p.shape != PropShape::kCylinder) continue;
    double t;
    if (ray_circle(o, d, {p.cx, p.cy}, p.r, t) && t < dist - 1e-6) return true;
  }
  return false;
}

Vec2 closest_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 e = b - a;
  const double len2 = dot(e, e);
  if (len2 <= 0.0) return a;
  const double s = std::clamp(dot(p - a, e) / len2, 0.0, 1.0);
  return a + e * s;
}

Texture surface_texture(const World& w, int texture, int edge) {
  Texture tex = w.textures.at(static_cast<std::size_t>(texture));
  if (edge >= 0) {
    tex.phase += 1.9 * edge;
    tex.period *= 1.0 + 0.25 * (edge % 2);
  }
  return tex;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

struct Camera {
  Vec2 eye;
  Vec2 fwd;
  Vec2 right;
  double f;
  double horizon;
  double half_fov;
};

Camera camera(const World& w, const AvatarPose& pose, const SimParams& p) {
  const double yaw = wrap_yaw(pose.yaw) * kDeg;
  Camera c;
  c.eye = pose.pos();
  c.fwd = {std::cos(yaw), std::sin(yaw)};
  c.right = {-std::sin(yaw), std::cos(yaw)};
  c.f = p.focal();
  c.horizon = p.height / 2.0 + c.f * std::tan(pose.pitch * kDeg);
  c.half_fov = p.fov_deg * kDeg / 2.0;
  (void)w;
  return c;
}

// Projects a world-space span [a,b] between heights z0 and z1; false if it
// is entirely behind the near plane or off screen.
bool project_span(const World& w, const Camera& cam, const SimParams& p, Vec2 a, Vec2 b, double z0,
                  double z1, BBox& out) {
  double za = dot(a - cam.eye, cam.fwd);
  double zb = dot(b - cam.eye, cam.fwd);
  if (za < kNear && zb < kNear) return false;
  if (za < kNear || zb < kNear) {
    const double s = (kNear - za) / (zb - za);
    const Vec2 m = a + (b - a) * s;
    if (za < kNear) a = m; else b = m;
    za = dot(a - cam.eye, cam.fwd);
    zb = dot(b - cam.eye, cam.fwd);
  }
  double x1 = kInf, x2 = -kInf, y1 = kInf, y2 = -kInf;
  for (auto [pt, z] : {std::pair{a, za}, std::pair{b, zb}}) {
    z = std::max(z, kNear);
    const double xc = dot(pt - cam.eye, cam.right);
    const double sx = p.width / 2.0 + cam.f * xc / z;
    const double top = cam.horizon - cam.f * (z1 - w.eye_height) / z;
    const double bot = cam.horizon - cam.f * (z0 - w.eye_height) / z;
    x1 = std::min(x1, sx);
    x2 = std::max(x2, sx);
    y1 = std::min(y1, top);
    y2 = std::max(y2, bot);
  }
  out = {std::clamp(x1, 0.0, double(p.width)), std::clamp(y1, 0.0, double(p.height)),
         std::clamp(x2, 0.0, double(p.width)), std::clamp(y2, 0.0, double(p.height))};
  return out.width() >= 1.0 && out.height() >= 1.0;
}

bool point_walkable(const World& w, Vec2 q) {
  if (w.room_at(q) < 0) return false;
  for (const auto& p : w.props) {
    if (p.shape == PropShape::kBox) {
      if (q.x > p.x1 && q.x < p.x2 && q.y > p.y1 && q.y < p.y2) return false;
    } else if (length(q - Vec2{p.cx, p.cy}) < p.r) {
      return false;
    }
  }
  return true;
}

double free_space_beyond(const World& w, Vec2 eye, Vec2 a, Vec2 b) {
  const Vec2 mid = (a + b) * 0.5;
  Vec2 dir = mid - eye;
  const double len = length(dir);
  if (len < 1e-9) return 0.0;
  dir = dir * (1.0 / len);
  const Vec2 perp{-dir.y, dir.x};
  int walkable = 0, total = 0;
  for (int i = 1; i <= 6; ++i)
    for (double lat : {-0.3, 0.0, 0.3}) {
      const Vec2 q = mid + dir * (0.25 * i) + perp * lat;
      walkable += point_walkable(w, q) ? 1 : 0;
      ++total;
    }
  return static_cast<double>(walkable) / total;
}

}  // namespace

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double length(Vec2 a) { return std::hypot(a.x, a.y); }

double Texture::value(double u, double z) const {
  return base + amp * std::sin(2.0 * kPi * u / period + phase) +
         vamp * std::sin(2.0 * kPi * z / vperiod + phase);
}

void World::finalize() {
  if (!(wall_height > eye_height && eye_height > 0.0))
    throw std::invalid_argument("world: need 0 < eye_height < wall_height");
  if (textures.empty()) throw std::invalid_argument("world: no textures");
  auto check_tex = [&](int t) {
    if (t < 0 || t >= static_cast<int>(textures.size()))
      throw std::invalid_argument("world: texture index out of range");
  };
  for (const auto& t : textures)
    if (!(t.period > 0.0) || !(t.vperiod > 0.0))
      throw std::invalid_argument("world: texture periods must be positive");
  if (rooms.empty()) throw std::invalid_argument("world: no rooms");
  for (const auto& r : rooms) {
    if (!(r.x1 < r.x2 && r.y1 < r.y2)) throw std::invalid_argument("world: degenerate room");
    check_tex(r.texture);
  }
  for (const auto& p : props) {
    check_tex(p.texture);
    if (p.shape == PropShape::kBox ? !(p.x1 < p.x2 && p.y1 < p.y2) : !(p.r > 0.0))
      throw std::invalid_argument("world: degenerate prop");
  }
  for (const auto& p : portals)
    if (!(p.a.x == p.b.x || p.a.y == p.b.y) || p.a == p.b)
      throw std::invalid_argument("world: portals must be axis-aligned spans");
  for (int id : route)
    if (portal(id) == nullptr) throw std::invalid_argument("world: route names unknown portal");

  walls.clear();
  for (const auto& r : rooms) {
    const Vec2 c[4] = {{r.x1, r.y1}, {r.x2, r.y1}, {r.x2, r.y2}, {r.x1, r.y2}};
    for (int e = 0; e < 4; ++e) {
      const Vec2 a = c[e];
      const Vec2 b = c[(e + 1) % 4];
      const double len = length(b - a);
      const Vec2 dir = (b - a) * (1.0 / len);
      // Portal spans on this edge as intervals of the edge parameter.
      std::vector<std::pair<double, double>> cuts;
      for (const auto& p : portals) {
        const bool horizontal = a.y == b.y;
        if (horizontal ? !(p.a.y == a.y && p.b.y == a.y) : !(p.a.x == a.x && p.b.x == a.x)) continue;
        double s0 = dot(p.a - a, dir), s1 = dot(p.b - a, dir);
        if (s0 > s1) std::swap(s0, s1);
        s0 = std::max(s0, 0.0);
        s1 = std::min(s1, len);
        if (s1 > s0) cuts.emplace_back(s0, s1);
      }
      std::sort(cuts.begin(), cuts.end());
      double s = 0.0;
      auto emit = [&](double from, double to) {
        if (to - from > 1e-9) walls.push_back({a + dir * from, a + dir * to, r.texture, from, e});
      };
      for (const auto& [c0, c1] : cuts) {
        emit(s, c0);
        s = std::max(s, c1);
      }
      emit(s, len);
    }
  }
  for (const auto& p : props) {
    if (p.shape != PropShape::kBox) continue;
    const Vec2 c[4] = {{p.x1, p.y1}, {p.x2, p.y1}, {p.x2, p.y2}, {p.x1, p.y2}};
    double u = 0.0;
    for (int e = 0; e < 4; ++e) {
      walls.push_back({c[e], c[(e + 1) % 4], p.texture, u, -1});
      u += length(c[(e + 1) % 4] - c[e]);
    }
  }
}

const Portal* World::portal(int id) const {
  for (const auto& p : portals)
    if (p.id == id) return &p;
  return nullptr;
}

int World::room_at(Vec2 p) const {
  for (std::size_t i = 0; i < rooms.size(); ++i)
    if (rooms[i].contains(p)) return static_cast<int>(i);
  return -1;
}

std::vector<int> World::dead_end_portals() const {
  std::vector<int> out;
  for (const auto& r : rooms) {
    std::vector<int> touching;
    for (const auto& p : portals) {
      const Vec2 m = (p.a + p.b) * 0.5;
      if (r.contains(m)) touching.push_back(p.id);
    }
    if (touching.size() != 1) continue;
    const int pid = touching.front();
    if (std::find(route.begin(), route.end(), pid) != route.end()) continue;
    // The spawn room and the final room are not dead ends.
    if (r.contains(spawn.pos())) continue;
    bool holds_milestone = false;
    for (const auto& m : milestones) holds_milestone |= r.contains(m.pose.pos());
    if (!holds_milestone) out.push_back(pid);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool World::same_content(const World& o) const {
  return scenario == o.scenario && seed == o.seed && wall_height == o.wall_height &&
         eye_height == o.eye_height && floor_shade == o.floor_shade &&
         ceiling_shade == o.ceiling_shade && spawn == o.spawn && textures == o.textures &&
         rooms == o.rooms && portals == o.portals && props == o.props && decoys == o.decoys &&
         route == o.route && milestones == o.milestones;
}

void SimParams::validate() const {
  if (!(yaw_per_tap > 0 && pitch_per_tap > 0 && speed > 0 && avatar_radius > 0))
    throw std::invalid_argument("SimParams: steps, speed and radius must be positive");
  if (!(fov_deg > 0 && fov_deg < 180)) throw std::invalid_argument("SimParams: fov must be in (0,180)");
  if (width < 8 || height < 8) throw std::invalid_argument("SimParams: render size too small");
  if (ticks_per_decision < 1) throw std::invalid_argument("SimParams: ticks_per_decision must be >= 1");
}

double SimParams::focal() const { return (width / 2.0) / std::tan(fov_deg * kDeg / 2.0); }

double wrap_yaw(double deg) {
  double y = std::fmod(deg, 360.0);
  if (y < 0.0) y += 360.0;
  if (y >= 360.0) y = 0.0;
  return y;
}

double clearance(const World& world, Vec2 p) {
  double best = kInf;
  for (const auto& seg : world.walls) best = std::min(best, length(p - closest_on_segment(p, seg.a, seg.b)));
  for (const auto& pr : world.props)
    if (pr.shape == PropShape::kCylinder)
      best = std::min(best, length(p - Vec2{pr.cx, pr.cy}) - pr.r);
  return best;
}

bool is_walkable(const World& world, Vec2 p, double radius) {
  return point_walkable(world, p) && clearance(world, p) >= radius - 1e-9;
}

Vec2 move_with_collision(const World& world, Vec2 from, Vec2 delta, double radius) {
  Vec2 q = from + delta;
  for (int iter = 0; iter < 8; ++iter) {
    bool pushed = false;
    for (const auto& seg : world.walls) {
      const Vec2 c = closest_on_segment(q, seg.a, seg.b);
      const Vec2 off = q - c;
      const double d = length(off);
      if (d >= radius) continue;
      Vec2 n;
      if (d > 1e-12) {
        n = off * (1.0 / d);
      } else {
        const Vec2 e = seg.b - seg.a;
        n = Vec2{-e.y, e.x} * (1.0 / length(e));
        if (dot(n, from - c) < 0.0) n = n * -1.0;
      }
      q = c + n * radius;
      pushed = true;
    }
    for (const auto& p : world.props) {
      if (p.shape != PropShape::kCylinder) continue;
      const Vec2 c{p.cx, p.cy};
      const Vec2 off = q - c;
      const double d = length(off);
      const double need = p.r + radius;
      if (d >= need) continue;
      const Vec2 n = d > 1e-12 ? off * (1.0 / d) : Vec2{1.0, 0.0};
      q = c + n * need;
      pushed = true;
    }
    if (!pushed) break;
  }
  if (clearance(world, q) < radius - 1e-9 || world.room_at(q) < 0) return from;
  return q;
}

AvatarPose apply_action(const World& world, const AvatarPose& pose, const Action& action,
                        const SimParams& params, int ticks) {
  AvatarPose out = pose;
  const double taps = action.cam == CamDir::kNone ? 0.0 : action.taps;
  switch (action.cam) {
    case CamDir::kLeft:
      out.yaw -= taps * params.yaw_per_tap;
      break;
    case CamDir::kRight:
      out.yaw += taps * params.yaw_per_tap;
      break;
    case CamDir::kUp:
      out.pitch = std::min(45.0, out.pitch + taps * params.pitch_per_tap);
      break;
    case CamDir::kDown:
      out.pitch = std::max(-45.0, out.pitch - taps * params.pitch_per_tap);
      break;
    case CamDir::kNone:
      break;
  }
  out.yaw = wrap_yaw(out.yaw);
  if (action.forward == ForwardDelta::kPress) out.forward_held = true;
  if (action.forward == ForwardDelta::kRelease) out.forward_held = false;

  const int n = ticks < 0 ? params.ticks_per_decision : ticks;
  if (out.forward_held) {
    const Vec2 step{params.speed * std::cos(out.yaw * kDeg), params.speed * std::sin(out.yaw * kDeg)};
    Vec2 p = out.pos();
    for (int i = 0; i < n; ++i) p = move_with_collision(world, p, step, params.avatar_radius);
    out.x = p.x;
    out.y = p.y;
  }
  return out;
}

Frame render(const World& world, const AvatarPose& pose, const SimParams& params, std::int64_t t) {
  const Camera cam = camera(world, pose, params);
  Frame frame(params.width, params.height, 0, t);
  const int h = params.height;

  std::vector<double> shade(static_cast<std::size_t>(h));
  for (int x = 0; x < params.width; ++x) {
    const double ang = std::atan((x + 0.5 - params.width / 2.0) / cam.f);
    const double yaw = wrap_yaw(pose.yaw) * kDeg + ang;
    const Vec2 d{std::cos(yaw), std::sin(yaw)};
    const double cosd = std::cos(ang);
    const Hit hit = cast(world, cam.eye, d);

    // Column shading before lighting modifiers.
    const double depth = hit.t * cosd;
    const Texture tex = std::isfinite(hit.t) ? surface_texture(world, hit.texture, hit.edge) : Texture{};
    const double falloff = 1.0 / (1.0 + kFalloff * hit.t);
    for (int y = 0; y < h; ++y) {
      const double z = world.eye_height - (y + 0.5 - cam.horizon) * depth / cam.f;
      if (!std::isfinite(hit.t) || z < 0.0)
        shade[static_cast<std::size_t>(y)] = world.floor_shade;
      else if (z > world.wall_height)
        shade[static_cast<std::size_t>(y)] = world.ceiling_shade;
      else
        shade[static_cast<std::size_t>(y)] = tex.value(hit.u, z) * falloff;
    }

    for (const auto& dc : world.decoys) {
      double td, s;
      if (!ray_segment(cam.eye, d, dc.a, dc.b, td, s) || td > hit.t + 0.05) continue;
      const double dd = td * cosd;
      for (int y = 0; y < h; ++y) {
        const double z = world.eye_height - (y + 0.5 - cam.horizon) * dd / cam.f;
        if (z >= dc.z0 && z <= dc.z1) shade[static_cast<std::size_t>(y)] = dc.brightness;
      }
    }

    // Looking through a dark opening dims everything inside its outline.
    for (const auto& p : world.portals) {
      if (!(p.tags & kTagDark)) continue;
      double tp, s;
      if (!ray_segment(cam.eye, d, p.a, p.b, tp, s) || tp >= hit.t) continue;
      const double dp = tp * cosd;
      for (int y = 0; y < h; ++y) {
        const double z = world.eye_height - (y + 0.5 - cam.horizon) * dp / cam.f;
        if (z >= 0.0 && z <= world.wall_height) shade[static_cast<std::size_t>(y)] *= kDarkFactor;
      }
    }

    for (int y = 0; y < h; ++y) frame.at(x, y) = to_byte(shade[static_cast<std::size_t>(y)]);
  }
  return frame;
}

std::vector<PortalProjection> visible_portals(const World& world, const AvatarPose& pose,
                                              const SimParams& params) {
  const Camera cam = camera(world, pose, params);
  std::vector<PortalProjection> out;

  auto sample = [&](Vec2 a, Vec2 b, double& occlusion) {
    int in_fov = 0, hidden = 0;
    for (int k = 0; k < kSightlines; ++k) {
      const Vec2 q = a + (b - a) * ((k + 0.5) / kSightlines);
      const Vec2 rel = q - cam.eye;
      const double zc = dot(rel, cam.fwd);
      const double xc = dot(rel, cam.right);
      if (zc < kNear || std::abs(std::atan2(xc, zc)) > cam.half_fov) continue;
      ++in_fov;
      const double dist = length(rel);
      if (blocked(world, cam.eye, rel * (1.0 / dist), dist)) ++hidden;
    }
    if (in_fov == 0 || hidden == in_fov) return false;
    occlusion = static_cast<double>(hidden) / in_fov;
    return true;
  };

  for (const auto& p : world.portals) {
    PortalProjection pp;
    if (!sample(p.a, p.b, pp.occlusion)) continue;
    if (!project_span(world, cam, params, p.a, p.b, 0.0, world.wall_height, pp.box)) continue;
    pp.id = p.id;
    pp.tags = p.tags;
    pp.salience = p.salience;
    pp.free_space = free_space_beyond(world, cam.eye, p.a, p.b);
    out.push_back(pp);
  }
  for (const auto& dc : world.decoys) {
    PortalProjection pp;
    if (!sample(dc.a, dc.b, pp.occlusion)) continue;
    if (!project_span(world, cam, params, dc.a, dc.b, dc.z0, dc.z1, pp.box)) continue;
    pp.id = kDecoyIdBase + dc.id;
    pp.tags = kTagNone;
    pp.salience = dc.salience;
    pp.free_space = 0.0;
    pp.decoy = true;
    out.push_back(pp);
  }
  return out;
}

AvatarPose teleport(const World& world, const AvatarPose& spec, const SimParams& params) {
  if (!(spec.pitch >= -45.0 && spec.pitch <= 45.0))
    throw std::invalid_argument("teleport: pitch outside [-45,45]");
  if (!is_walkable(world, spec.pos(), params.avatar_radius))
    throw std::invalid_argument("teleport: pose is not walkable");
  AvatarPose out = spec;
  out.yaw = wrap_yaw(spec.yaw);
  out.forward_held = false;
  return out;
}

}  // namespace stpnav
