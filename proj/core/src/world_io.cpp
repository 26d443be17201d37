#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "stpnav/sim.hpp"

namespace stpnav {

namespace {

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string tags_text(std::uint32_t tags) {
  std::string s;
  auto add = [&](std::uint32_t bit, const char* name) {
    if (!(tags & bit)) return;
    if (!s.empty()) s += ',';
    s += name;
  };
  add(kTagDark, "dark");
  add(kTagNarrow, "narrow");
  add(kTagDecoyAdjacent, "decoy_adjacent");
  return s.empty() ? "-" : s;
}

std::string pose_text(const AvatarPose& p) {
  return num(p.x) + " " + num(p.y) + " " + num(p.yaw) + " " + num(p.pitch);
}

class LineReader {
 public:
  LineReader(std::vector<std::string> tokens, int line) : tok_(std::move(tokens)), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("world file line " + std::to_string(line_) + ": " + what);
  }

  std::size_t size() const { return tok_.size(); }
  const std::string& word(std::size_t i) const {
    if (i >= tok_.size()) fail("missing field " + std::to_string(i));
    return tok_[i];
  }

  double real(std::size_t i) const {
    const std::string& s = word(i);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("bad number '" + s + "'");
    return v;
  }

  long long integer(std::size_t i) const {
    const std::string& s = word(i);
    long long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("bad integer '" + s + "'");
    return v;
  }

  void expect(std::size_t n) const {
    if (tok_.size() != n)
      fail("'" + tok_[0] + "' takes " + std::to_string(n - 1) + " fields, got " +
           std::to_string(tok_.size() - 1));
  }

  AvatarPose pose(std::size_t i) const {
    AvatarPose p;
    p.x = real(i);
    p.y = real(i + 1);
    p.yaw = real(i + 2);
    p.pitch = real(i + 3);
    return p;
  }

  std::uint32_t tags(std::size_t i) const {
    const std::string& s = word(i);
    if (s == "-") return kTagNone;
    std::uint32_t out = 0;
    std::stringstream ss(s);
    std::string t;
    while (std::getline(ss, t, ',')) {
      if (t == "dark") out |= kTagDark;
      else if (t == "narrow") out |= kTagNarrow;
      else if (t == "decoy_adjacent") out |= kTagDecoyAdjacent;
      else fail("unknown portal tag '" + t + "'");
    }
    return out;
  }

 private:
  std::vector<std::string> tok_;
  int line_;
};

}  // namespace

std::string world_to_text(const World& w) {
  std::ostringstream o;
  o << "stpnav-world 1\n";
  o << "scenario " << w.scenario << "\n";
  o << "seed " << w.seed << "\n";
  o << "wall_height " << num(w.wall_height) << "\n";
  o << "eye_height " << num(w.eye_height) << "\n";
  o << "floor_shade " << num(w.floor_shade) << "\n";
  o << "ceiling_shade " << num(w.ceiling_shade) << "\n";
  o << "spawn " << pose_text(w.spawn) << "\n";

  o << "\n[textures]\n";
  for (std::size_t i = 0; i < w.textures.size(); ++i) {
    const auto& t = w.textures[i];
    o << "texture " << i << " " << num(t.base) << " " << num(t.amp) << " " << num(t.period) << " "
      << num(t.phase) << " " << num(t.vamp) << " " << num(t.vperiod) << "\n";
  }
  o << "\n[rooms]\n";
  for (const auto& r : w.rooms)
    o << "room " << r.id << " " << num(r.x1) << " " << num(r.y1) << " " << num(r.x2) << " "
      << num(r.y2) << " " << r.texture << "\n";
  o << "\n[portals]\n";
  for (const auto& p : w.portals)
    o << "portal " << p.id << " " << num(p.a.x) << " " << num(p.a.y) << " " << num(p.b.x) << " "
      << num(p.b.y) << " " << tags_text(p.tags) << " " << num(p.salience) << "\n";
  o << "\n[props]\n";
  for (const auto& p : w.props) {
    if (p.shape == PropShape::kBox)
      o << "box " << p.id << " " << num(p.x1) << " " << num(p.y1) << " " << num(p.x2) << " "
        << num(p.y2) << " " << p.texture << "\n";
    else
      o << "cylinder " << p.id << " " << num(p.cx) << " " << num(p.cy) << " " << num(p.r) << " "
        << p.texture << "\n";
  }
  o << "\n[decoys]\n";
  for (const auto& d : w.decoys)
    o << "decoy " << d.id << " " << num(d.a.x) << " " << num(d.a.y) << " " << num(d.b.x) << " "
      << num(d.b.y) << " " << num(d.z0) << " " << num(d.z1) << " " << num(d.brightness) << " "
      << num(d.salience) << "\n";
  o << "\n[route]\nroute";
  for (int id : w.route) o << " " << id;
  o << "\n\n[milestones]\n";
  for (const auto& m : w.milestones)
    o << "milestone " << m.id << " " << pose_text(m.pose) << " save " << pose_text(m.save) << "\n";
  return o.str();
}

World world_from_text(const std::string& text) {
  World w;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  bool header = false;
  std::map<std::string, bool> seen;

  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    LineReader r(tok, line);

    if (!header) {
      if (tok.size() != 2 || tok[0] != "stpnav-world" || tok[1] != "1")
        r.fail("expected header 'stpnav-world 1'");
      header = true;
      continue;
    }
    if (tok[0].front() == '[') {
      if (tok.size() != 1 || tok[0].back() != ']') r.fail("malformed section header");
      section = tok[0].substr(1, tok[0].size() - 2);
      static const char* known[] = {"textures", "rooms", "portals", "props", "decoys", "route", "milestones"};
      bool ok = false;
      for (const char* k : known) ok |= section == k;
      if (!ok) r.fail("unknown section [" + section + "]");
      if (seen[section]) r.fail("duplicate section [" + section + "]");
      seen[section] = true;
      continue;
    }

    const std::string& key = tok[0];
    if (section.empty()) {
      if (key == "scenario") { r.expect(2); w.scenario = tok[1]; }
      else if (key == "seed") { r.expect(2); w.seed = static_cast<std::uint64_t>(r.integer(1)); }
      else if (key == "wall_height") { r.expect(2); w.wall_height = r.real(1); }
      else if (key == "eye_height") { r.expect(2); w.eye_height = r.real(1); }
      else if (key == "floor_shade") { r.expect(2); w.floor_shade = r.real(1); }
      else if (key == "ceiling_shade") { r.expect(2); w.ceiling_shade = r.real(1); }
      else if (key == "spawn") { r.expect(5); w.spawn = r.pose(1); }
      else r.fail("unknown header key '" + key + "'");
    } else if (section == "textures" && key == "texture") {
      r.expect(8);
      if (r.integer(1) != static_cast<long long>(w.textures.size())) r.fail("texture ids must be 0,1,2,... in order");
      w.textures.push_back({r.real(2), r.real(3), r.real(4), r.real(5), r.real(6), r.real(7)});
    } else if (section == "rooms" && key == "room") {
      r.expect(7);
      w.rooms.push_back({static_cast<int>(r.integer(1)), r.real(2), r.real(3), r.real(4), r.real(5),
                         static_cast<int>(r.integer(6))});
    } else if (section == "portals" && key == "portal") {
      r.expect(8);
      w.portals.push_back({static_cast<int>(r.integer(1)), {r.real(2), r.real(3)}, {r.real(4), r.real(5)},
                           r.tags(6), r.real(7)});
    } else if (section == "props" && (key == "box" || key == "cylinder")) {
      Prop p;
      p.id = static_cast<int>(r.integer(1));
      if (key == "box") {
        r.expect(7);
        p.shape = PropShape::kBox;
        p.x1 = r.real(2);
        p.y1 = r.real(3);
        p.x2 = r.real(4);
        p.y2 = r.real(5);
        p.texture = static_cast<int>(r.integer(6));
      } else {
        r.expect(6);
        p.shape = PropShape::kCylinder;
        p.cx = r.real(2);
        p.cy = r.real(3);
        p.r = r.real(4);
        p.texture = static_cast<int>(r.integer(5));
      }
      w.props.push_back(p);
    } else if (section == "decoys" && key == "decoy") {
      r.expect(10);
      w.decoys.push_back({static_cast<int>(r.integer(1)), {r.real(2), r.real(3)}, {r.real(4), r.real(5)},
                          r.real(6), r.real(7), r.real(8), r.real(9)});
    } else if (section == "route" && key == "route") {
      for (std::size_t i = 1; i < tok.size(); ++i) w.route.push_back(static_cast<int>(r.integer(i)));
    } else if (section == "milestones" && key == "milestone") {
      r.expect(11);
      if (tok[6] != "save") r.fail("expected 'save' before the save pose");
      MilestoneSpec m;
      m.id = static_cast<int>(r.integer(1));
      m.pose = r.pose(2);
      m.save = r.pose(7);
      w.milestones.push_back(m);
    } else {
      r.fail("unexpected '" + key + "' in " + (section.empty() ? "header" : "[" + section + "]"));
    }
  }
  if (!header) throw std::invalid_argument("world file: empty");
  if (w.milestones.empty()) throw std::invalid_argument("world file: no milestones");
  w.finalize();
  return w;
}

void save_world(const World& world, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write world file: " + path);
  out << world_to_text(world);
  if (!out) throw std::runtime_error("error writing world file: " + path);
}

World load_world(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read world file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return world_from_text(ss.str());
}

}  // namespace stpnav
