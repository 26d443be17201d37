#include "stpnav/frame.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stpnav {

Frame::Frame(int w, int h, std::uint8_t fill, std::int64_t index)
    : width(w), height(h), t(index) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("Frame: dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

Frame::Frame(int w, int h, std::vector<std::uint8_t> data, std::int64_t index)
    : width(w), height(h), pixels(std::move(data)), t(index) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("Frame: dimensions must be positive");
  if (pixels.size() != static_cast<std::size_t>(w) * h)
    throw std::invalid_argument("Frame: pixel buffer does not match dimensions");
}

double Frame::mean() const {
  if (pixels.empty()) return 0.0;
  double s = 0.0;
  for (auto p : pixels) s += p;
  return s / static_cast<double>(pixels.size());
}

double Frame::variance() const {
  if (pixels.empty()) return 0.0;
  const double m = mean();
  double s = 0.0;
  for (auto p : pixels) s += (p - m) * (p - m);
  return s / static_cast<double>(pixels.size());
}

Plane to_plane(const Frame& f, double scale) {
  Plane p(f.width, f.height);
  for (std::size_t i = 0; i < f.pixels.size(); ++i) p.v[i] = f.pixels[i] * scale;
  return p;
}

Plane resize_bilinear(const Plane& src, int dw, int dh) {
  if (dw <= 0 || dh <= 0 || src.width <= 0 || src.height <= 0)
    throw std::invalid_argument("resize_bilinear: empty image");
  Plane out(dw, dh);
  const double sx = static_cast<double>(src.width) / dw;
  const double sy = static_cast<double>(src.height) / dh;

  // Precompute horizontal taps once per column.
  std::vector<int> x0(dw), x1(dw);
  std::vector<double> wx(dw);
  for (int x = 0; x < dw; ++x) {
    double fx = (x + 0.5) * sx - 0.5;
    fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
    x0[x] = static_cast<int>(std::floor(fx));
    x1[x] = std::min(x0[x] + 1, src.width - 1);
    wx[x] = fx - x0[x];
  }
  for (int y = 0; y < dh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dw; ++x) {
      const double top = src.at(x0[x], y0) + (src.at(x1[x], y0) - src.at(x0[x], y0)) * wx[x];
      const double bot = src.at(x0[x], y1) + (src.at(x1[x], y1) - src.at(x0[x], y1)) * wx[x];
      out.at(x, y) = top + (bot - top) * wy;
    }
  }
  return out;
}

Plane resize_bilinear(const Frame& src, int dw, int dh) {
  return resize_bilinear(to_plane(src), dw, dh);
}

Plane downsample_box(const Plane& src, int factor) {
  if (factor <= 0) throw std::invalid_argument("downsample_box: factor must be positive");
  const int dw = src.width / factor;
  const int dh = src.height / factor;
  Plane out(std::max(dw, 0), std::max(dh, 0));
  const double norm = 1.0 / (factor * factor);
  for (int y = 0; y < dh; ++y)
    for (int x = 0; x < dw; ++x) {
      double s = 0.0;
      for (int j = 0; j < factor; ++j)
        for (int i = 0; i < factor; ++i) s += src.at(x * factor + i, y * factor + j);
      out.at(x, y) = s * norm;
    }
  return out;
}

Frame crop(const Frame& f, int x1, int y1, int x2, int y2) {
  x1 = std::clamp(x1, 0, f.width - 1);
  y1 = std::clamp(y1, 0, f.height - 1);
  x2 = std::clamp(x2, x1 + 1, f.width);
  y2 = std::clamp(y2, y1 + 1, f.height);
  Frame out(x2 - x1, y2 - y1, 0, f.t);
  for (int y = y1; y < y2; ++y)
    std::copy_n(f.pixels.begin() + static_cast<std::ptrdiff_t>(y) * f.width + x1, x2 - x1,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(y - y1) * out.width);
  return out;
}

void write_pgm(const Frame& f, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_pgm: cannot open " + path.string());
  os << "P5\n" << f.width << ' ' << f.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(f.pixels.data()),
           static_cast<std::streamsize>(f.pixels.size()));
  if (!os) throw std::runtime_error("write_pgm: write failed for " + path.string());
}

namespace {

// Skips whitespace and '#' comments between PGM header tokens.
std::string next_token(std::istream& is) {
  std::string tok;
  while (is) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  is >> tok;
  return tok;
}

}  // namespace

Frame read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_pgm: cannot open " + path.string());
  if (next_token(is) != "P5") throw std::runtime_error("read_pgm: not a binary PGM: " + path.string());
  const int w = std::stoi(next_token(is));
  const int h = std::stoi(next_token(is));
  const int maxval = std::stoi(next_token(is));
  if (maxval != 255) throw std::runtime_error("read_pgm: only maxval 255 supported");
  is.get();  // single whitespace before raster
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (is.gcount() != static_cast<std::streamsize>(data.size()))
    throw std::runtime_error("read_pgm: truncated raster in " + path.string());
  return Frame(w, h, std::move(data));
}

std::string hash_to_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t hash_from_hex(const std::string& s) {
  if (s.size() != 16) throw std::invalid_argument("hash_from_hex: expected 16 hex chars");
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos, 16);
  if (pos != 16) throw std::invalid_argument("hash_from_hex: invalid hex string");
  return v;
}

}  // namespace stpnav
