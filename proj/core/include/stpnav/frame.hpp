#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace stpnav {

/// Grayscale intensity image, row-major, one byte per pixel.
///
/// This is the only sensor the agent sees. `t` is the index of the decision
/// at which the frame was captured.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
  std::int64_t t = 0;

  Frame() = default;
  Frame(int w, int h, std::uint8_t fill = 0, std::int64_t index = 0);
  Frame(int w, int h, std::vector<std::uint8_t> data, std::int64_t index = 0);

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  bool same_size(const Frame& o) const { return width == o.width && height == o.height; }
  double mean() const;
  double variance() const;

  friend bool operator==(const Frame& a, const Frame& b) {
    return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
  }
};

/// Row-major real-valued image used for intermediate computations.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0)
      : width(w), height(h), v(static_cast<std::size_t>(w) * h, fill) {}

  double at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
};

Plane to_plane(const Frame& f, double scale = 1.0);

/// Bilinear resample with pixel-center alignment (x_src = (x + 0.5) * sw / dw - 0.5).
Plane resize_bilinear(const Plane& src, int dw, int dh);
Plane resize_bilinear(const Frame& src, int dw, int dh);

/// Integer-factor box downsample; trailing rows/columns that do not fill a box are dropped.
Plane downsample_box(const Plane& src, int factor);

/// Clamped crop. The box is given in pixel coordinates [x1,x2) x [y1,y2).
Frame crop(const Frame& f, int x1, int y1, int x2, int y2);

/// Binary PGM (P5, maxval 255).
void write_pgm(const Frame& f, const std::filesystem::path& path);
Frame read_pgm(const std::filesystem::path& path);

std::string hash_to_hex(std::uint64_t h);
std::uint64_t hash_from_hex(const std::string& s);

}  // namespace stpnav
