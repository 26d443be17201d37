#include "stpnav/vision.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace stpnav {

namespace {

// Orthonormal DCT-II basis: B[k][n] = s(k) * cos(pi * (n + 0.5) * k / N).
std::vector<double> dct_basis(int n) {
  std::vector<double> b(static_cast<std::size_t>(n) * n);
  const double s0 = std::sqrt(1.0 / n);
  const double s1 = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      b[static_cast<std::size_t>(k) * n + i] =
          (k == 0 ? s0 : s1) * std::cos(std::numbers::pi * (i + 0.5) * k / n);
  return b;
}

// AC coefficients this small are numerical residue of a flat input.
constexpr double kCoeffSnap = 1e-9;

}  // namespace

Plane dct2(const Plane& p) {
  const int w = p.width;
  const int h = p.height;
  const auto bw = dct_basis(w);
  const auto bh = dct_basis(h);

  Plane rows(w, h);
  for (int y = 0; y < h; ++y)
    for (int k = 0; k < w; ++k) {
      double s = 0.0;
      for (int x = 0; x < w; ++x) s += bw[static_cast<std::size_t>(k) * w + x] * p.at(x, y);
      rows.at(k, y) = s;
    }
  Plane out(w, h);
  for (int k = 0; k < w; ++k)
    for (int j = 0; j < h; ++j) {
      double s = 0.0;
      for (int y = 0; y < h; ++y) s += bh[static_cast<std::size_t>(j) * h + y] * rows.at(k, y);
      out.at(k, j) = s;
    }
  return out;
}

std::uint64_t phash64(const Frame& frame) {
  Plane small = resize_bilinear(frame, 32, 32);
  double m = 0.0;
  for (double v : small.v) m += v;
  m /= static_cast<double>(small.v.size());
  for (double& v : small.v) v -= m;

  const Plane d = dct2(small);
  std::array<double, 64> c{};
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double v = d.at(x + 1, y + 1);
      if (std::abs(v) < kCoeffSnap) v = 0.0;
      c[static_cast<std::size_t>(y) * 8 + x] = v;
    }
  auto sorted = c;
  std::sort(sorted.begin(), sorted.end());
  const double median = 0.5 * (sorted[31] + sorted[32]);

  std::uint64_t h = 0;
  for (int i = 0; i < 64; ++i)
    if (c[static_cast<std::size_t>(i)] > median) h |= (std::uint64_t{1} << (63 - i));
  return h;
}

int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

namespace {

double window_ssim(const Frame& a, const Frame& b, int x0, int y0, int ww, int wh) {
  constexpr double c1 = (0.01 * 255) * (0.01 * 255);
  constexpr double c2 = (0.03 * 255) * (0.03 * 255);
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int y = y0; y < y0 + wh; ++y) {
    const std::uint8_t* pa = &a.pixels[static_cast<std::size_t>(y) * a.width + x0];
    const std::uint8_t* pb = &b.pixels[static_cast<std::size_t>(y) * b.width + x0];
    for (int x = 0; x < ww; ++x) {
      const double va = pa[x];
      const double vb = pb[x];
      sa += va;
      sb += vb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
    }
  }
  const double n = static_cast<double>(ww) * wh;
  const double ma = sa / n;
  const double mb = sb / n;
  const double va = std::max(saa / n - ma * ma, 0.0);
  const double vb = std::max(sbb / n - mb * mb, 0.0);
  const double cov = sab / n - ma * mb;
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

}  // namespace

double ssim(const Frame& a, const Frame& b) {
  if (!a.same_size(b)) throw std::invalid_argument("ssim: frame dimensions differ");
  if (a.pixels.empty()) throw std::invalid_argument("ssim: empty frame");
  constexpr int win = 8;
  constexpr int stride = 4;
  if (a.width < win || a.height < win) return window_ssim(a, b, 0, 0, a.width, a.height);

  double total = 0.0;
  int count = 0;
  for (int y = 0; y + win <= a.height; y += stride)
    for (int x = 0; x + win <= a.width; x += stride) {
      total += window_ssim(a, b, x, y, win, win);
      ++count;
    }
  return total / count;
}

double ncc_score(const Frame& frame, const Frame& templ) {
  const Plane f = frame.same_size(templ) ? to_plane(frame)
                                         : resize_bilinear(frame, templ.width, templ.height);
  const Plane t = to_plane(templ);
  const double n = static_cast<double>(t.v.size());
  double mf = 0, mt = 0;
  for (std::size_t i = 0; i < t.v.size(); ++i) {
    mf += f.v[i];
    mt += t.v[i];
  }
  mf /= n;
  mt /= n;
  double sft = 0, sff = 0, stt = 0;
  for (std::size_t i = 0; i < t.v.size(); ++i) {
    const double df = f.v[i] - mf;
    const double dt = t.v[i] - mt;
    sft += df * dt;
    sff += df * df;
    stt += dt * dt;
  }
  if (sff <= 0.0 || stt <= 0.0) return 0.0;
  return std::clamp(sft / std::sqrt(sff * stt), -1.0, 1.0);
}

namespace {

struct Match {
  int dx = 0;
  int dy = 0;
  double sad = std::numeric_limits<double>::infinity();
};

// Lower SAD wins; on equal SAD the shorter displacement wins, then scan order.
bool better(double sad, int dx, int dy, const Match& best) {
  if (sad < best.sad) return true;
  if (sad > best.sad) return false;
  return dx * dx + dy * dy < best.dx * best.dx + best.dy * best.dy;
}

template <typename SampleA, typename SampleB>
Match search(SampleA prev, SampleB cur, int w, int h, int bx, int by, int bs, int cx, int cy,
             int radius) {
  Match best;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      const int tx = bx + cx + dx;
      const int ty = by + cy + dy;
      if (tx < 0 || ty < 0 || tx + bs > w || ty + bs > h) continue;
      double sad = 0.0;
      for (int y = 0; y < bs; ++y)
        for (int x = 0; x < bs; ++x) sad += std::abs(prev(bx + x, by + y) - cur(tx + x, ty + y));
      if (better(sad, cx + dx, cy + dy, best)) best = {cx + dx, cy + dy, sad};
    }
  return best;
}

}  // namespace

double median_flow(const Frame& prev, const Frame& cur, const FlowParams& params) {
  if (!prev.same_size(cur)) throw std::invalid_argument("median_flow: frame dimensions differ");
  const int f = params.downsample;
  const Plane p = downsample_box(to_plane(prev), f);
  const Plane c = downsample_box(to_plane(cur), f);
  const int bs = params.block;

  auto coarse_p = [&](int x, int y) { return p.at(x, y); };
  auto coarse_c = [&](int x, int y) { return c.at(x, y); };
  auto full_p = [&](int x, int y) { return static_cast<double>(prev.at(x, y)); };
  auto full_c = [&](int x, int y) { return static_cast<double>(cur.at(x, y)); };

  std::vector<double> mags;
  for (int by = 0; by + bs <= p.height; by += bs)
    for (int bx = 0; bx + bs <= p.width; bx += bs) {
      const Match m = search(coarse_p, coarse_c, p.width, p.height, bx, by, bs, 0, 0, params.radius);
      Match r = m;
      if (params.refine_radius > 0) {
        r = search(full_p, full_c, prev.width, prev.height, bx * f, by * f, bs * f, m.dx * f,
                   m.dy * f, params.refine_radius);
      } else {
        r.dx *= f;
        r.dy *= f;
      }
      mags.push_back(std::hypot(static_cast<double>(r.dx), static_cast<double>(r.dy)));
    }
  if (mags.empty()) return 0.0;
  std::sort(mags.begin(), mags.end());
  const std::size_t n = mags.size();
  return n % 2 == 1 ? mags[n / 2] : 0.5 * (mags[n / 2 - 1] + mags[n / 2]);
}

Embedding embed(const Frame& frame) {
  Embedding e;
  e.values.assign(kEmbeddingDim, 0.0);
  const Plane small = resize_bilinear(to_plane(frame, 1.0 / 255.0), 16, 16);
  const Plane d = dct2(small);
  std::size_t i = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      if (x == 0 && y == 0) continue;
      double v = d.at(x, y);
      if (std::abs(v) < kCoeffSnap) v = 0.0;
      e.values[i++] = v;
    }
  e.values[i] = frame.mean() / 255.0;

  double norm = 0.0;
  for (double v : e.values) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    e.values.assign(kEmbeddingDim, 0.0);
    e.values[0] = 1.0;
    return e;
  }
  for (double& v : e.values) v /= norm;
  return e;
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("cosine: embedding dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a.values[i] * b.values[i];
  return std::clamp(s, -1.0, 1.0);
}

}  // namespace stpnav
