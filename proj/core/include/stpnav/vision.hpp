#pragma once

#include <cstdint>
#include <vector>

#include "stpnav/frame.hpp"

namespace stpnav {

/// Unit-normalized frame descriptor. Dimension is fixed per run (64 by default).
struct Embedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

inline constexpr int kEmbeddingDim = 64;

/// Orthonormal 2D DCT-II of a square or rectangular plane (separable).
Plane dct2(const Plane& p);

/// 64-bit DCT perceptual hash.
///
/// The frame is resized to 32x32, transformed with a 2D DCT, and the 8x8
/// block of coefficients at rows/cols 1..8 (lowest AC frequencies, DC
/// excluded) is thresholded against its median. Bit i (row-major within the
/// block, bit 0 = most significant) is set iff coefficient i > median.
std::uint64_t phash64(const Frame& frame);

int hamming(std::uint64_t a, std::uint64_t b);

/// Mean SSIM over 8x8 windows with stride 4 (C1=(0.01*255)^2, C2=(0.03*255)^2).
/// Frames smaller than a window are scored as a single whole-image window.
/// Throws std::invalid_argument when the frames differ in size.
double ssim(const Frame& a, const Frame& b);

/// Zero-mean normalized cross-correlation after resizing `frame` (bilinear)
/// to the template size. Returns 0 when either side has zero variance.
double ncc_score(const Frame& frame, const Frame& templ);

struct FlowParams {
  int downsample = 4;
  int block = 8;
  int radius = 4;
  /// Full-resolution integer refinement around the coarse match.
  int refine_radius = 2;
};

/// Median block-matching displacement magnitude between two frames, in
/// full-resolution pixels. Coarse exhaustive SAD search at the downsampled
/// scale, then an integer refinement at full resolution. Equal SAD prefers
/// the smaller displacement (zero first).
double median_flow(const Frame& prev, const Frame& cur, const FlowParams& params = {});

/// DCT frame embedding: 16x16 resize of intensities in [0,1], the 63 AC
/// coefficients of the top-left 8x8 DCT block, plus the mean intensity,
/// L2-normalized. An all-zero frame maps to e_1.
Embedding embed(const Frame& frame);

/// Dot product of two unit embeddings. Throws on dimension mismatch.
double cosine(const Embedding& a, const Embedding& b);

}  // namespace stpnav
