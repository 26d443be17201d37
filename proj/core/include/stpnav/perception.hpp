#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "stpnav/frame.hpp"
#include "stpnav/rng.hpp"
#include "stpnav/vision.hpp"

namespace stpnav {

inline constexpr int kDefaultSectors = 8;

/// Screen-space box, pixel coordinates, x1<x2 and y1<y2.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x1 < x2 && y1 < y2; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

double iou(const BBox& a, const BBox& b);

/// Sector index in [1,K] of the box center: min(K, 1 + floor(K*cx/W)).
int sector_of(const BBox& box, int sectors, double screen_width);
int sector_of_x(double cx, int sectors, double screen_width);

enum PortalTag : std::uint32_t {
  kTagNone = 0,
  kTagDark = 1u << 0,
  kTagNarrow = 1u << 1,
  kTagDecoyAdjacent = 1u << 2,
};

/// Ground-truth view of one traversal affordance (or visual decoy) as seen
/// from the current pose. Produced by the simulator, consumed by the
/// simulated detector only.
struct PortalProjection {
  int id = -1;
  BBox box;
  double occlusion = 0.0;
  std::uint32_t tags = kTagNone;
  double free_space = 0.0;
  /// Multiplier on detector confidence; 1 for ordinary portals.
  double salience = 1.0;
  bool decoy = false;
};

struct STPCandidate {
  BBox box;
  double det_score = 0.0;
  Embedding embedding;
  int sector = 1;
  double free_space = 0.0;
  /// Ground-truth source id for diagnostics; -1 for spurious detections.
  /// Never read by the selection or control logic.
  int source = -1;
};

struct ScoreWeights {
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.4;
  /// Per-sector prior multiplying the recent sector frequency; size is K.
  std::vector<double> sector_prior = std::vector<double>(kDefaultSectors, 0.25);
  double free_weight = 0.25;

  int sectors() const { return static_cast<int>(sector_prior.size()); }
  void validate() const;
};

struct MstpSelection {
  STPCandidate candidate;
  double final_score = 0.0;
  std::int64_t t = 0;
};

/// Sector counts of the selected MSTP over the last `window` frames.
class SectorHistogram {
 public:
  explicit SectorHistogram(int sectors = kDefaultSectors, int window = 30);

  /// Appends one frame; `sector` is empty when no MSTP was selected.
  void push(std::optional<int> sector);
  void clear();

  int sectors() const { return static_cast<int>(counts_.size()); }
  int window() const { return window_; }
  int count(int sector) const { return counts_.at(static_cast<std::size_t>(sector - 1)); }
  double fraction(int sector) const { return static_cast<double>(count(sector)) / window_; }
  int total() const;

 private:
  int window_;
  std::vector<int> counts_;
  std::deque<int> recent_;  // 0 marks a frame without selection
};

struct NoiseModel {
  double miss_prob = 0.0;
  double jitter_px = 0.0;
  std::vector<double> sector_bias = std::vector<double>(kDefaultSectors, 0.7);
  double decoy_rate = 0.0;
  double dark_miss_boost = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Optional retrieval score against an offline template library. Disabled
/// (returns 0) unless a callable is installed.
using RetrievalHook = std::function<double(const Embedding&)>;

/// 0 without a previous selection, else 0.7*IoU + 0.3*exp(-(dsector^2)/2).
double temporal_score(const STPCandidate& c, const std::optional<MstpSelection>& prev);

/// sector_prior[s] * hist fraction of s + free_weight * free_space.
double psi_score(const STPCandidate& c, const SectorHistogram& hist, double free_space,
                 const ScoreWeights& w);

using PenaltyFn = std::function<double(int sector)>;

/// Score every candidate and return the argmax of the penalized score.
///
/// s_i = alpha*det + beta*ret + gamma*temp + psi, final = s_i - penalty(sector).
/// Ties break on higher det_score, then lower sector, then smaller x1.
std::optional<MstpSelection> select_mstp(std::span<const STPCandidate> candidates,
                                         const std::optional<MstpSelection>& prev,
                                         const SectorHistogram& hist, const ScoreWeights& weights,
                                         const PenaltyFn& penalty, std::int64_t t = 0,
                                         const RetrievalHook& retrieval = {});

/// Stand-in for the learned detector: samples candidates from ground-truth
/// projections under the noise model, plus Poisson spurious boxes. The frame
/// supplies screen size and the crops for candidate embeddings.
std::vector<STPCandidate> simulated_detect(std::span<const PortalProjection> visible,
                                           const Frame& frame, const NoiseModel& noise, Rng& rng);

}  // namespace stpnav
