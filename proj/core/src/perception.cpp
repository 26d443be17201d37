#include "stpnav/perception.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stpnav {

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

int sector_of_x(double cx, int sectors, double screen_width) {
  const int s = 1 + static_cast<int>(std::floor(sectors * cx / screen_width));
  return std::clamp(s, 1, sectors);
}

int sector_of(const BBox& box, int sectors, double screen_width) {
  return sector_of_x(box.cx(), sectors, screen_width);
}

void ScoreWeights::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0)
    throw std::invalid_argument("ScoreWeights: alpha, beta, gamma must be nonnegative");
  if (alpha == 0 && beta == 0 && gamma == 0)
    throw std::invalid_argument("ScoreWeights: at least one of alpha, beta, gamma must be positive");
  if (sector_prior.size() < 2) throw std::invalid_argument("ScoreWeights: need K >= 2 sector priors");
  for (double p : sector_prior)
    if (p < 0) throw std::invalid_argument("ScoreWeights: sector priors must be nonnegative");
  if (free_weight < 0) throw std::invalid_argument("ScoreWeights: free_weight must be nonnegative");
}

SectorHistogram::SectorHistogram(int sectors, int window)
    : window_(window), counts_(static_cast<std::size_t>(sectors), 0) {
  if (sectors < 2 || window < 1) throw std::invalid_argument("SectorHistogram: bad dimensions");
}

void SectorHistogram::push(std::optional<int> sector) {
  const int s = sector.value_or(0);
  if (s < 0 || s > sectors()) throw std::out_of_range("SectorHistogram: sector out of range");
  recent_.push_back(s);
  if (s > 0) ++counts_[static_cast<std::size_t>(s - 1)];
  if (static_cast<int>(recent_.size()) > window_) {
    const int old = recent_.front();
    recent_.pop_front();
    if (old > 0) --counts_[static_cast<std::size_t>(old - 1)];
  }
}

void SectorHistogram::clear() {
  recent_.clear();
  std::fill(counts_.begin(), counts_.end(), 0);
}

int SectorHistogram::total() const {
  int s = 0;
  for (int c : counts_) s += c;
  return s;
}

void NoiseModel::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument(std::string("NoiseModel: ") + name + " must be in [0,1]");
  };
  prob(miss_prob, "miss_prob");
  prob(dark_miss_boost, "dark_miss_boost");
  if (jitter_px < 0) throw std::invalid_argument("NoiseModel: jitter_px must be nonnegative");
  if (decoy_rate < 0) throw std::invalid_argument("NoiseModel: decoy_rate must be nonnegative");
  if (sector_bias.size() < 2) throw std::invalid_argument("NoiseModel: need K >= 2 sector biases");
  for (double b : sector_bias)
    if (b < 0) throw std::invalid_argument("NoiseModel: sector_bias must be nonnegative");
}

double temporal_score(const STPCandidate& c, const std::optional<MstpSelection>& prev) {
  if (!prev) return 0.0;
  const double ds = c.sector - prev->candidate.sector;
  return 0.7 * iou(c.box, prev->candidate.box) + 0.3 * std::exp(-(ds * ds) / 2.0);
}

double psi_score(const STPCandidate& c, const SectorHistogram& hist, double free_space,
                 const ScoreWeights& w) {
  const double prior = w.sector_prior.at(static_cast<std::size_t>(c.sector - 1));
  return prior * hist.fraction(c.sector) + w.free_weight * free_space;
}

std::optional<MstpSelection> select_mstp(std::span<const STPCandidate> candidates,
                                         const std::optional<MstpSelection>& prev,
                                         const SectorHistogram& hist, const ScoreWeights& weights,
                                         const PenaltyFn& penalty, std::int64_t t,
                                         const RetrievalHook& retrieval) {
  if (candidates.empty()) return std::nullopt;

  const STPCandidate* best = nullptr;
  double best_score = 0.0;
  for (const auto& c : candidates) {
    const double ret = retrieval ? retrieval(c.embedding) : 0.0;
    const double s = weights.alpha * c.det_score + weights.beta * ret +
                     weights.gamma * temporal_score(c, prev) +
                     psi_score(c, hist, c.free_space, weights);
    const double final_score = s - (penalty ? penalty(c.sector) : 0.0);

    bool take = best == nullptr || final_score > best_score;
    if (!take && final_score == best_score) {
      if (c.det_score != best->det_score)
        take = c.det_score > best->det_score;
      else if (c.sector != best->sector)
        take = c.sector < best->sector;
      else
        take = c.box.x1 < best->box.x1;
    }
    if (take) {
      best = &c;
      best_score = final_score;
    }
  }
  return MstpSelection{*best, best_score, t};
}

std::vector<STPCandidate> simulated_detect(std::span<const PortalProjection> visible,
                                           const Frame& frame, const NoiseModel& noise, Rng& rng) {
  const int k = static_cast<int>(noise.sector_bias.size());
  const double w = frame.width;
  const double h = frame.height;
  std::vector<STPCandidate> out;

  auto finish = [&](STPCandidate& c) {
    c.box.x1 = std::clamp(c.box.x1, 0.0, w - 1.0);
    c.box.y1 = std::clamp(c.box.y1, 0.0, h - 1.0);
    c.box.x2 = std::clamp(c.box.x2, c.box.x1 + 1.0, w);
    c.box.y2 = std::clamp(c.box.y2, c.box.y1 + 1.0, h);
    c.sector = sector_of(c.box, k, w);
    c.embedding = embed(crop(frame, static_cast<int>(c.box.x1), static_cast<int>(c.box.y1),
                             static_cast<int>(std::ceil(c.box.x2)),
                             static_cast<int>(std::ceil(c.box.y2))));
  };

  for (const auto& p : visible) {
    const double dark = (p.tags & kTagDark) ? noise.dark_miss_boost : 0.0;
    const double keep =
        std::clamp((1.0 - noise.miss_prob - dark) * (1.0 - p.occlusion), 0.0, 1.0);
    // One uniform per projection keeps the stream aligned regardless of outcome.
    if (!(rng.uniform() < keep)) continue;

    STPCandidate c;
    c.box = p.box;
    if (noise.jitter_px > 0) {
      c.box.x1 += rng.normal(0.0, noise.jitter_px);
      c.box.y1 += rng.normal(0.0, noise.jitter_px);
      c.box.x2 += rng.normal(0.0, noise.jitter_px);
      c.box.y2 += rng.normal(0.0, noise.jitter_px);
      if (c.box.x2 < c.box.x1) std::swap(c.box.x1, c.box.x2);
      if (c.box.y2 < c.box.y1) std::swap(c.box.y1, c.box.y2);
    }
    finish(c);
    const double bias = noise.sector_bias[static_cast<std::size_t>(c.sector - 1)];
    c.det_score = std::clamp(bias * p.salience * (1.0 - p.occlusion), 0.0, 1.0);
    c.free_space = p.free_space;
    c.source = p.id;
    out.push_back(std::move(c));
  }

  const int spurious = rng.poisson(noise.decoy_rate);
  for (int i = 0; i < spurious; ++i) {
    STPCandidate c;
    const double bw = rng.uniform(0.10, 0.25) * w;
    const double bh = rng.uniform(0.15, 0.40) * h;
    c.box.x1 = rng.uniform(0.0, w - bw);
    c.box.y1 = rng.uniform(0.0, h - bh);
    c.box.x2 = c.box.x1 + bw;
    c.box.y2 = c.box.y1 + bh;
    finish(c);
    c.det_score = rng.uniform(0.3, 0.7);
    c.free_space = 0.0;
    c.source = -1;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace stpnav
