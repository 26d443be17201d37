#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stpnav/perception.hpp"
#include "stpnav/vision.hpp"

namespace stpnav {

enum class Outcome { kUnknown, kGood, kBad };

const char* to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

struct MemoryEntry {
  std::uint64_t id = 0;
  Embedding z;
  std::uint64_t h = 0;
  /// Sector of the MSTP at insertion time; provisional, not used for penalties.
  std::optional<int> preferred_sector;
  /// Set iff the entry was associated with a committed decision.
  std::optional<int> sigma;
  std::optional<std::int64_t> t_dec;
  std::int64_t t_insert = 0;
  std::int64_t t_act = 0;
  Outcome o = Outcome::kUnknown;
  std::optional<BBox> decision_box;
};

struct BankParams {
  int insert_period = 15;
  int delta_h = 10;
  double delta_z = 0.92;
  int t_quar = 60;
  int t_eval = 45;
  double tau_iou = 0.3;
  double lambda = 0.5;
  int knn_k = 8;
  double sector_kernel_width = 1.0;
  double time_decay_halflife = 1800.0;
  int assoc_window = 30;
  std::size_t capacity = 512;

  void validate() const;
};

/// GOOD iff an MSTP is present and IoU(decision box, MSTP box) > tau.
/// Throws std::logic_error if the entry was never associated with a decision.
Outcome label_outcome(const MemoryEntry& entry, const std::optional<MstpSelection>& mstp,
                      double tau_iou);

struct Neighbor {
  const MemoryEntry* entry = nullptr;
  double cosine = 0.0;
};

/// Two-partition visual memory: fresh entries wait in quarantine for
/// T_quar frames before they become queryable in the active set.
///
/// Search is exact (brute force over the active set, capacity-bounded).
class MemoryBank {
 public:
  explicit MemoryBank(BankParams params = {});

  const BankParams& params() const { return params_; }

  /// Inserts into quarantine iff min Hamming > delta_h and max cosine < delta_z
  /// over all existing entries (quarantine and active).
  bool consider_insert(const Embedding& z, std::uint64_t h, std::optional<int> preferred_sector,
                       std::int64_t now);

  /// Moves every quarantine entry with t_act <= now to the active set.
  int promote(std::int64_t now);

  /// Latest unassociated quarantine entry with t_insert in [now - window, now].
  std::optional<std::uint64_t> associate_decision(int sector, const BBox& decision_box,
                                                  std::int64_t now);

  /// Labels every associated UNK entry whose evaluation time t_dec + T_eval has come.
  std::vector<std::uint64_t> label_due(std::int64_t now, const std::optional<MstpSelection>& mstp);

  std::vector<Neighbor> knn(const Embedding& z, int k) const;

  /// lambda * sum over the k nearest active BAD entries of
  /// max(0, cos) * exp(-(sector - sigma)^2 / (2 w^2)) * 2^(-(now - t_dec) / halflife).
  double penalty(const Embedding& z, int sector, std::int64_t now) const;

  const std::vector<MemoryEntry>& quarantine() const { return quarantine_; }
  const std::vector<MemoryEntry>& active() const { return active_; }
  std::size_t size() const { return quarantine_.size() + active_.size(); }
  const MemoryEntry* find(std::uint64_t id) const;
  MemoryEntry* find_mut(std::uint64_t id);

  void clear();

  std::string to_json() const;
  static MemoryBank from_json(const std::string& text);

 private:
  void evict_one();

  BankParams params_;
  std::vector<MemoryEntry> quarantine_;
  std::vector<MemoryEntry> active_;
  std::uint64_t next_id_ = 1;
};

}  // namespace stpnav
