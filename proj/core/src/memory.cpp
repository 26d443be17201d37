#include "stpnav/memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace stpnav {

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::kGood:
      return "GOOD";
    case Outcome::kBad:
      return "BAD";
    case Outcome::kUnknown:
      break;
  }
  return "UNK";
}

Outcome outcome_from_string(const std::string& s) {
  if (s == "GOOD") return Outcome::kGood;
  if (s == "BAD") return Outcome::kBad;
  if (s == "UNK") return Outcome::kUnknown;
  throw std::invalid_argument("unknown outcome label: " + s);
}

void BankParams::validate() const {
  if (insert_period <= 0 || delta_h <= 0 || t_quar <= 0 || t_eval <= 0 || knn_k <= 0 ||
      assoc_window <= 0 || capacity == 0)
    throw std::invalid_argument("BankParams: integer parameters must be positive");
  if (!(delta_z > 0.0 && delta_z < 1.0)) throw std::invalid_argument("BankParams: delta_z must be in (0,1)");
  if (!(tau_iou > 0.0) || !(lambda > 0.0) || !(sector_kernel_width > 0.0) ||
      !(time_decay_halflife > 0.0))
    throw std::invalid_argument("BankParams: real parameters must be positive");
}

Outcome label_outcome(const MemoryEntry& entry, const std::optional<MstpSelection>& mstp,
                      double tau_iou) {
  if (!entry.t_dec || !entry.decision_box)
    throw std::logic_error("label_outcome: entry has no associated decision");
  if (!mstp) return Outcome::kBad;
  return iou(*entry.decision_box, mstp->candidate.box) > tau_iou ? Outcome::kGood : Outcome::kBad;
}

MemoryBank::MemoryBank(BankParams params) : params_(params) { params_.validate(); }

bool MemoryBank::consider_insert(const Embedding& z, std::uint64_t h,
                                 std::optional<int> preferred_sector, std::int64_t now) {
  int min_ham = std::numeric_limits<int>::max();
  double max_cos = -std::numeric_limits<double>::infinity();
  for (const auto* part : {&quarantine_, &active_})
    for (const auto& m : *part) {
      min_ham = std::min(min_ham, hamming(h, m.h));
      max_cos = std::max(max_cos, cosine(z, m.z));
    }
  if (!(min_ham > params_.delta_h && max_cos < params_.delta_z)) return false;

  if (size() >= params_.capacity) evict_one();

  MemoryEntry e;
  e.id = next_id_++;
  e.z = z;
  e.h = h;
  e.preferred_sector = preferred_sector;
  e.t_insert = now;
  e.t_act = now + params_.t_quar;
  quarantine_.push_back(std::move(e));
  return true;
}

void MemoryBank::evict_one() {
  // Oldest UNK entry first; labeled entries only when no UNK entry remains.
  auto pick = [&](bool unknown_only) -> std::pair<std::vector<MemoryEntry>*, std::size_t> {
    std::vector<MemoryEntry>* part = nullptr;
    std::size_t idx = 0;
    for (auto* p : {&quarantine_, &active_})
      for (std::size_t i = 0; i < p->size(); ++i) {
        const auto& m = (*p)[i];
        if (unknown_only && m.o != Outcome::kUnknown) continue;
        if (part == nullptr || m.t_insert < (*part)[idx].t_insert ||
            (m.t_insert == (*part)[idx].t_insert && m.id < (*part)[idx].id)) {
          part = p;
          idx = i;
        }
      }
    return {part, idx};
  };
  auto [part, idx] = pick(true);
  if (part == nullptr) std::tie(part, idx) = pick(false);
  if (part != nullptr) part->erase(part->begin() + static_cast<std::ptrdiff_t>(idx));
}

int MemoryBank::promote(std::int64_t now) {
  int moved = 0;
  auto it = std::stable_partition(quarantine_.begin(), quarantine_.end(),
                                  [now](const MemoryEntry& m) { return m.t_act > now; });
  for (auto m = it; m != quarantine_.end(); ++m) {
    active_.push_back(std::move(*m));
    ++moved;
  }
  quarantine_.erase(it, quarantine_.end());
  return moved;
}

std::optional<std::uint64_t> MemoryBank::associate_decision(int sector, const BBox& decision_box,
                                                            std::int64_t now) {
  MemoryEntry* best = nullptr;
  for (auto& m : quarantine_) {
    if (m.t_dec) continue;  // first association wins
    if (m.t_insert < now - params_.assoc_window || m.t_insert > now) continue;
    if (best == nullptr || m.t_insert > best->t_insert ||
        (m.t_insert == best->t_insert && m.id > best->id))
      best = &m;
  }
  if (best == nullptr) return std::nullopt;
  best->sigma = sector;
  best->t_dec = now;
  best->decision_box = decision_box;
  return best->id;
}

std::vector<std::uint64_t> MemoryBank::label_due(std::int64_t now,
                                                 const std::optional<MstpSelection>& mstp) {
  std::vector<std::uint64_t> labeled;
  for (auto* part : {&quarantine_, &active_})
    for (auto& m : *part) {
      if (m.o != Outcome::kUnknown || !m.t_dec) continue;
      if (*m.t_dec + params_.t_eval > now) continue;
      m.o = label_outcome(m, mstp, params_.tau_iou);
      labeled.push_back(m.id);
    }
  std::sort(labeled.begin(), labeled.end());
  return labeled;
}

std::vector<Neighbor> MemoryBank::knn(const Embedding& z, int k) const {
  std::vector<Neighbor> all;
  all.reserve(active_.size());
  for (const auto& m : active_) all.push_back({&m, cosine(z, m.z)});
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    if (a.entry->t_insert != b.entry->t_insert) return a.entry->t_insert < b.entry->t_insert;
    return a.entry->id < b.entry->id;
  });
  if (static_cast<int>(all.size()) > k) all.resize(static_cast<std::size_t>(std::max(k, 0)));
  return all;
}

double MemoryBank::penalty(const Embedding& z, int sector, std::int64_t now) const {
  const double w = params_.sector_kernel_width;
  double sum = 0.0;
  for (const auto& n : knn(z, params_.knn_k)) {
    const MemoryEntry& m = *n.entry;
    if (m.o != Outcome::kBad || !m.sigma || !m.t_dec) continue;
    const double ds = sector - *m.sigma;
    const double elapsed = std::max<double>(0.0, static_cast<double>(now - *m.t_dec));
    sum += std::max(0.0, n.cosine) * std::exp(-(ds * ds) / (2.0 * w * w)) *
           std::exp2(-elapsed / params_.time_decay_halflife);
  }
  return params_.lambda * sum;
}

const MemoryEntry* MemoryBank::find(std::uint64_t id) const {
  for (const auto* part : {&quarantine_, &active_})
    for (const auto& m : *part)
      if (m.id == id) return &m;
  return nullptr;
}

MemoryEntry* MemoryBank::find_mut(std::uint64_t id) {
  return const_cast<MemoryEntry*>(static_cast<const MemoryBank*>(this)->find(id));
}

void MemoryBank::clear() {
  quarantine_.clear();
  active_.clear();
}

namespace {

nlohmann::json entry_to_json(const MemoryEntry& m) {
  nlohmann::json j;
  j["id"] = m.id;
  j["z"] = m.z.values;
  j["h"] = hash_to_hex(m.h);
  j["preferred_sector"] = m.preferred_sector ? nlohmann::json(*m.preferred_sector) : nlohmann::json();
  j["sigma"] = m.sigma ? nlohmann::json(*m.sigma) : nlohmann::json();
  j["t_dec"] = m.t_dec ? nlohmann::json(*m.t_dec) : nlohmann::json();
  j["t_insert"] = m.t_insert;
  j["t_act"] = m.t_act;
  j["o"] = to_string(m.o);
  if (m.decision_box) {
    const auto& b = *m.decision_box;
    j["decision_box"] = {b.x1, b.y1, b.x2, b.y2};
  } else {
    j["decision_box"] = nullptr;
  }
  return j;
}

MemoryEntry entry_from_json(const nlohmann::json& j) {
  MemoryEntry m;
  m.id = j.at("id").get<std::uint64_t>();
  m.z.values = j.at("z").get<std::vector<double>>();
  m.h = hash_from_hex(j.at("h").get<std::string>());
  if (!j.at("preferred_sector").is_null()) m.preferred_sector = j["preferred_sector"].get<int>();
  if (!j.at("sigma").is_null()) m.sigma = j["sigma"].get<int>();
  if (!j.at("t_dec").is_null()) m.t_dec = j["t_dec"].get<std::int64_t>();
  m.t_insert = j.at("t_insert").get<std::int64_t>();
  m.t_act = j.at("t_act").get<std::int64_t>();
  m.o = outcome_from_string(j.at("o").get<std::string>());
  if (!j.at("decision_box").is_null()) {
    const auto b = j["decision_box"].get<std::vector<double>>();
    if (b.size() != 4) throw std::invalid_argument("memory bank json: decision_box needs 4 values");
    m.decision_box = BBox{b[0], b[1], b[2], b[3]};
  }
  return m;
}

}  // namespace

std::string MemoryBank::to_json() const {
  nlohmann::json j;
  const auto& p = params_;
  j["params"] = {{"insert_period", p.insert_period},
                 {"delta_h", p.delta_h},
                 {"delta_z", p.delta_z},
                 {"t_quar", p.t_quar},
                 {"t_eval", p.t_eval},
                 {"tau_iou", p.tau_iou},
                 {"lambda", p.lambda},
                 {"knn_k", p.knn_k},
                 {"sector_kernel_width", p.sector_kernel_width},
                 {"time_decay_halflife", p.time_decay_halflife},
                 {"assoc_window", p.assoc_window},
                 {"capacity", p.capacity}};
  j["next_id"] = next_id_;
  j["quarantine"] = nlohmann::json::array();
  for (const auto& m : quarantine_) j["quarantine"].push_back(entry_to_json(m));
  j["active"] = nlohmann::json::array();
  for (const auto& m : active_) j["active"].push_back(entry_to_json(m));
  return j.dump(2);
}

MemoryBank MemoryBank::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  BankParams p;
  const auto& jp = j.at("params");
  p.insert_period = jp.at("insert_period").get<int>();
  p.delta_h = jp.at("delta_h").get<int>();
  p.delta_z = jp.at("delta_z").get<double>();
  p.t_quar = jp.at("t_quar").get<int>();
  p.t_eval = jp.at("t_eval").get<int>();
  p.tau_iou = jp.at("tau_iou").get<double>();
  p.lambda = jp.at("lambda").get<double>();
  p.knn_k = jp.at("knn_k").get<int>();
  p.sector_kernel_width = jp.at("sector_kernel_width").get<double>();
  p.time_decay_halflife = jp.at("time_decay_halflife").get<double>();
  p.assoc_window = jp.at("assoc_window").get<int>();
  p.capacity = jp.at("capacity").get<std::size_t>();
  MemoryBank bank(p);
  bank.next_id_ = j.at("next_id").get<std::uint64_t>();
  for (const auto& e : j.at("quarantine")) bank.quarantine_.push_back(entry_from_json(e));
  for (const auto& e : j.at("active")) bank.active_.push_back(entry_from_json(e));
  return bank;
}

}  // namespace stpnav
