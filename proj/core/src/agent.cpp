#include "stpnav/agent.hpp"

#include <stdexcept>

#include "stpnav/vision.hpp"

namespace stpnav {

const char* to_string(Method m) {
  switch (m) {
    case Method::kNaive:
      return "NAIVE";
    case Method::kFsm:
      return "FSM";
    case Method::kFull:
      break;
  }
  return "FULL";
}

Method method_from_string(const std::string& s) {
  if (s == "NAIVE") return Method::kNaive;
  if (s == "FSM") return Method::kFsm;
  if (s == "FULL") return Method::kFull;
  throw std::invalid_argument("unknown method: " + s + " (expected NAIVE, FSM or FULL)");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> m = {Method::kNaive, Method::kFsm, Method::kFull};
  return m;
}

ControlParams AgentConfig::effective_control() const {
  ControlParams c = control;
  c.recovery_enabled = recovery_enabled();
  return c;
}

void AgentConfig::validate() const {
  control.validate();
  bank.validate();
  noise.validate();
  weights.validate();
  if (weights.sectors() != control.sectors || static_cast<int>(noise.sector_bias.size()) != control.sectors)
    throw std::invalid_argument("agent config: sector_prior, sector_bias and sectors must agree on K");
  if (histogram_window < 1) throw std::invalid_argument("agent config: histogram_window must be >= 1");
}

Agent::Agent(AgentConfig config, int screen_w, int screen_h, std::uint64_t seed)
    : config_(std::move(config)),
      control_(config_.effective_control()),
      screen_w_(screen_w),
      screen_h_(screen_h),
      detect_rng_(Rng::derive(seed, 1)),
      escape_rng_(Rng::derive(seed, 2)),
      state_(initial_state(screen_w, screen_h)),
      ring_(control_.ring_size),
      hist_(control_.sectors, config_.histogram_window),
      bank_(config_.bank),
      anchors_(control_) {
  config_.validate();
}

void Agent::reset(bool keep_memory) {
  state_ = initial_state(screen_w_, screen_h_);
  ring_.clear();
  hist_.clear();
  anchors_.clear();
  prev_.reset();
  if (!keep_memory) bank_.clear();
}

StepRecord Agent::step(const Frame& frame, const std::vector<PortalProjection>& visible) {
  StepRecord rec;
  const bool memory = config_.memory_enabled();
  const int k = control_.sectors;

  rec.candidates = simulated_detect(visible, frame, config_.noise, detect_rng_);

  if (memory) bank_.promote(now_);
  std::optional<Embedding> z;
  std::uint64_t h = 0;
  if (memory) z = embed(frame);
  if (memory || control_.recovery_enabled) h = phash64(frame);

  PenaltyFn penalty;
  if (memory) penalty = [&](int sector) { return bank_.penalty(*z, sector, now_); };

  rec.mstp = select_mstp(rec.candidates, prev_, hist_, config_.weights, penalty, now_);
  hist_.push(rec.mstp ? std::optional<int>(rec.mstp->candidate.sector) : std::nullopt);
  if (rec.mstp) {
    const auto& b = rec.mstp->candidate.box;
    rec.error = error_vector(b.cx(), b.cy(), screen_w_, screen_h_);
  }

  ring_.push(frame, rec.mstp ? rec.mstp->candidate.box.area() : 0.0);
  rec.signals = progress_update(ring_, control_);

  LoopQuery q;
  if (control_.recovery_enabled) {
    q.triggered = anchors_.observe(h, now_);
    q.explored_mask = anchors_.explored_mask();
  }
  q.sector_penalty.assign(static_cast<std::size_t>(k), 0.0);
  if (memory && q.triggered)
    for (int s = 1; s <= k; ++s) q.sector_penalty[static_cast<std::size_t>(s - 1)] = penalty(s);
  rec.loop_triggered = q.triggered;

  const double draw = escape_rng_.uniform();
  ControllerState next = fsm_step(state_, rec.mstp, rec.signals, q, control_, draw);

  if (next.committed) {
    if (control_.recovery_enabled) anchors_.record_commit(next.committed_sector);
    if (memory) rec.associated = bank_.associate_decision(next.committed_sector, next.committed_box, now_);
  }
  if (memory) {
    if (now_ % config_.bank.insert_period == 0)
      rec.inserted = bank_.consider_insert(
          *z, h, rec.mstp ? std::optional<int>(rec.mstp->candidate.sector) : std::nullopt, now_);
    rec.labeled = bank_.label_due(now_, rec.mstp);
    if (!first_bad_)
      for (auto id : rec.labeled)
        if (const auto* m = bank_.find(id); m && m->o == Outcome::kBad) {
          first_bad_ = now_;
          break;
        }
  }

  rec.action = act(next, rec.mstp, control_);
  rec.state = next;
  state_ = std::move(next);
  prev_ = rec.mstp;
  ++now_;
  return rec;
}

}  // namespace stpnav
