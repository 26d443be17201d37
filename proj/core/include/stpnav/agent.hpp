#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stpnav/controller.hpp"
#include "stpnav/memory.hpp"
#include "stpnav/perception.hpp"
#include "stpnav/rng.hpp"

namespace stpnav {

/// The three agent configurations compared in the evaluation.
enum class Method { kNaive, kFsm, kFull };

const char* to_string(Method m);
Method method_from_string(const std::string& s);
const std::vector<Method>& all_methods();

struct AgentConfig {
  Method method = Method::kFull;
  ControlParams control;
  BankParams bank;
  NoiseModel noise;
  ScoreWeights weights;
  int histogram_window = 30;

  bool memory_enabled() const { return method == Method::kFull; }
  bool recovery_enabled() const { return method != Method::kNaive; }
  /// Control parameters with the method's restrictions applied.
  ControlParams effective_control() const;
  void validate() const;
};

/// Everything the agent decided on one frame, for traces and logs.
struct StepRecord {
  std::vector<STPCandidate> candidates;
  std::optional<MstpSelection> mstp;
  std::optional<ErrorVec> error;
  ProgressSignals signals;
  bool loop_triggered = false;
  bool inserted = false;
  std::optional<std::uint64_t> associated;
  std::vector<std::uint64_t> labeled;
  ControllerState state;
  Action action;
};

/// Perception, selection, memory and control bundled into one decision loop.
class Agent {
 public:
  Agent(AgentConfig config, int screen_w, int screen_h, std::uint64_t seed);

  /// Start of a segment: controller, histories and anchors reset. The memory
  /// bank survives only when `keep_memory` is set. The clock keeps running.
  void reset(bool keep_memory);

  StepRecord step(const Frame& frame, const std::vector<PortalProjection>& visible);

  const AgentConfig& config() const { return config_; }
  const ControllerState& state() const { return state_; }
  const MemoryBank& memory() const { return bank_; }
  std::int64_t now() const { return now_; }
  /// Decision index of the first BAD label in this agent's lifetime.
  std::optional<std::int64_t> first_bad_label() const { return first_bad_; }

 private:
  AgentConfig config_;
  ControlParams control_;
  int screen_w_;
  int screen_h_;
  Rng detect_rng_;
  Rng escape_rng_;
  ControllerState state_;
  FrameRing ring_;
  SectorHistogram hist_;
  MemoryBank bank_;
  AnchorTracker anchors_;
  std::optional<MstpSelection> prev_;
  std::int64_t now_ = 0;
  std::optional<std::int64_t> first_bad_;
};

}  // namespace stpnav
