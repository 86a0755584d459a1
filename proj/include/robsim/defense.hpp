#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "robsim/analysis.hpp"
#include "robsim/rob.hpp"

namespace robsim {

enum class DefenseMode : std::uint8_t { Unprotected, Dom, DomPlusInvarspec };
enum class Mitigation : std::uint8_t { ConservativeInvariance, PathBalancing, OperandIndependentFill };

std::string_view to_string(DefenseMode m);
std::string_view to_string(Mitigation m);
std::optional<DefenseMode> parse_defense_mode(std::string_view s);
std::optional<Mitigation> parse_mitigation(std::string_view s);

inline constexpr std::uint64_t kDefaultPredictedRepCount = 8;

struct DefensePolicy {
  DefenseMode mode = DefenseMode::Unprotected;
  std::set<Mitigation> mitigations;
  /// Required for DomPlusInvarspec; one entry per static instruction.
  SafeSets safe_sets;
  std::uint64_t predicted_rep_count = kDefaultPredictedRepCount;

  bool has(Mitigation m) const { return mitigations.contains(m); }
  bool delays_on_miss() const { return mode != DefenseMode::Unprotected; }

  /// Throws std::invalid_argument (or AnalysisError for a missing
  /// balancing certificate) when the policy cannot apply to `program`.
  void validate(const Program& program) const;
};

std::string mitigations_label(const std::set<Mitigation>& m);

enum class GateDecision : std::uint8_t { ExecuteHitDeferred, Delay };

/// Delay-on-Miss for a shadowed load.
GateDecision dom_gate(const RobEntry& load, const CacheState& cache);

/// Outcome-safe point under the current ROB contents. Uses the `osp` flags
/// already computed for older entries.
bool osp_reached(const RobEntry& entry, const Rob& rob, const DefensePolicy& policy);

/// Recomputes `osp` for every entry to a fixed point.
void compute_osp(Rob& rob, const DefensePolicy& policy);

struct InvarianceTag {
  InstrId instr = 0;
  bool esp_reached = false;
  std::optional<Cycle> cycle_reached;
};

/// Execution-safe point: every safe-set member instance is OSP. Sticky on
/// the entry once reached.
InvarianceTag esp_check(RobEntry& entry, const Rob& rob, const DefensePolicy& policy, Cycle now);

enum class FillDecision : std::uint8_t { Dispatch, DispatchPredicted, Block };

/// REP uops whose count is secret-tainted dispatch as predicted up to the
/// predicted count and are blocked beyond it.
FillDecision gate_rob_fill(const MicroOp& uop, bool secret_tainted, const DefensePolicy& policy);

}  // namespace robsim
