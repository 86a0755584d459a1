#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "robsim/cache.hpp"
#include "robsim/isa.hpp"

namespace robsim {

/// Dynamic sequence number; unique per fetched uop within a run.
using SeqNum = std::uint64_t;

struct RobEntry {
  SeqNum seq = 0;
  MicroOp uop;
  Opcode opcode = Opcode::Nop;

  std::optional<Cycle> dispatch_cycle;
  std::optional<Cycle> ready_cycle;
  std::optional<Cycle> exec_start_cycle;
  std::optional<Cycle> complete_cycle;
  std::optional<Cycle> commit_cycle;

  /// Oldest unresolved older branch; none means non-speculative.
  std::optional<SeqNum> shadow;
  /// Static id of the covering branch at dispatch.
  std::optional<InstrId> shadow_at_dispatch;
  std::optional<Cycle> unshadow_cycle;
  bool squashed = false;
  bool done = false;

  /// In-flight producer per uop source; none reads the architectural file.
  std::vector<std::optional<SeqNum>> producers;
  Word value = 0;
  /// Derived from a load that executed while shadowed.
  bool tainted = false;

  Addr address = 0;
  std::optional<AccessOutcome> outcome;
  Cycle mem_latency = 0;
  bool deferred_touch = false;
  bool lifted = false;
  std::uint32_t mshr_stalls = 0;

  bool predicted_taken = false;
  bool taken = false;

  bool osp = false;
  bool esp = false;
  std::optional<Cycle> esp_cycle;

  /// First uop of a REP expanded with the predicted count.
  bool rep_predicted = false;
  bool rep_verified = false;
  std::uint64_t rep_actual = 0;

  bool is_branch() const { return uop.kind == UopKind::BranchResolve; }
  bool is_load() const { return uop.kind == UopKind::MemRead; }
};

using Rob = std::deque<RobEntry>;

/// Assigns each entry the oldest unresolved older branch. Entries losing
/// their shadow get `unshadow_cycle = now`.
void compute_shadows(Rob& rob, Cycle now);

/// Entry lookup by sequence number (the ROB is seq-ordered).
const RobEntry* find_entry(const Rob& rob, SeqNum seq);
RobEntry* find_entry(Rob& rob, SeqNum seq);

}  // namespace robsim
