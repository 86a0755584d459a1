#include "robsim/defense.hpp"

#include <stdexcept>

namespace robsim {

std::string_view to_string(DefenseMode m) {
  switch (m) {
    case DefenseMode::Unprotected: return "unprotected";
    case DefenseMode::Dom: return "dom";
    case DefenseMode::DomPlusInvarspec: return "dom_plus_invarspec";
  }
  return "?";
}

std::string_view to_string(Mitigation m) {
  switch (m) {
    case Mitigation::ConservativeInvariance: return "conservative_invariance";
    case Mitigation::PathBalancing: return "path_balancing";
    case Mitigation::OperandIndependentFill: return "operand_independent_fill";
  }
  return "?";
}

std::optional<DefenseMode> parse_defense_mode(std::string_view s) {
  for (auto m : {DefenseMode::Unprotected, DefenseMode::Dom, DefenseMode::DomPlusInvarspec})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

std::optional<Mitigation> parse_mitigation(std::string_view s) {
  for (auto m : {Mitigation::ConservativeInvariance, Mitigation::PathBalancing, Mitigation::OperandIndependentFill})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

std::string mitigations_label(const std::set<Mitigation>& m) {
  if (m.empty()) return "none";
  std::string out;
  for (auto x : m) {
    if (!out.empty()) out += '+';
    out += to_string(x);
  }
  return out;
}

void DefensePolicy::validate(const Program& program) const {
  if (mode == DefenseMode::DomPlusInvarspec && safe_sets.size() != program.size())
    throw std::invalid_argument("dom_plus_invarspec needs one safe set per instruction (have " +
                                std::to_string(safe_sets.size()) + ", program has " +
                                std::to_string(program.size()) + ")");
  if (has(Mitigation::PathBalancing)) verify_balancing_certificate(program);
  if (has(Mitigation::OperandIndependentFill) && predicted_rep_count == 0)
    throw std::invalid_argument("predicted REP count must be >= 1");
}

GateDecision dom_gate(const RobEntry& load, const CacheState& cache) {
  return cache.resident(load.address) ? GateDecision::ExecuteHitDeferred : GateDecision::Delay;
}

namespace {

// Youngest ROB entry older than `before` belonging to static instruction `id`.
const RobEntry* member_instance(const Rob& rob, SeqNum before, InstrId id) {
  for (auto it = rob.rbegin(); it != rob.rend(); ++it)
    if (it->seq < before && it->uop.parent == id) return &*it;
  return nullptr;
}

bool members_osp(const RobEntry& entry, const Rob& rob, const DefensePolicy& policy) {
  const InstrId id = entry.uop.parent;
  if (id >= policy.safe_sets.size()) return false;
  for (InstrId m : policy.safe_sets[id].members) {
    const RobEntry* inst = member_instance(rob, entry.seq, m);
    if (inst && !inst->osp) return false;  // absent instances have committed
  }
  return true;
}

}  // namespace

bool osp_reached(const RobEntry& entry, const Rob& rob, const DefensePolicy& policy) {
  if (!entry.done) return false;
  if (!entry.shadow) return true;
  if (!members_osp(entry, rob, policy)) return false;
  for (const auto& p : entry.producers) {
    if (!p) continue;
    const RobEntry* prod = find_entry(rob, *p);
    if (prod && !prod->osp) return false;
  }
  return true;
}

void compute_osp(Rob& rob, const DefensePolicy& policy) {
  for (auto& e : rob) e.osp = false;
  for (bool changed = true; changed;) {
    changed = false;
    for (auto& e : rob) {
      bool v = osp_reached(e, rob, policy);
      if (v != e.osp) {
        e.osp = v;
        changed = true;
      }
    }
  }
}

InvarianceTag esp_check(RobEntry& entry, const Rob& rob, const DefensePolicy& policy, Cycle now) {
  if (!entry.esp && members_osp(entry, rob, policy)) {
    entry.esp = true;
    entry.esp_cycle = now;
  }
  return {entry.uop.parent, entry.esp, entry.esp_cycle};
}

FillDecision gate_rob_fill(const MicroOp& uop, bool secret_tainted, const DefensePolicy& policy) {
  if (uop.latency_class != LatencyClass::String || !secret_tainted || !policy.has(Mitigation::OperandIndependentFill))
    return FillDecision::Dispatch;
  return uop.seq < policy.predicted_rep_count ? FillDecision::DispatchPredicted : FillDecision::Block;
}

}  // namespace robsim
