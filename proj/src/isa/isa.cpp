#include "robsim/isa.hpp"

#include <algorithm>
#include <cstdio>

namespace robsim {

std::string_view to_string(Opcode op) {
  switch (op) {
    case Opcode::Load: return "load";
    case Opcode::Store: return "store";
    case Opcode::Alu: return "alu";
    case Opcode::Branch: return "branch";
    case Opcode::Jump: return "jump";
    case Opcode::RepMovs: return "rep_movs";
    case Opcode::RepLods: return "rep_lods";
    case Opcode::Fence: return "fence";
    case Opcode::SetShift: return "setshift";
    case Opcode::Nop: return "nop";
  }
  return "?";
}

std::string_view to_string(UopKind kind) {
  switch (kind) {
    case UopKind::MemRead: return "mem_read";
    case UopKind::MemWrite: return "mem_write";
    case UopKind::Alu: return "alu";
    case UopKind::BranchResolve: return "branch_resolve";
    case UopKind::Nop: return "nop";
  }
  return "?";
}

bool is_rep(Opcode op) { return op == Opcode::RepMovs || op == Opcode::RepLods; }
bool is_control(Opcode op) { return op == Opcode::Branch || op == Opcode::Jump; }

std::string AddressExpr::canonical() const {
  char buf[64];
  if (!base) {
    std::snprintf(buf, sizeof buf, "[0x%llx]", static_cast<unsigned long long>(offset));
  } else if (offset == 0) {
    std::snprintf(buf, sizeof buf, "[r%u]", unsigned{*base});
  } else {
    std::snprintf(buf, sizeof buf, "[r%u%+lld]", unsigned{*base}, static_cast<long long>(offset));
  }
  return buf;
}

std::vector<Reg> MacroInstruction::read_regs() const {
  std::vector<Reg> regs;
  for (const auto& s : srcs)
    if (s.is_reg()) regs.push_back(s.reg);
  if ((opcode == Opcode::Load || opcode == Opcode::Store) && addr.base) regs.push_back(*addr.base);
  if (is_rep(opcode)) regs.push_back(counter);
  return regs;
}

std::optional<Reg> MacroInstruction::written_reg() const {
  if (is_rep(opcode)) return counter;
  return dest;
}

void Program::renumber() {
  labels.clear();
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    auto& in = instructions[i];
    in.id = static_cast<InstrId>(i);
    if (!in.label.empty()) labels[in.label] = in.id;
  }
  for (auto& in : instructions) {
    if (is_control(in.opcode)) in.target = labels.at(in.target_label);
  }
}

// ---- expansion ----

std::uint64_t rep_expansion_count(Opcode op, std::uint64_t n) {
  switch (op) {
    case Opcode::RepMovs: return 2 * n;
    case Opcode::RepLods: return 5 * n + 12;
    default: return 1;
  }
}

MicroOp make_uop(const MacroInstruction& instr, std::uint32_t index, std::uint64_t count) {
  MicroOp u;
  u.parent = instr.id;
  u.seq = index;
  switch (instr.opcode) {
    case Opcode::Load:
      u.kind = UopKind::MemRead;
      u.latency_class = LatencyClass::Load;
      u.dest = instr.dest;
      u.srcs = instr.read_regs();
      break;
    case Opcode::Store:
      u.kind = UopKind::MemWrite;
      u.latency_class = LatencyClass::Store;
      u.srcs = instr.read_regs();
      break;
    case Opcode::Alu:
    case Opcode::SetShift:
      u.kind = UopKind::Alu;
      u.latency_class = LatencyClass::Alu;
      u.dest = instr.dest;
      u.srcs = instr.read_regs();
      break;
    case Opcode::Branch:
      u.kind = UopKind::BranchResolve;
      u.latency_class = LatencyClass::Branch;
      u.srcs = instr.read_regs();
      break;
    case Opcode::Jump:
    case Opcode::Nop:
      u.kind = UopKind::Nop;
      u.latency_class = LatencyClass::Nop;
      break;
    case Opcode::Fence:
      u.kind = UopKind::Nop;
      u.latency_class = LatencyClass::Fence;
      break;
    case Opcode::RepMovs:
    case Opcode::RepLods:
      // The counter is consumed at decode; the final uop retires it to zero.
      u.kind = UopKind::Alu;
      u.latency_class = LatencyClass::String;
      if (index + 1 == count) u.dest = instr.counter;
      break;
  }
  return u;
}

Expansion expand_macro(const MacroInstruction& instr, std::uint64_t counter_value, std::uint64_t cap) {
  Expansion out;
  out.requested = is_rep(instr.opcode) ? rep_expansion_count(instr.opcode, counter_value) : 1;
  std::uint64_t count = out.requested;
  if (is_rep(instr.opcode) && count > cap) {
    count = cap;
    out.capped = true;
  }
  out.uops.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.uops.push_back(make_uop(instr, static_cast<std::uint32_t>(i), count));
  return out;
}

}  // namespace robsim
