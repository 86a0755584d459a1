#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace robsim {

using Addr = std::uint64_t;
using Word = std::int64_t;
using InstrId = std::uint32_t;
using Reg = std::uint8_t;

inline constexpr Reg kNumRegs = 32;

enum class Opcode : std::uint8_t {
  Load,
  Store,
  Alu,
  Branch,
  Jump,
  RepMovs,
  RepLods,
  Fence,
  SetShift,
  Nop,
};

std::string_view to_string(Opcode op);
bool is_rep(Opcode op);
bool is_control(Opcode op);

/// A register or an immediate source operand.
struct Operand {
  enum class Kind : std::uint8_t { Reg, Imm };
  Kind kind = Kind::Imm;
  Reg reg = 0;
  Word imm = 0;

  static Operand of_reg(Reg r) { return {Kind::Reg, r, 0}; }
  static Operand of_imm(Word v) { return {Kind::Imm, 0, v}; }
  bool is_reg() const { return kind == Kind::Reg; }

  friend bool operator==(const Operand&, const Operand&) = default;
};

/// `[base + offset]`; base is optional.
struct AddressExpr {
  std::optional<Reg> base;
  Word offset = 0;

  std::string canonical() const;
  friend bool operator==(const AddressExpr&, const AddressExpr&) = default;
};

/// One static instruction. Operand meaning depends on the opcode:
///   load     dest, [addr]
///   store    srcs[0], [addr]
///   alu      dest, srcs[0] (+ srcs[1])
///   setshift dest, srcs[0], shift
///   branch   srcs[0], target      (taken iff srcs[0] != 0)
///   jump     target
///   rep_*    counter
struct MacroInstruction {
  InstrId id = 0;
  Opcode opcode = Opcode::Nop;
  std::optional<Reg> dest;
  std::vector<Operand> srcs;
  AddressExpr addr;
  unsigned shift = 0;
  Reg counter = 0;
  std::string target_label;
  InstrId target = 0;
  std::string label;

  /// Registers read when the instruction executes.
  std::vector<Reg> read_regs() const;
  /// Register written, if any (REP writes its counter).
  std::optional<Reg> written_reg() const;

  friend bool operator==(const MacroInstruction&, const MacroInstruction&) = default;
};

struct Program {
  std::vector<MacroInstruction> instructions;
  std::map<std::string, InstrId> labels;
  std::map<Addr, Word> data_init;
  std::set<Addr> warm_lines;
  std::set<Addr> flush_lines;
  std::map<Reg, Word> reg_init;
  std::map<InstrId, bool> forced_predictions;
  /// Branches certified balanced by balance_paths.
  std::set<InstrId> balanced_branches;

  std::size_t size() const { return instructions.size(); }
  const MacroInstruction& at(InstrId id) const { return instructions.at(id); }

  /// Re-derives ids, the label map and branch targets after an edit.
  void renumber();

  friend bool operator==(const Program&, const Program&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline constexpr Addr kDefaultAddressSpace = Addr{1} << 24;

Program parse_program(std::string_view text, Addr address_space = kDefaultAddressSpace);
std::string print_program(const Program& program);

// ---- decode-time expansion ----

enum class UopKind : std::uint8_t { MemRead, MemWrite, Alu, BranchResolve, Nop };
enum class LatencyClass : std::uint8_t { Load, Store, Alu, Branch, Nop, Fence, String };

std::string_view to_string(UopKind kind);

struct MicroOp {
  InstrId parent = 0;
  std::uint32_t seq = 0;
  UopKind kind = UopKind::Nop;
  LatencyClass latency_class = LatencyClass::Nop;
  std::optional<Reg> dest;
  std::vector<Reg> srcs;

  friend bool operator==(const MicroOp&, const MicroOp&) = default;
};

inline constexpr std::uint64_t kDefaultExpansionCap = 4096;

/// Uop count of a REP_* for counter value n, before capping.
std::uint64_t rep_expansion_count(Opcode op, std::uint64_t n);

struct Expansion {
  std::vector<MicroOp> uops;
  std::uint64_t requested = 0;
  bool capped = false;
};

Expansion expand_macro(const MacroInstruction& instr, std::uint64_t counter_value,
                       std::uint64_t cap = kDefaultExpansionCap);

/// Single uop `index` of an expansion of `count` uops, without materialising the rest.
MicroOp make_uop(const MacroInstruction& instr, std::uint32_t index, std::uint64_t count);

}  // namespace robsim
