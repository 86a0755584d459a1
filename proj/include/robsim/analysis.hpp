#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "robsim/isa.hpp"

namespace robsim {

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Instruction-level CFG. Node `size()` is the virtual exit.
struct ControlFlowGraph {
  std::vector<std::vector<InstrId>> succ;
  std::vector<std::vector<InstrId>> pred;

  std::size_t size() const { return succ.size() - 1; }
  InstrId exit() const { return static_cast<InstrId>(size()); }
};

ControlFlowGraph build_cfg(const Program& program);

/// Immediate post-dominator per node (exit for nodes that fall off the end);
/// nullopt for nodes that cannot reach the exit.
std::vector<std::optional<InstrId>> immediate_post_dominators(const ControlFlowGraph& cfg);

enum class DepKind : std::uint8_t { Data, Memory, Control };

struct DepEdge {
  InstrId from = 0;
  InstrId to = 0;
  DepKind kind = DepKind::Data;

  friend auto operator<=>(const DepEdge&, const DepEdge&) = default;
};

struct DependenceGraph {
  std::size_t num_nodes = 0;
  std::vector<DepEdge> edges;  // sorted, unique

  std::vector<DepEdge> into(InstrId to) const;
};

/// Register def-use via reaching definitions, memory def-use by syntactic
/// address equality, control edges from the post-dominance frontier.
DependenceGraph build_dependence_graph(const Program& program);

struct SafeSet {
  InstrId instr = 0;
  std::set<InstrId> members;

  friend bool operator==(const SafeSet&, const SafeSet&) = default;
};

using SafeSets = std::vector<SafeSet>;

/// SS(i): transitive dependence sources of i, restricted to older instructions.
SafeSets compute_safe_sets(const Program& program);
SafeSets compute_safe_sets(const DependenceGraph& graph);

struct Reconvergence {
  std::optional<InstrId> point;
  std::string diagnostic;
};

Reconvergence find_reconvergence(const Program& program, InstrId branch);

struct PathRange {
  std::uint64_t min = 0;
  std::uint64_t max = 0;

  friend bool operator==(const PathRange&, const PathRange&) = default;
};

inline constexpr std::uint64_t kUnboundedPath = std::numeric_limits<std::uint64_t>::max();

struct PathProfile {
  InstrId branch = 0;
  InstrId reconvergence = 0;
  PathRange taken;
  PathRange fallthrough;
  std::uint64_t min = 0;
  std::uint64_t max = 0;
  bool variable = false;
  /// Instructions statically reachable from the reconvergence point.
  std::vector<InstrId> after_reconvergence;

  bool balanced() const { return !variable && min == max; }
  friend bool operator==(const PathProfile&, const PathProfile&) = default;
};

/// Throws AnalysisError when the branch has no usable reconvergence point.
PathProfile analyze_paths(const Program& program, InstrId branch);

struct ProgramAnalysis {
  SafeSets safe_sets;
  std::vector<PathProfile> profiles;
  std::vector<std::string> diagnostics;
};

ProgramAnalysis analyze_program(const Program& program);

/// Adds the branch to the safe set of every instruction at/after the
/// reconvergence point of each variable or unequal-length branch.
SafeSets conservative_filter(const SafeSets& safe_sets, const std::vector<PathProfile>& profiles);

/// Pads the shorter side of `branch` with NOPs until both sides carry the
/// same uop count. Refuses variable paths.
Program balance_paths(const Program& program, InstrId branch);

struct BalanceOutcome {
  Program program;
  std::vector<std::string> refusals;
};

/// Balances every analyzable branch to a fixed point.
BalanceOutcome balance_all(const Program& program);

/// Throws AnalysisError unless every certified branch is balanced.
void verify_balancing_certificate(const Program& program);

// Sidecar file: instr id -> SS members, per-branch PathProfile.
void write_sidecar(std::ostream& out, const ProgramAnalysis& analysis);
ProgramAnalysis read_sidecar(std::istream& in);

}  // namespace robsim
