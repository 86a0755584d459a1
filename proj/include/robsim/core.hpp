#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "robsim/cache.hpp"
#include "robsim/defense.hpp"
#include "robsim/isa.hpp"
#include "robsim/rob.hpp"

namespace robsim {

struct CoreConfig {
  std::uint32_t rob_size = 64;
  std::uint32_t decode_width = 4;
  std::uint32_t commit_width = 4;
  std::uint32_t load_ports = 1;
  std::uint32_t alu_ports = 1;
  Cycle alu_latency = 1;
  Cycle string_latency = 1;
  Cycle store_latency = 1;
  /// Cycles from operands ready to resolution.
  Cycle branch_latency = 1;
  std::uint64_t expansion_cap = kDefaultExpansionCap;
  Cycle cycle_limit = 1'000'000;

  std::uint32_t decode_queue_size() const { return 2 * decode_width; }
  void validate() const;
};

struct SimConfig {
  CoreConfig core;
  CacheConfig cache;
};

/// Forced outcomes first, 2-bit counters otherwise (backward branches start
/// weakly taken, forward ones weakly not-taken).
class BranchPredictor {
 public:
  explicit BranchPredictor(std::map<InstrId, bool> forced = {}) : forced_(std::move(forced)) {}

  bool predict(const MacroInstruction& branch) const;
  void update(const MacroInstruction& branch, bool taken);
  bool forced(InstrId id) const { return forced_.contains(id); }

 private:
  std::map<InstrId, bool> forced_;
  std::map<InstrId, std::uint8_t> counters_;
};

struct UopRecord {
  SeqNum seq = 0;
  InstrId instr = 0;
  std::uint32_t uop_index = 0;
  UopKind kind = UopKind::Nop;
  std::optional<Cycle> dispatch;
  std::optional<Cycle> ready;
  std::optional<Cycle> exec_start;
  std::optional<Cycle> complete;
  std::optional<Cycle> commit;
  std::optional<InstrId> shadow;
  std::optional<Cycle> unshadow;
  bool squashed = false;
  Addr address = 0;
  std::optional<AccessOutcome> outcome;
  Cycle mem_latency = 0;
  bool deferred = false;
  bool lifted = false;
  std::optional<Cycle> esp;

  friend bool operator==(const UopRecord&, const UopRecord&) = default;
};

struct RepExpansionRecord {
  Cycle cycle = 0;
  InstrId instr = 0;
  Word counter = 0;
  std::uint64_t requested = 0;
  std::uint64_t emitted = 0;
  bool capped = false;
  bool predicted = false;

  friend bool operator==(const RepExpansionRecord&, const RepExpansionRecord&) = default;
};

enum class SquashReason : std::uint8_t { BranchMispredict, RepCountMispredict };

struct SquashRecord {
  Cycle cycle = 0;
  InstrId instr = 0;
  SeqNum seq = 0;
  SquashReason reason = SquashReason::BranchMispredict;
  std::uint64_t squashed_uops = 0;

  friend bool operator==(const SquashRecord&, const SquashRecord&) = default;
};

struct CoreStats {
  Cycle cycles = 0;
  std::uint64_t committed = 0;
  std::uint64_t squashed_uops = 0;
  std::uint64_t squashes = 0;
  std::uint64_t dispatch_stalls = 0;
  std::uint64_t rep_decode_stalls = 0;
  std::uint64_t mshr_stalls = 0;
  std::uint32_t peak_occupancy = 0;
  /// occupancy_histogram[k] = cycles spent with k entries.
  std::vector<std::uint64_t> occupancy_histogram;

  friend bool operator==(const CoreStats&, const CoreStats&) = default;
};

struct Trace {
  /// Dispatched uops in sequence order, committed or squashed.
  std::vector<UopRecord> uops;
  /// ROB occupancy at the end of each cycle.
  std::vector<std::uint32_t> occupancy;
  std::vector<MemEvent> mem_events;
  std::vector<RepExpansionRecord> rep_expansions;
  std::vector<SquashRecord> squashes;
  std::vector<std::string> warnings;
  CoreStats stats;
  std::array<Word, kNumRegs> final_regs{};
  std::map<Addr, Word> final_memory;

  /// Committed records of static instruction `id`, in order.
  std::vector<const UopRecord*> committed(InstrId id) const;

  friend bool operator==(const Trace&, const Trace&) = default;
};

std::string uops_csv(const Trace& trace);
std::string occupancy_csv(const Trace& trace);

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cycle-stepped out-of-order core over a caller-owned cache.
class Core {
 public:
  Core(const Program& program, const CoreConfig& config, const DefensePolicy& policy, CacheState& cache);

  bool halted() const;
  /// Advances one cycle. Throws SimulationError past the cycle limit.
  void step();

  Cycle cycle() const { return cycle_; }
  const Rob& rob() const { return rob_; }
  const std::array<Word, kNumRegs>& arch_regs() const { return regs_; }

  /// Finalizes and hands over the trace; the core must be halted.
  Trace finish();

 private:
  struct PendingRep {
    InstrId instr = 0;
    std::uint64_t count = 0;
    std::uint64_t emitted = 0;
    bool predicted = false;
    std::uint64_t actual = 0;
  };

  void writeback();
  void squash_after(std::size_t rob_index, bool inclusive, InstrId refetch_pc, SquashReason reason, InstrId instr,
                    SeqNum seq);
  void verify_rep_predictions();
  void update_invariance();
  void commit();
  void issue();
  void dispatch();
  void fetch();
  bool fetch_rep(std::uint32_t& slots);
  void push_uop(const MacroInstruction& in, std::uint32_t index, std::uint64_t count);
  void record(const RobEntry& e);
  void rebuild_rename();

  bool operands_ready(const RobEntry& e) const;
  Word operand(const RobEntry& e, Reg r) const;
  Word load_value(Addr a) const;
  void execute(RobEntry& e);
  Cycle latency_of(const RobEntry& e) const;
  bool unresolved_branch_in_flight() const;

  const Program& program_;
  CoreConfig config_;
  const DefensePolicy& policy_;
  CacheState& cache_;
  BranchPredictor predictor_;

  Cycle cycle_ = 0;
  Cycle fetch_resume_ = 0;
  InstrId pc_ = 0;
  SeqNum next_seq_ = 0;
  std::optional<PendingRep> pending_rep_;
  std::deque<RobEntry> decode_queue_;
  Rob rob_;
  std::array<std::optional<SeqNum>, kNumRegs> rename_{};
  std::array<Word, kNumRegs> regs_{};
  std::map<Addr, Word> memory_;
  Trace trace_;
};

struct RunResult {
  Trace trace;
  CacheState cache;
};

/// Builds the cache (warm/flush directives applied), runs to halt.
RunResult run(const Program& program, const SimConfig& config, const DefensePolicy& policy = {});

}  // namespace robsim
