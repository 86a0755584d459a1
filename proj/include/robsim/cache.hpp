#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "robsim/isa.hpp"

namespace robsim {

using Cycle = std::uint64_t;

struct CacheConfig {
  std::uint32_t num_sets = 64;
  std::uint32_t ways = 1;
  std::uint32_t line_bytes = 64;
  Cycle hit_cycles = 3;
  Cycle miss_cycles = 60;
  std::uint32_t mshr_entries = 10;
  /// Uniform +/- jitter applied to miss latency; 0 disables.
  Cycle miss_jitter = 0;
  std::uint64_t jitter_seed = 0;

  static constexpr std::uint32_t kUnboundedMshrs = std::numeric_limits<std::uint32_t>::max();

  void validate() const;
};

enum class AccessOutcome : std::uint8_t { Hit, Miss, MshrStall };

std::string_view to_string(AccessOutcome o);

struct AccessResult {
  AccessOutcome outcome = AccessOutcome::Hit;
  Cycle latency = 0;
  /// Cycle the line becomes resident (misses only).
  std::optional<Cycle> fill_cycle;
  bool coalesced = false;
};

struct MshrEntry {
  Addr line = 0;
  Cycle issue_cycle = 0;
  Cycle fill_cycle = 0;
};

enum class MemEventKind : std::uint8_t { Access, Fill, Touch };

struct MemEvent {
  MemEventKind kind = MemEventKind::Access;
  Cycle cycle = 0;
  Addr address = 0;
  Addr line = 0;
  AccessOutcome outcome = AccessOutcome::Hit;
  std::optional<Cycle> fill_cycle;
  bool deferred = false;

  friend bool operator==(const MemEvent&, const MemEvent&) = default;
};

/// Single-level L1 with inspectable LRU order and a bounded MSHR table.
/// Tags are stored as line base addresses, most-recent-first per set.
class CacheState {
 public:
  explicit CacheState(CacheConfig config = {});

  const CacheConfig& config() const { return config_; }

  Addr line_of(Addr address) const { return address / config_.line_bytes * config_.line_bytes; }
  std::uint32_t set_of(Addr address) const {
    return static_cast<std::uint32_t>((address / config_.line_bytes) % config_.num_sets);
  }

  bool resident(Addr address) const;
  bool in_flight(Addr address) const;

  /// With `deferred` set a hit leaves the replacement order untouched; the
  /// caller owns applying `touch` later.
  AccessResult access(Addr address, Cycle cycle, bool deferred = false);

  /// Promotes a resident line to most-recent. No-op if absent.
  void touch(Addr address, Cycle cycle);

  /// Lands every MSHR whose fill cycle has been reached.
  void tick(Cycle cycle);

  /// Makes a line resident immediately, as if filled before time zero.
  void install(Addr address);

  void flush(Addr address);

  std::vector<Addr> snapshot_set(std::uint32_t set_index) const;

  const std::vector<MshrEntry>& mshrs() const { return mshrs_; }
  const std::vector<MemEvent>& events() const { return events_; }

 private:
  void insert_line(Addr line);
  Cycle miss_latency();

  CacheConfig config_;
  std::vector<std::vector<Addr>> sets_;
  std::vector<MshrEntry> mshrs_;
  std::vector<MemEvent> events_;
  std::mt19937_64 rng_;
};

}  // namespace robsim
