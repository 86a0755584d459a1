#include "robsim/cache.hpp"

#include <algorithm>
#include <stdexcept>

namespace robsim {

std::string_view to_string(AccessOutcome o) {
  switch (o) {
    case AccessOutcome::Hit: return "hit";
    case AccessOutcome::Miss: return "miss";
    case AccessOutcome::MshrStall: return "mshr_stall";
  }
  return "?";
}

void CacheConfig::validate() const {
  if (num_sets == 0 || ways == 0 || line_bytes == 0) throw std::invalid_argument("cache geometry must be non-zero");
  if (mshr_entries == 0) throw std::invalid_argument("mshr_entries must be >= 1");
  if (hit_cycles == 0 || miss_cycles <= hit_cycles) throw std::invalid_argument("require 0 < hit_cycles < miss_cycles");
  if (miss_jitter >= miss_cycles - hit_cycles) throw std::invalid_argument("miss_jitter must stay below the hit/miss gap");
}

CacheState::CacheState(CacheConfig config)
    : config_(config), sets_(config.num_sets), rng_(config.jitter_seed) {
  config_.validate();
}

bool CacheState::resident(Addr address) const {
  const auto& set = sets_[set_of(address)];
  return std::find(set.begin(), set.end(), line_of(address)) != set.end();
}

bool CacheState::in_flight(Addr address) const {
  Addr line = line_of(address);
  return std::any_of(mshrs_.begin(), mshrs_.end(), [&](const MshrEntry& m) { return m.line == line; });
}

Cycle CacheState::miss_latency() {
  if (config_.miss_jitter == 0) return config_.miss_cycles;
  std::uniform_int_distribution<std::int64_t> d(-static_cast<std::int64_t>(config_.miss_jitter),
                                                static_cast<std::int64_t>(config_.miss_jitter));
  return static_cast<Cycle>(static_cast<std::int64_t>(config_.miss_cycles) + d(rng_));
}

AccessResult CacheState::access(Addr address, Cycle cycle, bool deferred) {
  Addr line = line_of(address);
  auto& set = sets_[set_of(address)];
  MemEvent ev{MemEventKind::Access, cycle, address, line, AccessOutcome::Hit, std::nullopt, deferred};

  if (auto it = std::find(set.begin(), set.end(), line); it != set.end()) {
    if (!deferred) std::rotate(set.begin(), it, it + 1);
    events_.push_back(ev);
    return {AccessOutcome::Hit, config_.hit_cycles, std::nullopt, false};
  }

  if (auto m = std::find_if(mshrs_.begin(), mshrs_.end(), [&](const MshrEntry& e) { return e.line == line; });
      m != mshrs_.end()) {
    ev.outcome = AccessOutcome::Miss;
    ev.fill_cycle = m->fill_cycle;
    events_.push_back(ev);
    return {AccessOutcome::Miss, m->fill_cycle - cycle, m->fill_cycle, true};
  }

  if (config_.mshr_entries != CacheConfig::kUnboundedMshrs && mshrs_.size() >= config_.mshr_entries) {
    return {AccessOutcome::MshrStall, 0, std::nullopt, false};
  }

  Cycle latency = miss_latency();
  mshrs_.push_back({line, cycle, cycle + latency});
  ev.outcome = AccessOutcome::Miss;
  ev.fill_cycle = cycle + latency;
  events_.push_back(ev);
  return {AccessOutcome::Miss, latency, cycle + latency, false};
}

void CacheState::touch(Addr address, Cycle cycle) {
  Addr line = line_of(address);
  auto& set = sets_[set_of(address)];
  if (auto it = std::find(set.begin(), set.end(), line); it != set.end()) {
    std::rotate(set.begin(), it, it + 1);
    events_.push_back({MemEventKind::Touch, cycle, address, line, AccessOutcome::Hit, std::nullopt, false});
  }
}

void CacheState::insert_line(Addr line) {
  auto& set = sets_[set_of(line)];
  if (auto it = std::find(set.begin(), set.end(), line); it != set.end()) set.erase(it);
  set.insert(set.begin(), line);
  if (set.size() > config_.ways) set.pop_back();
}

void CacheState::tick(Cycle cycle) {
  // Fill in MSHR allocation order so same-cycle fills are deterministic.
  auto landed = [&](const MshrEntry& m) { return m.fill_cycle <= cycle; };
  for (const auto& m : mshrs_) {
    if (!landed(m)) continue;
    insert_line(m.line);
    events_.push_back({MemEventKind::Fill, m.fill_cycle, m.line, m.line, AccessOutcome::Miss, m.fill_cycle, false});
  }
  std::erase_if(mshrs_, landed);
}

void CacheState::install(Addr address) { insert_line(line_of(address)); }

void CacheState::flush(Addr address) {
  Addr line = line_of(address);
  auto& set = sets_[set_of(address)];
  std::erase(set, line);
}

std::vector<Addr> CacheState::snapshot_set(std::uint32_t set_index) const { return sets_.at(set_index); }

}  // namespace robsim
