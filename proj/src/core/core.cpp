#include "robsim/core.hpp"

#include <algorithm>
#include <sstream>

namespace robsim {

void CoreConfig::validate() const {
  if (rob_size == 0 || decode_width == 0 || commit_width == 0) throw std::invalid_argument("core widths and rob_size must be >= 1");
  if (load_ports == 0 || alu_ports == 0) throw std::invalid_argument("core needs at least one load and one ALU port");
  if (alu_latency == 0 || string_latency == 0 || store_latency == 0 || branch_latency == 0)
    throw std::invalid_argument("latencies must be >= 1");
  if (expansion_cap == 0) throw std::invalid_argument("expansion_cap must be >= 1");
}

// ---- predictor ----

bool BranchPredictor::predict(const MacroInstruction& branch) const {
  if (auto it = forced_.find(branch.id); it != forced_.end()) return it->second;
  if (auto it = counters_.find(branch.id); it != counters_.end()) return it->second >= 2;
  return branch.target <= branch.id;
}

void BranchPredictor::update(const MacroInstruction& branch, bool taken) {
  if (forced(branch.id)) return;
  auto [it, inserted] = counters_.try_emplace(branch.id, branch.target <= branch.id ? 2 : 1);
  if (taken && it->second < 3) ++it->second;
  if (!taken && it->second > 0) --it->second;
}

// ---- trace ----

std::vector<const UopRecord*> Trace::committed(InstrId id) const {
  std::vector<const UopRecord*> out;
  for (const auto& r : uops)
    if (r.instr == id && r.commit) out.push_back(&r);
  return out;
}

namespace {

template <typename T>
std::string opt(const std::optional<T>& v) {
  return v ? std::to_string(*v) : std::string{};
}

}  // namespace

std::string uops_csv(const Trace& trace) {
  std::ostringstream out;
  out << "seq,instr,uop,kind,dispatch,ready,exec_start,complete,commit,shadow,unshadow,squashed,address,outcome,"
         "mem_latency,deferred,lifted,esp\n";
  for (const auto& r : trace.uops) {
    out << r.seq << ',' << r.instr << ',' << r.uop_index << ',' << to_string(r.kind) << ',' << opt(r.dispatch) << ','
        << opt(r.ready) << ',' << opt(r.exec_start) << ',' << opt(r.complete) << ',' << opt(r.commit) << ','
        << opt(r.shadow) << ',' << opt(r.unshadow) << ',' << (r.squashed ? 1 : 0) << ',';
    if (r.kind == UopKind::MemRead || r.kind == UopKind::MemWrite) out << "0x" << std::hex << r.address << std::dec;
    out << ',' << (r.outcome ? std::string(to_string(*r.outcome)) : std::string{}) << ',' << r.mem_latency << ','
        << (r.deferred ? 1 : 0) << ',' << (r.lifted ? 1 : 0) << ',' << opt(r.esp) << '\n';
  }
  return out.str();
}

std::string occupancy_csv(const Trace& trace) {
  std::ostringstream out;
  out << "cycle,occupancy\n";
  for (std::size_t c = 0; c < trace.occupancy.size(); ++c) out << c << ',' << trace.occupancy[c] << '\n';
  return out.str();
}

// ---- core ----

Core::Core(const Program& program, const CoreConfig& config, const DefensePolicy& policy, CacheState& cache)
    : program_(program), config_(config), policy_(policy), cache_(cache), predictor_(program.forced_predictions) {
  config_.validate();
  policy_.validate(program_);
  for (auto [r, v] : program_.reg_init) regs_.at(r) = v;
  memory_ = program_.data_init;
  trace_.stats.occupancy_histogram.assign(config_.rob_size + 1, 0);
}

bool Core::halted() const { return pc_ >= program_.size() && !pending_rep_ && decode_queue_.empty() && rob_.empty(); }

void Core::step() {
  if (cycle_ >= config_.cycle_limit) {
    std::ostringstream msg;
    msg << "cycle limit " << config_.cycle_limit << " exceeded; occupancy " << rob_.size() << "/" << config_.rob_size
        << ", pc " << pc_;
    if (!rob_.empty()) {
      const auto& h = rob_.front();
      msg << "; head @" << h.uop.parent << " uop " << h.uop.seq << " (" << to_string(h.opcode) << ", "
          << (h.exec_start_cycle ? "executing" : "waiting") << ")";
    }
    throw SimulationError(msg.str());
  }
  cache_.tick(cycle_);
  writeback();
  compute_shadows(rob_, cycle_);
  verify_rep_predictions();
  if (policy_.mode == DefenseMode::DomPlusInvarspec) update_invariance();
  commit();
  issue();
  dispatch();
  fetch();

  const auto occ = static_cast<std::uint32_t>(rob_.size());
  if (occ > config_.rob_size) throw SimulationError("ROB occupancy exceeded rob_size");
  trace_.occupancy.push_back(occ);
  ++trace_.stats.occupancy_histogram[occ];
  trace_.stats.peak_occupancy = std::max(trace_.stats.peak_occupancy, occ);
  ++cycle_;
}

void Core::writeback() {
  std::optional<std::size_t> mispredict;
  for (std::size_t i = 0; i < rob_.size(); ++i) {
    auto& e = rob_[i];
    if (e.done || !e.complete_cycle || *e.complete_cycle > cycle_) continue;
    e.done = true;
    if (!e.is_branch()) continue;
    predictor_.update(program_.at(e.uop.parent), e.taken);
    if (e.taken != e.predicted_taken && !mispredict) mispredict = i;
  }
  if (mispredict) {
    const auto& b = rob_[*mispredict];
    const auto& in = program_.at(b.uop.parent);
    squash_after(*mispredict, false, b.taken ? in.target : in.id + 1, SquashReason::BranchMispredict, in.id, b.seq);
  }
}

void Core::squash_after(std::size_t rob_index, bool inclusive, InstrId refetch_pc, SquashReason reason, InstrId instr,
                        SeqNum seq) {
  const std::size_t start = inclusive ? rob_index : rob_index + 1;
  std::uint64_t count = 0;
  for (std::size_t j = start; j < rob_.size(); ++j) {
    rob_[j].squashed = true;
    record(rob_[j]);
    ++count;
  }
  rob_.erase(rob_.begin() + static_cast<std::ptrdiff_t>(start), rob_.end());
  decode_queue_.clear();
  pending_rep_.reset();
  rebuild_rename();
  pc_ = refetch_pc;
  fetch_resume_ = cycle_ + 1;
  ++trace_.stats.squashes;
  trace_.stats.squashed_uops += count;
  trace_.squashes.push_back({cycle_, instr, seq, reason, count});
}

void Core::verify_rep_predictions() {
  for (std::size_t i = 0; i < rob_.size(); ++i) {
    auto& e = rob_[i];
    if (!e.rep_predicted || e.rep_verified || e.shadow) continue;
    if (e.rep_actual == std::min(policy_.predicted_rep_count, config_.expansion_cap)) {
      e.rep_verified = true;
      continue;
    }
    squash_after(i, true, e.uop.parent, SquashReason::RepCountMispredict, e.uop.parent, e.seq);
    return;
  }
}

void Core::update_invariance() {
  compute_osp(rob_, policy_);
  for (auto& e : rob_) esp_check(e, rob_, policy_, cycle_);
}

void Core::commit() {
  for (std::uint32_t n = 0; n < config_.commit_width && !rob_.empty(); ++n) {
    auto& e = rob_.front();
    if (!e.done) break;
    e.commit_cycle = cycle_;
    if (e.uop.dest) {
      regs_[*e.uop.dest] = e.value;
      if (rename_[*e.uop.dest] == e.seq) rename_[*e.uop.dest].reset();
    }
    if (e.uop.kind == UopKind::MemWrite) memory_[e.address] = e.value;
    if (e.deferred_touch) cache_.touch(e.address, cycle_);
    record(e);
    ++trace_.stats.committed;
    rob_.pop_front();
  }
}

bool Core::operands_ready(const RobEntry& e) const {
  if (!e.dispatch_cycle || *e.dispatch_cycle >= cycle_) return false;
  for (const auto& p : e.producers) {
    if (!p) continue;
    const RobEntry* prod = find_entry(rob_, *p);
    if (prod && !prod->done) return false;
  }
  return true;
}

Word Core::operand(const RobEntry& e, Reg r) const {
  for (std::size_t k = 0; k < e.uop.srcs.size(); ++k) {
    if (e.uop.srcs[k] != r) continue;
    if (e.producers[k])
      if (const RobEntry* prod = find_entry(rob_, *e.producers[k])) return prod->value;
    return regs_[r];
  }
  return regs_[r];
}

Word Core::load_value(Addr a) const {
  auto it = memory_.find(a);
  return it == memory_.end() ? 0 : it->second;
}

Cycle Core::latency_of(const RobEntry& e) const {
  switch (e.uop.latency_class) {
    case LatencyClass::Alu: return config_.alu_latency;
    case LatencyClass::String: return config_.string_latency;
    case LatencyClass::Branch: return config_.branch_latency;
    case LatencyClass::Store: return config_.store_latency;
    default: return 1;
  }
}

void Core::execute(RobEntry& e) {
  const auto& in = program_.at(e.uop.parent);
  auto value_of = [&](const Operand& o) { return o.is_reg() ? operand(e, o.reg) : o.imm; };
  for (const auto& p : e.producers)
    if (p)
      if (const RobEntry* prod = find_entry(rob_, *p); prod && prod->tainted) e.tainted = true;

  switch (e.uop.latency_class) {
    case LatencyClass::Alu:
      if (in.opcode == Opcode::SetShift) {
        e.value = static_cast<Word>(static_cast<std::uint64_t>(value_of(in.srcs.at(0))) << in.shift);
      } else {
        e.value = 0;
        for (const auto& s : in.srcs) e.value += value_of(s);
      }
      break;
    case LatencyClass::Branch:
      e.value = value_of(in.srcs.at(0));
      e.taken = e.value != 0;
      break;
    case LatencyClass::Store:
      e.value = value_of(in.srcs.at(0));
      break;
    case LatencyClass::String:
      e.value = 0;
      break;
    default:
      break;
  }
  e.exec_start_cycle = cycle_;
  e.complete_cycle = cycle_ + latency_of(e);
}

void Core::issue() {
  std::uint32_t load_ports = config_.load_ports;
  std::uint32_t alu_ports = config_.alu_ports;
  for (std::size_t i = 0; i < rob_.size(); ++i) {
    auto& e = rob_[i];
    const bool fence = e.uop.latency_class == LatencyClass::Fence;
    if (e.exec_start_cycle) {
      if (fence && !e.done) break;
      continue;
    }
    if (!operands_ready(e)) {
      if (fence) break;
      continue;
    }
    if (!e.ready_cycle) e.ready_cycle = cycle_;

    switch (e.uop.latency_class) {
      case LatencyClass::Fence:
        if (i == 0) execute(e);
        return;
      case LatencyClass::Branch:
      case LatencyClass::Nop:
        execute(e);
        break;
      case LatencyClass::Alu:
      case LatencyClass::String:
        if (alu_ports == 0) break;
        --alu_ports;
        execute(e);
        break;
      case LatencyClass::Store: {
        if (load_ports == 0) break;
        --load_ports;
        const auto& in = program_.at(e.uop.parent);
        e.address = static_cast<Addr>((in.addr.base ? operand(e, *in.addr.base) : 0) + in.addr.offset);
        execute(e);
        break;
      }
      case LatencyClass::Load: {
        if (load_ports == 0) break;
        const auto& in = program_.at(e.uop.parent);
        e.address = static_cast<Addr>((in.addr.base ? operand(e, *in.addr.base) : 0) + in.addr.offset);
        // Wait for older store addresses; forward from the youngest alias.
        const RobEntry* alias = nullptr;
        bool older_store_pending = false;
        for (std::size_t j = 0; j < i; ++j) {
          if (rob_[j].uop.kind != UopKind::MemWrite) continue;
          if (!rob_[j].exec_start_cycle) older_store_pending = true;
          else if (rob_[j].address == e.address) alias = &rob_[j];
        }
        if (older_store_pending) break;
        const bool speculative = e.shadow.has_value();
        const bool lifted = policy_.mode == DefenseMode::DomPlusInvarspec && e.esp;
        bool deferred = false;
        if (policy_.delays_on_miss() && speculative && !lifted) {
          if (dom_gate(e, cache_) == GateDecision::Delay) break;
          deferred = true;
        }
        --load_ports;
        auto res = cache_.access(e.address, cycle_, deferred);
        if (res.outcome == AccessOutcome::MshrStall) {
          ++e.mshr_stalls;
          ++trace_.stats.mshr_stalls;
          break;
        }
        e.outcome = res.outcome;
        e.mem_latency = res.latency;
        e.deferred_touch = deferred;
        e.lifted = lifted && speculative && policy_.delays_on_miss();
        if (speculative) e.tainted = true;
        execute(e);
        e.value = alias ? alias->value : load_value(e.address);
        if (alias && alias->tainted) e.tainted = true;
        e.complete_cycle = cycle_ + res.latency;
        break;
      }
    }
  }
}

void Core::dispatch() {
  for (std::uint32_t n = 0; n < config_.decode_width && !decode_queue_.empty(); ++n) {
    if (rob_.size() >= config_.rob_size) {
      ++trace_.stats.dispatch_stalls;
      break;
    }
    auto e = std::move(decode_queue_.front());
    decode_queue_.pop_front();
    e.dispatch_cycle = cycle_;
    rob_.push_back(std::move(e));
  }
  compute_shadows(rob_, cycle_);
  for (auto it = rob_.rbegin(); it != rob_.rend() && it->dispatch_cycle == cycle_; ++it)
    if (it->shadow)
      if (const RobEntry* b = find_entry(rob_, *it->shadow)) it->shadow_at_dispatch = b->uop.parent;
}

bool Core::unresolved_branch_in_flight() const {
  for (const auto& e : decode_queue_)
    if (e.is_branch()) return true;
  for (const auto& e : rob_)
    if (e.is_branch() && !e.done) return true;
  return false;
}

void Core::push_uop(const MacroInstruction& in, std::uint32_t index, std::uint64_t count) {
  RobEntry e;
  e.seq = next_seq_++;
  e.uop = make_uop(in, index, count);
  e.opcode = in.opcode;
  e.producers.reserve(e.uop.srcs.size());
  for (Reg r : e.uop.srcs) e.producers.push_back(rename_[r]);
  if (e.uop.dest) rename_[*e.uop.dest] = e.seq;
  if (e.is_branch()) e.predicted_taken = predictor_.predict(in);
  decode_queue_.push_back(std::move(e));
}

bool Core::fetch_rep(std::uint32_t& slots) {
  const auto& in = program_.at(pc_);
  if (!pending_rep_) {
    const RobEntry* producer = nullptr;
    if (auto p = rename_[in.counter]) {
      producer = find_entry(rob_, *p);
      if (!producer) {
        ++trace_.stats.rep_decode_stalls;  // still in the decode queue
        return false;
      }
      if (!producer->done) {
        ++trace_.stats.rep_decode_stalls;
        return false;
      }
    }
    const Word counter = producer ? producer->value : regs_[in.counter];
    const std::uint64_t n = counter < 0 ? 0 : std::min<std::uint64_t>(static_cast<std::uint64_t>(counter), 1ULL << 40);
    const std::uint64_t requested = rep_expansion_count(in.opcode, n);
    const std::uint64_t actual = std::min(requested, config_.expansion_cap);
    const bool capped = requested > config_.expansion_cap;
    if (capped)
      trace_.warnings.push_back("cycle " + std::to_string(cycle_) + ": REP @" + std::to_string(in.id) + " requested " +
                                std::to_string(requested) + " uops, capped at " +
                                std::to_string(config_.expansion_cap));
    const bool tainted = producer && producer->tainted && unresolved_branch_in_flight();
    const bool predicted = gate_rob_fill(make_uop(in, 0, 1), tainted, policy_) == FillDecision::DispatchPredicted;
    PendingRep rep{in.id, predicted ? std::min(policy_.predicted_rep_count, config_.expansion_cap) : actual, 0,
                   predicted, actual};
    trace_.rep_expansions.push_back({cycle_, in.id, counter, requested, rep.count, capped, predicted});
    pending_rep_ = rep;
  }
  auto& rep = *pending_rep_;
  while (slots > 0 && rep.emitted < rep.count && decode_queue_.size() < config_.decode_queue_size()) {
    const auto index = static_cast<std::uint32_t>(rep.emitted);
    if (rep.predicted && gate_rob_fill(make_uop(in, index, rep.count), true, policy_) == FillDecision::Block) {
      rep.count = rep.emitted;
      break;
    }
    push_uop(in, index, rep.count);
    if (index == 0 && rep.predicted) {
      decode_queue_.back().rep_predicted = true;
      decode_queue_.back().rep_actual = rep.actual;
    }
    ++rep.emitted;
    --slots;
  }
  if (rep.emitted == rep.count) {
    pending_rep_.reset();
    ++pc_;
  }
  return true;
}

void Core::fetch() {
  if (cycle_ < fetch_resume_) return;
  std::uint32_t slots = config_.decode_width;
  while (slots > 0 && decode_queue_.size() < config_.decode_queue_size()) {
    if (pc_ >= program_.size() && !pending_rep_) break;
    const auto& in = program_.at(pc_);
    if (is_rep(in.opcode)) {
      if (!fetch_rep(slots)) break;
      continue;
    }
    push_uop(in, 0, 1);
    --slots;
    if (in.opcode == Opcode::Jump) {
      pc_ = in.target;
    } else if (in.opcode == Opcode::Branch) {
      pc_ = decode_queue_.back().predicted_taken ? in.target : in.id + 1;
    } else {
      ++pc_;
    }
  }
}

void Core::rebuild_rename() {
  rename_.fill(std::nullopt);
  for (const auto& e : rob_)
    if (e.uop.dest) rename_[*e.uop.dest] = e.seq;
}

void Core::record(const RobEntry& e) {
  UopRecord r;
  r.seq = e.seq;
  r.instr = e.uop.parent;
  r.uop_index = e.uop.seq;
  r.kind = e.uop.kind;
  r.dispatch = e.dispatch_cycle;
  r.ready = e.ready_cycle;
  r.exec_start = e.exec_start_cycle;
  r.complete = e.complete_cycle;
  r.commit = e.commit_cycle;
  r.shadow = e.shadow_at_dispatch;
  r.unshadow = e.unshadow_cycle;
  r.squashed = e.squashed;
  r.address = e.address;
  r.outcome = e.outcome;
  r.mem_latency = e.mem_latency;
  r.deferred = e.deferred_touch;
  r.lifted = e.lifted;
  r.esp = e.esp_cycle;
  trace_.uops.push_back(r);
}

Trace Core::finish() {
  if (!halted()) throw std::logic_error("Core::finish called before halt");
  std::sort(trace_.uops.begin(), trace_.uops.end(), [](const UopRecord& a, const UopRecord& b) { return a.seq < b.seq; });
  trace_.mem_events = cache_.events();
  trace_.stats.cycles = cycle_;
  trace_.final_regs = regs_;
  trace_.final_memory = memory_;
  return std::move(trace_);
}

RunResult run(const Program& program, const SimConfig& config, const DefensePolicy& policy) {
  CacheState cache(config.cache);
  for (Addr a : program.warm_lines) cache.install(a);
  for (Addr a : program.flush_lines) cache.flush(a);
  Core core(program, config.core, policy, cache);
  while (!core.halted()) core.step();
  Trace trace = core.finish();
  return {std::move(trace), std::move(cache)};
}

}  // namespace robsim
