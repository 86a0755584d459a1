#include "robsim/scenarios.hpp"

#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>

namespace robsim {

std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::FsiV1Loop: return "fsi_v1_loop";
    case ScenarioKind::FsiV1Rep: return "fsi_v1_rep";
    case ScenarioKind::FsiV2Order: return "fsi_v2_order";
    case ScenarioKind::BsiMshr: return "bsi_mshr";
    case ScenarioKind::FsiV1Fixed: return "fsi_v1_fixed";
  }
  return "?";
}

std::vector<ScenarioKind> all_scenarios() {
  return {ScenarioKind::FsiV1Loop, ScenarioKind::FsiV1Rep, ScenarioKind::FsiV2Order, ScenarioKind::BsiMshr,
          ScenarioKind::FsiV1Fixed};
}

std::optional<ScenarioKind> parse_scenario(std::string_view s) {
  for (auto k : all_scenarios())
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::string Observation::str() const {
  if (latency) return std::to_string(*latency);
  std::string out = "[";
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s0x%llx", i ? ";" : "", static_cast<unsigned long long>(snapshot[i]));
    out += buf;
  }
  return out + "]";
}

namespace {

std::string hex(Addr a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(a));
  return buf;
}

void check_secret(int secret) {
  if (secret != 0 && secret != 1) throw std::invalid_argument("secret must be 0 or 1");
}

// Outer branch condition: a two-level pointer chase over flushed lines, so the
// branch resolves only after two back-to-back misses.
std::string prologue(int secret, std::initializer_list<Addr> flushed) {
  std::ostringstream s;
  s << ".data " << hex(layout::kCondPtr) << " " << layout::kCond << "\n"
    << ".data " << hex(layout::kCond) << " 1\n"
    << ".data " << hex(layout::kSecret) << " " << secret << "\n"
    << ".warm " << hex(layout::kSecret) << "\n"
    << ".flush " << hex(layout::kCondPtr) << "\n"
    << ".flush " << hex(layout::kCond) << "\n";
  for (Addr a : flushed) s << ".flush " << hex(a) << "\n";
  return s.str();
}

Receiver timing_receiver(const SimConfig& config) {
  Receiver r;
  r.kind = ReceiverKind::TimingThreshold;
  r.threshold = static_cast<double>(config.cache.hit_cycles + config.cache.miss_cycles) / 2.0;
  return r;
}

}  // namespace

Scenario build_fsi_v1(FsiVariant variant, int secret, const SimConfig& config) {
  check_secret(secret);
  config.core.validate();
  config.cache.validate();
  if (config.core.rob_size > config.core.expansion_cap)
    throw std::invalid_argument("rob_size exceeds the REP expansion cap; the gadget cannot fill the ROB");

  std::ostringstream s;
  s << prologue(secret, {layout::kProbe}) << ".predict @2 not-taken\n";
  if (variant == FsiVariant::Loop) {
    s << ".predict @5 taken\n.predict @8 taken\n"
      << "load r1, [" << hex(layout::kCondPtr) << "]\n"
      << "load r1, [r1]\n"
      << "branch r1, JOIN\n"
      << "load r2, [" << hex(layout::kSecret) << "]\n"
      << "setshift r4, r2, 10\n"
      << "branch r4, BODY\n"
      << "jump JOIN\n"
      << "BODY: alu r4, r4, -1\n"
      << "branch r4, BODY\n"
      << "JOIN: load r3, [" << hex(layout::kProbe) << "]\n";
  } else {
    s << "load r1, [" << hex(layout::kCondPtr) << "]\n"
      << "load r1, [r1]\n"
      << "branch r1, JOIN\n"
      << "load r2, [" << hex(layout::kSecret) << "]\n"
      << "setshift r4, r2, 10\n"
      << "rep_movs r4\n"
      << "JOIN: load r3, [" << hex(layout::kProbe) << "]\n";
  }
  Scenario sc;
  sc.kind = variant == FsiVariant::Loop ? ScenarioKind::FsiV1Loop : ScenarioKind::FsiV1Rep;
  sc.program = parse_program(s.str());
  sc.receiver = timing_receiver(config);
  sc.target_label = "JOIN";
  sc.config = config;
  sc.secret = secret;
  return sc;
}

Scenario build_fsi_v1_fixed(int secret, const SimConfig& config, bool predict_gating) {
  check_secret(secret);
  config.core.validate();
  config.cache.validate();
  constexpr int kGadget = 10;

  std::ostringstream s;
  s << prologue(secret, {layout::kProbe}) << ".predict @2 not-taken\n"
    << ".predict @4 " << (predict_gating && secret == 0 ? "not-taken" : "taken") << "\n"
    << "load r1, [" << hex(layout::kCondPtr) << "]\n"
    << "load r1, [r1]\n"
    << "branch r1, JOIN\n"
    << "load r2, [" << hex(layout::kSecret) << "]\n"
    << "branch r2, LONG\n"
    << "jump JOIN\n"
    << "LONG:\n";
  for (int i = 0; i < kGadget; ++i) s << "alu r5, r5, 1\n";
  s << "JOIN: load r3, [" << hex(layout::kProbe) << "]\n";

  Scenario sc;
  sc.kind = ScenarioKind::FsiV1Fixed;
  sc.program = parse_program(s.str());
  sc.receiver = timing_receiver(config);
  sc.target_label = "JOIN";
  sc.config = config;
  sc.secret = secret;
  return sc;
}

Scenario build_fsi_v2(int secret, const SimConfig& config, Addr line_a, Addr line_b) {
  check_secret(secret);
  config.core.validate();
  config.cache.validate();
  CacheState geometry(config.cache);
  if (config.cache.ways != 1) throw std::invalid_argument("fsi_v2_order needs a direct-mapped cache (ways = 1)");
  if (geometry.line_of(line_a) == geometry.line_of(line_b)) throw std::invalid_argument("lines A and B coincide");
  if (geometry.set_of(line_a) != geometry.set_of(line_b))
    throw std::invalid_argument("lines A and B must map to the same set");

  std::ostringstream s;
  s << prologue(secret, {line_a, line_b}) << ".predict @2 not-taken\n.predict @5 taken\n.predict @8 taken\n"
    << "load r1, [" << hex(layout::kCondPtr) << "]\n"
    << "load r1, [r1]\n"
    << "branch r1, NORMAL\n"
    << "load r2, [" << hex(layout::kSecret) << "]\n"
    << "setshift r4, r2, 10\n"
    << "branch r4, BODY\n"
    << "jump JOIN\n"
    << "BODY: alu r4, r4, -1\n"
    << "branch r4, BODY\n"
    << "jump JOIN\n"
    << "NORMAL: load r5, [" << hex(line_a) << "]\n"
    << "JOIN: load r3, [" << hex(line_b) << "]\n";

  Scenario sc;
  sc.kind = ScenarioKind::FsiV2Order;
  sc.program = parse_program(s.str());
  sc.receiver.kind = ReceiverKind::SetOrder;
  sc.receiver.set_index = geometry.set_of(line_b);
  sc.receiver.line_b = geometry.line_of(line_b);
  sc.target_label = "JOIN";
  sc.config = config;
  sc.secret = secret;
  return sc;
}

Scenario build_bsi_mshr(int secret, const SimConfig& config) {
  check_secret(secret);
  config.core.validate();
  config.cache.validate();
  if (config.cache.mshr_entries < 2) throw std::invalid_argument("bsi_mshr needs mshr_entries >= 2");
  const std::uint32_t gadget =
      config.cache.mshr_entries == CacheConfig::kUnboundedMshrs ? 10 : config.cache.mshr_entries;
  constexpr int kDelayChain = 30;  // lets the gadget occupy the MSHRs before the target issues
  const InstrId outer = 2 + kDelayChain + 1;

  std::ostringstream s;
  std::initializer_list<Addr> none{};
  s << prologue(secret, none) << ".flush " << hex(layout::kBsiTarget) << "\n";
  for (std::uint32_t i = 0; i < gadget; ++i) s << ".flush " << hex(layout::kGadgetBase + 64ULL * i) << "\n";
  s << ".predict @" << outer << " not-taken\n"
    << ".predict @" << outer + 2 << " not-taken\n"
    << "load r1, [" << hex(layout::kCondPtr) << "]\n"
    << "load r1, [r1]\n";
  for (int i = 0; i < kDelayChain; ++i) s << "alu r6, r6, 0\n";
  s << "TARGET: load r7, [r6+" << hex(layout::kBsiTarget) << "]\n"
    << "branch r1, JOIN\n"
    << "load r2, [" << hex(layout::kSecret) << "]\n"
    << "branch r2, GADGET\n"
    << "jump JOIN\n"
    << "GADGET:\n";
  for (std::uint32_t i = 0; i < gadget; ++i) s << "load r8, [" << hex(layout::kGadgetBase + 64ULL * i) << "]\n";
  s << "JOIN: nop\n";

  Scenario sc;
  sc.kind = ScenarioKind::BsiMshr;
  sc.program = parse_program(s.str());
  sc.receiver.kind = ReceiverKind::TimingThreshold;
  sc.receiver.threshold = static_cast<double>(config.cache.miss_cycles + config.cache.miss_jitter) + 0.5;
  sc.target_label = "TARGET";
  sc.config = config;
  sc.secret = secret;
  return sc;
}

Scenario build_scenario(ScenarioKind kind, int secret, const SimConfig& config) {
  switch (kind) {
    case ScenarioKind::FsiV1Loop: return build_fsi_v1(FsiVariant::Loop, secret, config);
    case ScenarioKind::FsiV1Rep: return build_fsi_v1(FsiVariant::Rep, secret, config);
    case ScenarioKind::FsiV2Order: return build_fsi_v2(secret, config);
    case ScenarioKind::BsiMshr: return build_bsi_mshr(secret, config);
    case ScenarioKind::FsiV1Fixed: return build_fsi_v1_fixed(secret, config);
  }
  throw std::invalid_argument("unknown scenario");
}

int infer_secret(const Observation& observation, const Receiver& receiver) {
  if (receiver.kind == ReceiverKind::TimingThreshold) {
    if (!observation.latency) throw std::invalid_argument("timing receiver needs a latency observation");
    return static_cast<double>(*observation.latency) > receiver.threshold ? 1 : 0;
  }
  return !observation.snapshot.empty() && observation.snapshot.front() == receiver.line_b ? 1 : 0;
}

PreparedScenario prepare(const Scenario& scenario, DefenseMode mode, const std::set<Mitigation>& mitigations,
                         std::uint64_t predicted_rep_count) {
  PreparedScenario p;
  p.program = scenario.program;
  if (mitigations.contains(Mitigation::PathBalancing)) {
    auto out = balance_all(p.program);
    if (!out.refusals.empty()) {
      std::string msg = "path balancing refused: ";
      for (std::size_t i = 0; i < out.refusals.size(); ++i) msg += (i ? " | " : "") + out.refusals[i];
      throw AnalysisError(msg);
    }
    p.program = std::move(out.program);
  }
  p.policy.mode = mode;
  p.policy.mitigations = mitigations;
  p.policy.predicted_rep_count = predicted_rep_count;
  if (mode == DefenseMode::DomPlusInvarspec || mitigations.contains(Mitigation::ConservativeInvariance)) {
    auto analysis = analyze_program(p.program);
    p.policy.safe_sets = mitigations.contains(Mitigation::ConservativeInvariance)
                             ? conservative_filter(analysis.safe_sets, analysis.profiles)
                             : analysis.safe_sets;
  }
  p.target = p.program.labels.at(scenario.target_label);
  return p;
}

Observation observe(const Scenario& scenario, const PreparedScenario& prepared, const RunResult& result) {
  Observation obs;
  if (scenario.receiver.kind == ReceiverKind::SetOrder) {
    obs.snapshot = result.cache.snapshot_set(scenario.receiver.set_index);
    return obs;
  }
  auto committed = result.trace.committed(prepared.target);
  if (committed.empty()) throw SimulationError("interference target never committed");
  const UopRecord& t = *committed.back();
  if (scenario.kind == ScenarioKind::BsiMshr)
    obs.latency = *t.complete - *t.ready;
  else
    obs.latency = t.mem_latency;
  return obs;
}

SimConfig scenario_config(const TrialSpec& spec) {
  SimConfig c = spec.config;
  if (spec.scenario == ScenarioKind::FsiV1Fixed) c.core.rob_size = spec.fixed_variant_rob_size;
  return c;
}

TrialOutcome run_trial(const TrialSpec& spec, std::uint64_t trial, int secret) {
  SimConfig config = scenario_config(spec);
  config.cache.jitter_seed = spec.seed ^ (0x9E3779B97F4A7C15ULL * (trial + 1));
  Scenario sc = build_scenario(spec.scenario, secret, config);
  PreparedScenario prep = prepare(sc, spec.mode, spec.mitigations, spec.predicted_rep_count);
  RunResult result = run(prep.program, config, prep.policy);

  TrialOutcome out;
  auto& r = out.report;
  r.trial = trial;
  r.scenario = std::string(to_string(spec.scenario));
  r.defense = std::string(to_string(spec.mode));
  r.mitigations = mitigations_label(spec.mitigations);
  r.observation = observe(sc, prep, result);
  r.inferred = infer_secret(r.observation, sc.receiver);
  r.truth = secret;
  r.occupancy_peak = result.trace.stats.peak_occupancy;
  out.trace = std::move(result.trace);
  return out;
}

std::vector<ScenarioReport> run_trials(const TrialSpec& spec, std::uint64_t n_trials) {
  if (n_trials == 0) throw std::invalid_argument("n_trials must be >= 1");
  std::mt19937_64 rng(spec.seed);
  std::vector<ScenarioReport> reports;
  reports.reserve(n_trials);
  for (std::uint64_t t = 0; t < n_trials; ++t) {
    const int secret = static_cast<int>(rng() >> 63);
    reports.push_back(run_trial(spec, t, secret).report);
  }
  return reports;
}

}  // namespace robsim
