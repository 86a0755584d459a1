// One PASS/FAIL line per acceptance criterion; exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "robsim/analysis.hpp"
#include "robsim/core.hpp"
#include "robsim/experiment.hpp"
#include "robsim/scenarios.hpp"
#include "support/oracle.hpp"

using namespace robsim;

namespace {

constexpr std::uint64_t kTrials = 1000;

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) detail << what;
    ok = ok && cond;
  }
};

TrialSpec spec_for(ScenarioKind kind, DefenseMode mode, std::set<Mitigation> mits = {}) {
  TrialSpec spec;
  spec.scenario = kind;
  spec.mode = mode;
  spec.mitigations = std::move(mits);
  spec.seed = 1;
  return spec;
}

// Every trial's latency equals the expected value for its secret, and the
// receiver recovers every secret.
void expect_dichotomy(Check& c, const std::vector<ScenarioReport>& reports, Cycle hit, Cycle miss) {
  std::uint64_t correct = 0;
  for (const auto& r : reports) {
    const Cycle want = r.truth ? miss : hit;
    if (!r.observation.latency || *r.observation.latency != want) {
      c.expect(false, "trial " + std::to_string(r.trial) + " secret " + std::to_string(r.truth) + " observed " +
                          r.observation.str() + ", want " + std::to_string(want));
      return;
    }
    if (r.inferred == r.truth) ++correct;
  }
  c.expect(correct == reports.size(), "recovered " + std::to_string(correct) + "/" + std::to_string(reports.size()));
}

// Observations identical for every trial regardless of secret.
void expect_secret_independent(Check& c, const std::vector<ScenarioReport>& reports) {
  bool saw[2] = {false, false};
  for (const auto& r : reports) {
    saw[r.truth] = true;
    if (!(r.observation == reports.front().observation)) {
      c.expect(false, "trial " + std::to_string(r.trial) + " observed " + r.observation.str() + " vs " +
                          reports.front().observation.str());
      return;
    }
  }
  c.expect(saw[0] && saw[1], "only one secret value drawn");
}

Check criterion1() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  auto reports = run_trials(spec_for(ScenarioKind::FsiV1Loop, DefenseMode::Unprotected), kTrials);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  expect_dichotomy(c, reports, 3, 60);
  c.expect(secs < 10.0, "runtime " + std::to_string(secs) + " s");
  c.detail << (c.ok ? "" : "; ") << kTrials << " trials in " << secs << " s";
  return c;
}

Check criterion2() {
  Check c;
  auto spec = spec_for(ScenarioKind::FsiV1Rep, DefenseMode::DomPlusInvarspec);
  auto prepared = prepare(build_fsi_v1(FsiVariant::Rep, 1, spec.config), spec.mode, {});
  c.expect(prepared.policy.safe_sets[prepared.target].members.empty(), "target safe set not empty");
  expect_dichotomy(c, run_trials(spec, kTrials), 3, 60);

  auto s1 = run_trial(spec, 0, 1);
  c.expect(s1.report.occupancy_peak == spec.config.core.rob_size,
           "peak occupancy " + std::to_string(s1.report.occupancy_peak));
  bool found = false;
  for (const auto& rep : s1.trace.rep_expansions) {
    if (rep.requested != 2 * (1u << 10)) continue;
    found = true;
    c.expect(rep.emitted == std::min<std::uint64_t>(rep.requested, spec.config.core.expansion_cap),
             "emitted " + std::to_string(rep.emitted));
  }
  c.expect(found, "no REP expansion requesting 2*(1<<10) uops");
  return c;
}

Check criterion3() {
  Check c;
  auto reports = run_trials(spec_for(ScenarioKind::FsiV2Order, DefenseMode::Unprotected), kTrials);
  for (const auto& r : reports) {
    const std::vector<Addr> want{r.truth ? layout::kLineB : layout::kLineA};
    if (r.observation.snapshot != want || r.inferred != r.truth) {
      c.expect(false, "trial " + std::to_string(r.trial) + " snapshot " + r.observation.str());
      break;
    }
  }
  return c;
}

Check criterion4() {
  Check c;
  for (auto kind : {ScenarioKind::FsiV1Loop, ScenarioKind::FsiV1Rep}) {
    auto prepared = prepare(build_scenario(kind, 0, {}), DefenseMode::DomPlusInvarspec,
                            {Mitigation::ConservativeInvariance});
    c.expect(prepared.policy.safe_sets[prepared.target].members.contains(2), "target safe set lacks the branch");
    expect_secret_independent(c, run_trials(spec_for(kind, DefenseMode::Dom), kTrials));
  }
  return c;
}

Check criterion5() {
  Check c;
  auto spec = spec_for(ScenarioKind::BsiMshr, DefenseMode::Unprotected);
  const Cycle t0 = *run_trial(spec, 0, 0).report.observation.latency;
  const Cycle t1 = *run_trial(spec, 0, 1).report.observation.latency;
  c.expect(t1 >= t0 + 1, "completion " + std::to_string(t1) + " vs " + std::to_string(t0));
  auto reports = run_trials(spec, kTrials);
  std::uint64_t correct = 0;
  for (const auto& r : reports) correct += r.inferred == r.truth;
  c.expect(correct == reports.size(), "recovered " + std::to_string(correct) + "/" + std::to_string(kTrials));

  spec.config.cache.mshr_entries = CacheConfig::kUnboundedMshrs;
  const Cycle u0 = *run_trial(spec, 0, 0).report.observation.latency;
  const Cycle u1 = *run_trial(spec, 0, 1).report.observation.latency;
  c.expect(u0 == u1, "unbounded MSHRs: " + std::to_string(u1) + " vs " + std::to_string(u0));
  c.detail << (c.ok ? "" : "; ") << "completion " << t0 << " vs " << t1 << ", unbounded " << u0 << " vs " << u1;
  return c;
}

Check criterion6() {
  Check c;
  for (auto kind : {ScenarioKind::FsiV1Loop, ScenarioKind::FsiV1Rep, ScenarioKind::FsiV2Order})
    expect_secret_independent(
        c, run_trials(spec_for(kind, DefenseMode::DomPlusInvarspec, {Mitigation::ConservativeInvariance}), kTrials));
  return c;
}

Check criterion7() {
  Check c;
  auto spec = spec_for(ScenarioKind::FsiV1Fixed, DefenseMode::Unprotected, {Mitigation::PathBalancing});
  std::vector<Cycle> first_dispatch;
  for (int secret : {0, 1}) {
    auto prepared = prepare(build_scenario(spec.scenario, secret, scenario_config(spec)), spec.mode, spec.mitigations);
    auto out = run_trial(spec, 0, secret);
    Cycle first = ~Cycle{0};
    for (const auto& u : out.trace.uops)
      if (u.instr == prepared.target) first = std::min(first, *u.dispatch);
    first_dispatch.push_back(first);
  }
  c.expect(first_dispatch[0] == first_dispatch[1],
           "target dispatch " + std::to_string(first_dispatch[0]) + " vs " + std::to_string(first_dispatch[1]));
  expect_secret_independent(c, run_trials(spec, kTrials));

  for (auto v : {FsiVariant::Loop, FsiVariant::Rep}) {
    auto sc = build_fsi_v1(v, 0, {});
    auto out = balance_all(sc.program);
    c.expect(!out.refusals.empty(), "balancing accepted a variable-length path");
    for (const auto& msg : out.refusals)
      c.expect(msg.find("variable-length") != std::string::npos, "refusal without diagnostic: " + msg);
  }
  return c;
}

Check criterion8() {
  Check c;
  for (auto mode : {DefenseMode::Unprotected, DefenseMode::Dom, DefenseMode::DomPlusInvarspec}) {
    auto spec = spec_for(ScenarioKind::FsiV1Rep, mode, {Mitigation::OperandIndependentFill});
    auto s0 = run_trial(spec, 0, 0);
    auto s1 = run_trial(spec, 0, 1);
    c.expect(s0.trace.occupancy == s1.trace.occupancy,
             std::string("occupancy series differ under ") + std::string(to_string(mode)));
  }

  // Secret-derived REP count behind an unresolved branch: predicted P=8.
  auto tainted_rep = [](int counter) {
    return parse_program(
        ".data 0x40 0x80\n.flush 0x40\n.flush 0x80\n.predict @2 not-taken\n.data 0x100 " + std::to_string(counter) +
        "\n.warm 0x100\nload r1, [0x40]\nload r1, [r1]\nbranch r1, END\nload r2, [0x100]\nrep_movs r2\nEND: nop\n");
  };
  DefensePolicy pol;
  pol.mitigations.insert(Mitigation::OperandIndependentFill);
  auto count_rep_squashes = [](const Trace& t) {
    int n = 0;
    for (const auto& s : t.squashes) n += s.reason == SquashReason::RepCountMispredict;
    return n;
  };
  auto mismatch = run(tainted_rep(3), {}, pol).trace;
  auto match = run(tainted_rep(4), {}, pol).trace;
  c.expect(count_rep_squashes(mismatch) == 1, "no squash when the resolved count differs from P");
  c.expect(mismatch.committed(4).size() == 6, "wrong uop count committed after the REP squash");
  c.expect(count_rep_squashes(match) == 0, "squash although the resolved count equals P");
  return c;
}

Check criterion9() {
  Check c;
  // Determinism.
  for (auto kind : all_scenarios())
    for (auto mode : {DefenseMode::Unprotected, DefenseMode::Dom, DefenseMode::DomPlusInvarspec})
      for (int secret : {0, 1}) {
        auto spec = spec_for(kind, mode);
        c.expect(run_trial(spec, 3, secret).trace == run_trial(spec, 3, secret).trace,
                 "non-deterministic trace for " + std::string(to_string(kind)));
      }

  // ROB bound and squash completeness on random programs.
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200 && c.ok; ++trial) {
    SimConfig cfg;
    cfg.core.rob_size = 4 + static_cast<std::uint32_t>(rng() % 28);
    auto p = parse_program(testing::random_loop_program(rng));
    auto t = run(p, cfg).trace;
    for (auto occ : t.occupancy) c.expect(occ <= cfg.core.rob_size, "occupancy above rob_size");
    for (const auto& sq : t.squashes)
      for (const auto& u : t.uops)
        if (u.seq > sq.seq && u.commit) c.expect(*u.dispatch > sq.cycle, "squashed uop committed");
  }
  for (auto kind : all_scenarios())
    for (int secret : {0, 1}) {
      TrialSpec spec = spec_for(kind, DefenseMode::Unprotected);
      auto out = run_trial(spec, 0, secret);
      for (auto occ : out.trace.occupancy)
        c.expect(occ <= scenario_config(spec).core.rob_size, "scenario occupancy above rob_size");
    }

  // Safe sets against the brute-force closure.
  for (int trial = 0; trial < 300 && c.ok; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 32);
    auto p = parse_program(testing::random_forward_program(rng, n, 9, trial % 2 == 0));
    c.expect(compute_safe_sets(p) == testing::oracle_safe_sets(p, testing::oracle_edges(p)),
             "safe sets differ from brute force");
  }

  // Expansion formulas.
  auto reps = parse_program("rep_movs r1\nrep_lods r1\n");
  for (std::uint64_t n : {0u, 1u, 7u, 100u}) {
    c.expect(expand_macro(reps.at(0), n).uops.size() == 2 * n, "rep_movs expansion for n=" + std::to_string(n));
    c.expect(expand_macro(reps.at(1), n).uops.size() == 5 * n + 12, "rep_lods expansion for n=" + std::to_string(n));
  }
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Check()>>> criteria{
      {"FSI v1 loop, unprotected: 3/60 dichotomy, full recovery", criterion1},
      {"FSI v1 REP under DoM+InvarSpec: dichotomy, full ROB, 2n expansion", criterion2},
      {"FSI v2 direct-mapped: final set [A]/[B]", criterion3},
      {"DoM: FSI v1 observations independent of the secret", criterion4},
      {"BSI MSHR: contention delays the target; unbounded MSHRs do not", criterion5},
      {"conservative invariance: FSI observations independent of the secret", criterion6},
      {"path balancing: equal target dispatch, no leak, variable paths refused", criterion7},
      {"operand-independent fill: equal occupancy series, REP count squash", criterion8},
      {"properties: determinism, ROB bound, squash completeness, safe sets, expansion", criterion9},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      c = criteria[i].second();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail << "exception: " << e.what();
    }
    failures += !c.ok;
    const auto detail = c.detail.str();
    std::printf("%s %zu: %s%s%s\n", c.ok ? "PASS" : "FAIL", i + 1, criteria[i].first, detail.empty() ? "" : " -- ",
                detail.c_str());
  }
  return failures ? 1 : 0;
}
