#include "gtest/gtest.h"
#include "robsim/analysis.hpp"
#include "robsim/core.hpp"
#include "robsim/defense.hpp"
#include "robsim/scenarios.hpp"

using namespace robsim;

namespace {

const char* kDiamond =
    "branch r1, THEN\n"
    "jump JOIN\n"
    "THEN: load r2, [0x100]\n"
    "JOIN: load r3, [r2]\n"
    "load r4, [0x200]\n";

// A branch that stays unresolved for two memory round trips.
const char* kSlowBranch =
    ".data 0x40 0x80\n"
    ".flush 0x40\n"
    ".flush 0x80\n"
    "load r1, [0x40]\n"
    "load r1, [r1]\n"
    "branch r1, END\n";

RobEntry entry(SeqNum seq, InstrId instr, UopKind kind, bool done) {
  RobEntry e;
  e.seq = seq;
  e.uop.parent = instr;
  e.uop.kind = kind;
  e.done = done;
  return e;
}

DefensePolicy invarspec(const Program& p) {
  DefensePolicy pol;
  pol.mode = DefenseMode::DomPlusInvarspec;
  pol.safe_sets = compute_safe_sets(p);
  return pol;
}

const UopRecord* first_of(const Trace& t, InstrId id) {
  for (const auto& u : t.uops)
    if (u.instr == id) return &u;
  return nullptr;
}

}  // namespace

TEST(Names, RoundTrip) {
  for (auto m : {DefenseMode::Unprotected, DefenseMode::Dom, DefenseMode::DomPlusInvarspec})
    EXPECT_EQ(parse_defense_mode(to_string(m)), m);
  for (auto m : {Mitigation::ConservativeInvariance, Mitigation::PathBalancing, Mitigation::OperandIndependentFill})
    EXPECT_EQ(parse_mitigation(to_string(m)), m);
  EXPECT_FALSE(parse_defense_mode("invisispec"));
  EXPECT_EQ(mitigations_label({}), "none");
  EXPECT_EQ(mitigations_label({Mitigation::PathBalancing, Mitigation::ConservativeInvariance}),
            "conservative_invariance+path_balancing");
}

TEST(Policy, Validate) {
  auto p = parse_program(kDiamond);
  DefensePolicy pol;
  pol.mode = DefenseMode::DomPlusInvarspec;
  EXPECT_THROW(pol.validate(p), std::invalid_argument);
  pol.safe_sets = compute_safe_sets(p);
  EXPECT_NO_THROW(pol.validate(p));
  pol.mitigations.insert(Mitigation::PathBalancing);
  EXPECT_THROW(pol.validate(p), AnalysisError);
}

TEST(DomGate, HitDeferredMissDelayed) {
  CacheState cache(CacheConfig{});
  cache.install(0x40);
  RobEntry load = entry(0, 0, UopKind::MemRead, false);
  load.address = 0x40;
  EXPECT_EQ(dom_gate(load, cache), GateDecision::ExecuteHitDeferred);
  load.address = 0x80;
  EXPECT_EQ(dom_gate(load, cache), GateDecision::Delay);
}

TEST(Osp, DiamondWithIndependentTail) {
  auto p = parse_program(kDiamond);
  auto pol = invarspec(p);
  ASSERT_EQ(pol.safe_sets[3].members, (std::set<InstrId>{0, 2}));
  ASSERT_TRUE(pol.safe_sets[4].members.empty());

  Rob rob{entry(0, 0, UopKind::BranchResolve, false), entry(1, 2, UopKind::MemRead, true),
          entry(2, 3, UopKind::MemRead, false), entry(3, 4, UopKind::MemRead, false)};
  rob[2].producers = {SeqNum{1}};
  compute_shadows(rob, 0);
  compute_osp(rob, pol);
  EXPECT_FALSE(rob[1].osp);

  // instr4 has an empty safe set: ESP while still shadowed.
  EXPECT_TRUE(esp_check(rob[3], rob, pol, 7).esp_reached);
  EXPECT_EQ(rob[3].esp_cycle, 7u);
  // instr3 waits for the branch and instr2.
  EXPECT_FALSE(esp_check(rob[2], rob, pol, 7).esp_reached);

  rob[0].done = true;
  compute_shadows(rob, 9);
  compute_osp(rob, pol);
  EXPECT_TRUE(rob[0].osp);
  EXPECT_TRUE(rob[1].osp);
  auto tag = esp_check(rob[2], rob, pol, 9);
  EXPECT_TRUE(tag.esp_reached);
  EXPECT_EQ(tag.instr, 3u);
  EXPECT_EQ(tag.cycle_reached, 9u);
}

TEST(Osp, EspIsSticky) {
  auto p = parse_program(kDiamond);
  auto pol = invarspec(p);
  Rob rob{entry(0, 0, UopKind::BranchResolve, true), entry(1, 2, UopKind::MemRead, true),
          entry(2, 3, UopKind::MemRead, false)};
  compute_shadows(rob, 0);
  compute_osp(rob, pol);
  EXPECT_TRUE(esp_check(rob[2], rob, pol, 1).esp_reached);
  rob[1].osp = false;
  EXPECT_TRUE(esp_check(rob[2], rob, pol, 2).esp_reached);
  EXPECT_EQ(rob[2].esp_cycle, 1u);
}

TEST(Osp, AbsentMemberCountsAsCommitted) {
  auto p = parse_program(kDiamond);
  auto pol = invarspec(p);
  Rob rob{entry(5, 3, UopKind::MemRead, false)};
  EXPECT_TRUE(esp_check(rob[0], rob, pol, 0).esp_reached);
}

TEST(GateRobFill, Decisions) {
  auto p = parse_program("rep_movs r1\nload r2, [0x40]\n");
  DefensePolicy pol;
  auto rep0 = make_uop(p.at(0), 0, 20);
  auto rep9 = make_uop(p.at(0), 9, 20);
  auto load = make_uop(p.at(1), 0, 1);
  EXPECT_EQ(gate_rob_fill(rep0, true, pol), FillDecision::Dispatch);
  pol.mitigations.insert(Mitigation::OperandIndependentFill);
  EXPECT_EQ(gate_rob_fill(rep0, false, pol), FillDecision::Dispatch);
  EXPECT_EQ(gate_rob_fill(load, true, pol), FillDecision::Dispatch);
  EXPECT_EQ(gate_rob_fill(rep0, true, pol), FillDecision::DispatchPredicted);
  EXPECT_EQ(gate_rob_fill(rep9, true, pol), FillDecision::Block);
}

// A wrong-path miss under DoM never reaches the cache.
TEST(Dom, WrongPathMissLeavesNoTrace) {
  // The branch is taken, predicted not-taken: the load is wrong-path only.
  auto p = parse_program(std::string(kSlowBranch) + ".predict @2 not-taken\n.data 0x80 1\nload r5, [0x300]\nEND: nop\n");
  auto touches = [](const Trace& t, Addr a) {
    for (const auto& ev : t.mem_events)
      if (ev.address == a) return true;
    return false;
  };
  DefensePolicy dom;
  dom.mode = DefenseMode::Dom;
  EXPECT_TRUE(touches(run(p, {}).trace, 0x300));
  auto t = run(p, {}, dom).trace;
  EXPECT_FALSE(touches(t, 0x300));
  EXPECT_EQ(t.squashes.size(), 1u);
}

TEST(Dom, ShadowedHitIsDeferred) {
  auto p = parse_program(std::string(kSlowBranch) + ".warm 0x300\n.predict @2 not-taken\nload r5, [0x300]\nEND: nop\n");
  DefensePolicy dom;
  dom.mode = DefenseMode::Dom;
  auto t = run(p, {}, dom).trace;
  const auto* u = first_of(t, 3);
  ASSERT_NE(u, nullptr);
  EXPECT_TRUE(u->deferred);
  EXPECT_EQ(u->outcome, AccessOutcome::Hit);
  ASSERT_TRUE(u->unshadow);
  EXPECT_LT(*u->exec_start, *u->unshadow);
}

TEST(Dom, ShadowedMissWaitsForUnshadow) {
  auto p = parse_program(std::string(kSlowBranch) + ".predict @2 not-taken\nload r5, [0x300]\nEND: nop\n");
  DefensePolicy dom;
  dom.mode = DefenseMode::Dom;
  auto t = run(p, {}, dom).trace;
  const auto* u = first_of(t, 3);
  ASSERT_TRUE(u && u->unshadow && u->exec_start);
  EXPECT_GE(*u->exec_start, *u->unshadow);
  EXPECT_FALSE(u->lifted);
}

// An instruction past the reconvergence point with an empty safe set
// escapes DoM while still shadowed.
TEST(Invarspec, LiftingWitness) {
  auto p = parse_program(std::string(kSlowBranch) + ".predict @2 not-taken\nnop\nEND: load r5, [0x300]\n");
  auto pol = invarspec(p);
  ASSERT_TRUE(pol.safe_sets[4].members.empty());
  auto t = run(p, {}, pol).trace;
  const auto* u = first_of(t, 4);
  ASSERT_TRUE(u && u->unshadow && u->exec_start);
  EXPECT_LT(*u->exec_start, *u->unshadow);
  EXPECT_TRUE(u->lifted);
  EXPECT_EQ(u->outcome, AccessOutcome::Miss);
  EXPECT_TRUE(u->esp);

  DefensePolicy dom;
  dom.mode = DefenseMode::Dom;
  const auto* d = first_of(run(p, {}, dom).trace, 4);
  ASSERT_TRUE(d && d->unshadow && d->exec_start);
  EXPECT_GE(*d->exec_start, *d->unshadow);
}

TEST(Invarspec, ControlDependentLoadStaysDelayed) {
  auto p = parse_program(std::string(kSlowBranch) + ".predict @2 not-taken\nload r5, [0x300]\nEND: nop\n");
  auto pol = invarspec(p);
  ASSERT_TRUE(pol.safe_sets[3].members.contains(2));
  auto t = run(p, {}, pol).trace;
  const auto* u = first_of(t, 3);
  ASSERT_TRUE(u && u->unshadow && u->exec_start);
  EXPECT_GE(*u->exec_start, *u->unshadow);
  EXPECT_FALSE(u->lifted);
}

namespace {

// Tainted REP counter under an unresolved branch.
std::string tainted_rep(int counter) {
  return std::string(kSlowBranch) + ".predict @2 not-taken\n.data 0x100 " + std::to_string(counter) +
         "\n.warm 0x100\nload r2, [0x100]\nrep_movs r2\nEND: nop\n";
}

}  // namespace

TEST(OperandIndependentFill, CountMismatchSquashes) {
  auto p = parse_program(tainted_rep(3));  // 6 uops, predicted 8
  DefensePolicy pol;
  pol.mitigations.insert(Mitigation::OperandIndependentFill);
  auto t = run(p, {}, pol).trace;
  ASSERT_FALSE(t.rep_expansions.empty());
  EXPECT_TRUE(t.rep_expansions[0].predicted);
  EXPECT_EQ(t.rep_expansions[0].emitted, 8u);
  int rep_squashes = 0;
  for (const auto& s : t.squashes)
    if (s.reason == SquashReason::RepCountMispredict) ++rep_squashes;
  EXPECT_EQ(rep_squashes, 1);
  EXPECT_EQ(t.committed(4).size(), 6u);
}

TEST(OperandIndependentFill, MatchingCountVerifies) {
  auto p = parse_program(tainted_rep(4));  // 8 uops, predicted 8
  DefensePolicy pol;
  pol.mitigations.insert(Mitigation::OperandIndependentFill);
  auto t = run(p, {}, pol).trace;
  for (const auto& s : t.squashes) EXPECT_NE(s.reason, SquashReason::RepCountMispredict);
  EXPECT_EQ(t.committed(4).size(), 8u);
}

TEST(OperandIndependentFill, UntaintedCounterNotPredicted) {
  auto p = parse_program(".reg r2 3\nrep_movs r2\n");
  DefensePolicy pol;
  pol.mitigations.insert(Mitigation::OperandIndependentFill);
  auto t = run(p, {}, pol).trace;
  EXPECT_FALSE(t.rep_expansions[0].predicted);
  EXPECT_EQ(t.committed(0).size(), 6u);
}

TEST(OperandIndependentFill, OccupancyIndependentOfSecret) {
  for (auto mode : {DefenseMode::Unprotected, DefenseMode::Dom, DefenseMode::DomPlusInvarspec}) {
    TrialSpec spec;
    spec.scenario = ScenarioKind::FsiV1Rep;
    spec.mode = mode;
    spec.mitigations = {Mitigation::OperandIndependentFill};
    auto s0 = run_trial(spec, 0, 0);
    auto s1 = run_trial(spec, 0, 1);
    EXPECT_EQ(s0.trace.occupancy, s1.trace.occupancy) << to_string(mode);
    EXPECT_EQ(s0.report.observation, s1.report.observation) << to_string(mode);
  }
}

TEST(Dom, FsiObservationsMatchAcrossSecrets) {
  for (auto kind : {ScenarioKind::FsiV1Loop, ScenarioKind::FsiV1Rep, ScenarioKind::FsiV2Order}) {
    TrialSpec spec;
    spec.scenario = kind;
    spec.mode = DefenseMode::Dom;
    EXPECT_EQ(run_trial(spec, 0, 0).report.observation, run_trial(spec, 0, 1).report.observation)
        << to_string(kind);
  }
}
