#include "gtest/gtest.h"
#include "robsim/scenarios.hpp"

using namespace robsim;

TEST(Names, RoundTrip) {
  for (auto k : all_scenarios()) EXPECT_EQ(parse_scenario(to_string(k)), k);
  EXPECT_EQ(all_scenarios().size(), 5u);
  EXPECT_FALSE(parse_scenario("fsi_v3"));
}

TEST(Builders, FsiV1Shape) {
  for (auto v : {FsiVariant::Loop, FsiVariant::Rep}) {
    auto sc = build_fsi_v1(v, 1, {});
    EXPECT_EQ(sc.target_label, "JOIN");
    EXPECT_TRUE(sc.program.labels.contains("JOIN"));
    EXPECT_EQ(sc.receiver.kind, ReceiverKind::TimingThreshold);
    EXPECT_DOUBLE_EQ(sc.receiver.threshold, (3 + 60) / 2.0);
    EXPECT_EQ(sc.program.data_init.at(layout::kSecret), 1);
  }
}

TEST(Builders, RejectsRobLargerThanCap) {
  SimConfig cfg;
  cfg.core.rob_size = 5000;
  EXPECT_THROW(build_fsi_v1(FsiVariant::Rep, 0, cfg), std::invalid_argument);
}

TEST(Builders, FsiV2NeedsDirectMappedConflict) {
  SimConfig cfg;
  EXPECT_THROW(build_fsi_v2(0, cfg, layout::kLineA, layout::kLineA), std::invalid_argument);
  EXPECT_THROW(build_fsi_v2(0, cfg, layout::kLineA, layout::kLineA + 64), std::invalid_argument);
  cfg.cache.ways = 2;
  EXPECT_THROW(build_fsi_v2(0, cfg), std::invalid_argument);
}

TEST(Builders, BsiNeedsTwoMshrs) {
  SimConfig cfg;
  cfg.cache.mshr_entries = 1;
  EXPECT_THROW(build_bsi_mshr(0, cfg), std::invalid_argument);
  cfg.cache.mshr_entries = CacheConfig::kUnboundedMshrs;
  EXPECT_NO_THROW(build_bsi_mshr(0, cfg));
}

TEST(Receiver, ThresholdAndSetOrder) {
  Receiver timing{ReceiverKind::TimingThreshold, 31.5, 0, 0};
  EXPECT_EQ(infer_secret({Cycle{60}, {}}, timing), 1);
  EXPECT_EQ(infer_secret({Cycle{3}, {}}, timing), 0);
  Receiver order{ReceiverKind::SetOrder, 0, 5, layout::kLineB};
  EXPECT_EQ(infer_secret({std::nullopt, {layout::kLineB}}, order), 1);
  EXPECT_EQ(infer_secret({std::nullopt, {layout::kLineA}}, order), 0);
  EXPECT_EQ(infer_secret({std::nullopt, {}}, order), 0);
}

TEST(Observation, Str) {
  EXPECT_EQ((Observation{Cycle{60}, {}}).str(), "60");
  EXPECT_EQ((Observation{std::nullopt, {0x1140}}).str(), "[0x1140]");
}

TEST(Trials, UnprotectedLoopLatencies) {
  TrialSpec spec;
  for (int secret : {0, 1}) {
    auto out = run_trial(spec, 0, secret);
    ASSERT_TRUE(out.report.observation.latency);
    EXPECT_EQ(*out.report.observation.latency, secret ? 60u : 3u);
    EXPECT_EQ(out.report.inferred, secret);
    EXPECT_EQ(out.report.truth, secret);
  }
}

TEST(Trials, FsiV2FinalSet) {
  TrialSpec spec;
  spec.scenario = ScenarioKind::FsiV2Order;
  EXPECT_EQ(run_trial(spec, 0, 0).report.observation.snapshot, std::vector<Addr>{layout::kLineA});
  EXPECT_EQ(run_trial(spec, 0, 1).report.observation.snapshot, std::vector<Addr>{layout::kLineB});
}

TEST(Trials, ZeroTrialsRejected) {
  EXPECT_THROW(run_trials(TrialSpec{}, 0), std::invalid_argument);
}

TEST(Trials, SingleTrialHasOneReport) {
  auto reports = run_trials(TrialSpec{}, 1);
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].trial, 0u);
  EXPECT_EQ(reports[0].inferred, reports[0].truth);
}

TEST(Trials, SeedDeterminesSecrets) {
  TrialSpec a;
  a.seed = 3;
  auto r1 = run_trials(a, 40);
  auto r2 = run_trials(a, 40);
  EXPECT_EQ(r1, r2);
  a.seed = 4;
  auto r3 = run_trials(a, 40);
  std::vector<int> t1, t3;
  for (const auto& r : r1) t1.push_back(r.truth);
  for (const auto& r : r3) t3.push_back(r.truth);
  EXPECT_NE(t1, t3);
}

TEST(Trials, JitterStaysInBand) {
  TrialSpec spec;
  spec.config.cache.miss_jitter = 8;
  spec.seed = 7;
  for (const auto& r : run_trials(spec, 200)) {
    const Cycle l = *r.observation.latency;
    if (r.truth) {
      EXPECT_GE(l, 52u);
      EXPECT_LE(l, 68u);
    } else {
      EXPECT_EQ(l, 3u);
    }
    EXPECT_EQ(r.inferred, r.truth);
  }
}

TEST(Prepare, PathBalancingRefusesLoop) {
  auto sc = build_fsi_v1(FsiVariant::Loop, 0, {});
  EXPECT_THROW(prepare(sc, DefenseMode::Unprotected, {Mitigation::PathBalancing}), AnalysisError);
}

TEST(Prepare, ConservativeAddsBranchToTargetSafeSet) {
  auto sc = build_fsi_v1(FsiVariant::Rep, 0, {});
  auto plain = prepare(sc, DefenseMode::DomPlusInvarspec, {});
  auto cons = prepare(sc, DefenseMode::DomPlusInvarspec, {Mitigation::ConservativeInvariance});
  EXPECT_TRUE(plain.policy.safe_sets[plain.target].members.empty());
  EXPECT_TRUE(cons.policy.safe_sets[cons.target].members.contains(2));
}

TEST(FixedVariant, PaddingEqualizesDispatch) {
  TrialSpec spec;
  spec.scenario = ScenarioKind::FsiV1Fixed;
  spec.mitigations = {Mitigation::PathBalancing};
  auto s0 = run_trial(spec, 0, 0);
  auto s1 = run_trial(spec, 0, 1);
  EXPECT_EQ(s0.report.observation, s1.report.observation);
  spec.mitigations.clear();
  EXPECT_NE(run_trial(spec, 0, 0).report.observation, run_trial(spec, 0, 1).report.observation);
}

// Balancing equalizes the target's first dispatch cycle when the inner
// branch is predicted correctly for each secret, at any ROB size.
TEST(FixedVariant, BalancedDispatchEqualProperty) {
  for (std::uint32_t rob : {12u, 16u, 32u, 64u}) {
    SimConfig cfg;
    cfg.core.rob_size = rob;
    std::vector<Cycle> dispatch;
    for (int secret : {0, 1}) {
      auto sc = build_fsi_v1_fixed(secret, cfg, true);
      auto prep = prepare(sc, DefenseMode::Unprotected, {Mitigation::PathBalancing});
      auto r = run(prep.program, sc.config, prep.policy);
      Cycle first = ~Cycle{0};
      for (const auto& u : r.trace.uops)
        if (u.instr == prep.target) first = std::min(first, *u.dispatch);
      dispatch.push_back(first);
    }
    EXPECT_EQ(dispatch[0], dispatch[1]) << "rob " << rob;
  }
}

TEST(Bsi, MshrContentionDelaysTarget) {
  TrialSpec spec;
  spec.scenario = ScenarioKind::BsiMshr;
  auto s0 = run_trial(spec, 0, 0);
  auto s1 = run_trial(spec, 0, 1);
  EXPECT_GT(*s1.report.observation.latency, *s0.report.observation.latency);
  spec.config.cache.mshr_entries = CacheConfig::kUnboundedMshrs;
  EXPECT_EQ(run_trial(spec, 0, 0).report.observation, run_trial(spec, 0, 1).report.observation);
}

TEST(Scenarios, AllBuildAndRunForBothSecrets) {
  for (auto kind : all_scenarios()) {
    TrialSpec spec;
    spec.scenario = kind;
    for (int secret : {0, 1}) {
      auto out = run_trial(spec, 0, secret);
      EXPECT_EQ(out.report.scenario, to_string(kind));
      EXPECT_LE(out.report.occupancy_peak, scenario_config(spec).core.rob_size);
      EXPECT_EQ(out.report.inferred, secret) << to_string(kind);
    }
  }
}
