#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "robsim/core.hpp"
#include "robsim/defense.hpp"

namespace robsim {

enum class ScenarioKind : std::uint8_t { FsiV1Loop, FsiV1Rep, FsiV2Order, BsiMshr, FsiV1Fixed };

std::string_view to_string(ScenarioKind k);
std::optional<ScenarioKind> parse_scenario(std::string_view s);
std::vector<ScenarioKind> all_scenarios();

/// Fixed data layout shared by every scenario (64-byte lines, 64 sets).
namespace layout {
inline constexpr Addr kCondPtr = 0x1040;  // holds kCond
inline constexpr Addr kCond = 0x1080;     // holds 1: the outer branch is taken
inline constexpr Addr kSecret = 0x10c0;   // resident before the run
inline constexpr Addr kProbe = 0x1100;    // flushed before the run
inline constexpr Addr kLineA = 0x1140;    // correct-path load (order receiver)
inline constexpr Addr kLineB = 0x2140;    // same set as kLineA
inline constexpr Addr kBsiTarget = 0x1180;
inline constexpr Addr kGadgetBase = 0x4200;
}  // namespace layout

enum class ReceiverKind : std::uint8_t { TimingThreshold, SetOrder };

struct Receiver {
  ReceiverKind kind = ReceiverKind::TimingThreshold;
  /// Timing: latency above the threshold reads as 1.
  double threshold = 0;
  /// Set order: head of `set_index` equal to `line_b` reads as 1.
  std::uint32_t set_index = 0;
  Addr line_b = 0;
};

struct Observation {
  std::optional<Cycle> latency;
  std::vector<Addr> snapshot;

  std::string str() const;
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::FsiV1Loop;
  Program program;
  Receiver receiver;
  /// Label of the interference target.
  std::string target_label;
  SimConfig config;
  int secret = 0;
};

enum class FsiVariant : std::uint8_t { Loop, Rep };

/// Throws std::invalid_argument on a configuration the attack cannot use.
Scenario build_fsi_v1(FsiVariant variant, int secret, const SimConfig& config);
/// Straight-line 10-uop gadget instead of a loop. With `predict_gating`
/// the inner branch is predicted correctly for the given secret.
Scenario build_fsi_v1_fixed(int secret, const SimConfig& config, bool predict_gating = false);
Scenario build_fsi_v2(int secret, const SimConfig& config, Addr line_a = layout::kLineA, Addr line_b = layout::kLineB);
Scenario build_bsi_mshr(int secret, const SimConfig& config);
Scenario build_scenario(ScenarioKind kind, int secret, const SimConfig& config);

/// Decodes a bit from the observation alone.
int infer_secret(const Observation& observation, const Receiver& receiver);

struct PreparedScenario {
  Program program;
  DefensePolicy policy;
  InstrId target = 0;
};

/// Applies compile-time mitigations and builds the run-time policy. Throws
/// AnalysisError when path balancing refuses the program.
PreparedScenario prepare(const Scenario& scenario, DefenseMode mode, const std::set<Mitigation>& mitigations,
                         std::uint64_t predicted_rep_count = kDefaultPredictedRepCount);

/// Receiver reading of a finished run.
Observation observe(const Scenario& scenario, const PreparedScenario& prepared, const RunResult& result);

struct ScenarioReport {
  std::uint64_t trial = 0;
  std::string scenario;
  std::string defense;
  std::string mitigations;
  Observation observation;
  int inferred = 0;
  int truth = 0;
  std::uint32_t occupancy_peak = 0;

  friend bool operator==(const ScenarioReport&, const ScenarioReport&) = default;
};

struct TrialSpec {
  ScenarioKind scenario = ScenarioKind::FsiV1Loop;
  DefenseMode mode = DefenseMode::Unprotected;
  std::set<Mitigation> mitigations;
  SimConfig config;
  std::uint64_t seed = 0;
  std::uint64_t predicted_rep_count = kDefaultPredictedRepCount;
  /// ROB size for the fixed-length variant, small enough for a 10-uop gadget.
  std::uint32_t fixed_variant_rob_size = 12;
};

/// Config actually used for `spec.scenario` (the fixed variant overrides rob_size).
SimConfig scenario_config(const TrialSpec& spec);

struct TrialOutcome {
  ScenarioReport report;
  Trace trace;
};

/// One trial with an explicit secret. Jitter is seeded from (seed, trial).
TrialOutcome run_trial(const TrialSpec& spec, std::uint64_t trial, int secret);

/// n trials; trial secrets come from a generator seeded with `spec.seed`.
std::vector<ScenarioReport> run_trials(const TrialSpec& spec, std::uint64_t n_trials);

}  // namespace robsim
