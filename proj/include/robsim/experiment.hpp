#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "robsim/scenarios.hpp"

namespace robsim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::vector<ScenarioKind> scenarios;
  std::vector<DefenseMode> defenses{DefenseMode::Unprotected};
  /// Each element is one cell's mitigation set.
  std::vector<std::set<Mitigation>> mitigation_sets{{}};
  SimConfig sim;
  std::uint64_t trials = 1000;
  std::uint64_t seed = 1;
  std::uint64_t predicted_rep_count = kDefaultPredictedRepCount;
  std::uint32_t fixed_variant_rob_size = 12;
  std::uint64_t window = 100;
  std::filesystem::path out;

  /// Throws ConfigError.
  void validate() const;
};

/// `key = value` lines, `#` comments. Unknown keys and bad values throw
/// ConfigError naming the line.
ExperimentConfig parse_experiment_config(std::string_view text);
/// Applies one `key=value` override on top of an existing config.
void apply_config_entry(ExperimentConfig& config, const std::string& key, const std::string& value);

struct LatencyStats {
  int secret = 0;
  std::uint64_t count = 0;
  std::optional<double> mean;
  std::optional<Cycle> min;
  std::optional<Cycle> max;
  /// Mean latency of consecutive windows of this secret's reports.
  std::vector<double> windows;
};

struct Summary {
  std::uint64_t trials = 0;
  std::uint64_t correct = 0;
  double accuracy = 0;
  /// One entry per secret value present, ascending.
  std::vector<LatencyStats> per_secret;
};

Summary summarize(const std::vector<ScenarioReport>& reports, std::uint64_t window = 100);

/// Cells in which the selected defense promises no leak.
bool promises_no_leak(ScenarioKind scenario, DefenseMode mode, const std::set<Mitigation>& mitigations);
/// A cell leaks when both secrets occur and accuracy exceeds 0.6.
bool leak_detected(const Summary& summary);

struct CellResult {
  ScenarioKind scenario = ScenarioKind::FsiV1Loop;
  DefenseMode mode = DefenseMode::Unprotected;
  std::set<Mitigation> mitigations;
  /// Set when a compile-time mitigation refused the program.
  std::optional<std::string> not_applicable;
  Summary summary;
  bool leak = false;
  bool promised = false;
  bool violation() const { return !not_applicable && promised && leak; }
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitSimulationFault = 2;
inline constexpr int kExitSecurityViolation = 3;

struct ExperimentResult {
  int exit_code = kExitOk;
  std::vector<CellResult> cells;
  std::vector<std::string> messages;
};

/// Runs every (scenario, defense, mitigations) cell and writes reports.csv,
/// summary.csv, windows.csv and per-cell occupancy series under `out`.
ExperimentResult run_experiment(const ExperimentConfig& config);

void write_reports_csv(std::ostream& out, const std::vector<ScenarioReport>& reports, bool header = true);
void write_summary_csv(std::ostream& out, const std::vector<CellResult>& cells);

}  // namespace robsim
