#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "robsim/analysis.hpp"
#include "robsim/core.hpp"
#include "robsim/experiment.hpp"

using namespace robsim;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void print_analysis(std::ostream& out, const ProgramAnalysis& a) { write_sidecar(out, a); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robsim: out-of-order core simulator and ROB-contention attack laboratory"};
  app.require_subcommand(1);

  // run
  auto* run_cmd = app.add_subcommand("run", "Run a scenario x defense experiment");
  std::string config_path, defense, out_dir;
  std::vector<std::string> scenarios, mitigations;
  std::optional<std::uint64_t> trials, seed;
  run_cmd->add_option("--config", config_path, "Experiment config file (key = value)")->required();
  run_cmd->add_option("--scenario", scenarios, "Scenario (repeatable)");
  run_cmd->add_option("--defense", defense, "unprotected | dom | dom_plus_invarspec");
  run_cmd->add_option("--mitigation", mitigations, "Mitigation (repeatable; forms one set)");
  run_cmd->add_option("--trials", trials, "Trials per cell");
  run_cmd->add_option("--seed", seed, "Seed for secrets and latency jitter");
  run_cmd->add_option("--out", out_dir, "Output directory")->required();

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Print safe sets and path profiles of a program");
  std::string program_path, sidecar_path;
  analyze_cmd->add_option("program", program_path, "Assembly file")->required();
  analyze_cmd->add_option("--sidecar", sidecar_path, "Write the analysis sidecar here instead of stdout");

  // balance
  auto* balance_cmd = app.add_subcommand("balance", "Pad branch paths with NOPs and print the program");
  std::string balance_path;
  balance_cmd->add_option("program", balance_path, "Assembly file")->required();

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Run one program and dump its trace");
  std::string sim_path, sim_defense = "unprotected", sim_sidecar, uops_path, occ_path, sim_config;
  sim_cmd->add_option("program", sim_path, "Assembly file")->required();
  sim_cmd->add_option("--defense", sim_defense, "unprotected | dom | dom_plus_invarspec");
  sim_cmd->add_option("--sidecar", sim_sidecar, "Safe sets from an analysis sidecar (default: analyze the program)");
  sim_cmd->add_option("--config", sim_config, "Config file for core/cache parameters");
  sim_cmd->add_option("--uops-csv", uops_path, "Write the per-uop lifecycle CSV");
  sim_cmd->add_option("--occupancy-csv", occ_path, "Write the per-cycle occupancy CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run_cmd) {
      ExperimentConfig cfg = parse_experiment_config(slurp(config_path));
      if (!scenarios.empty()) {
        std::string joined;
        for (const auto& s : scenarios) joined += s + ",";
        apply_config_entry(cfg, "scenarios", joined);
      }
      if (!defense.empty()) apply_config_entry(cfg, "defenses", defense);
      if (!mitigations.empty()) {
        std::string joined;
        for (const auto& m : mitigations) joined += (joined.empty() ? "" : "+") + m;
        apply_config_entry(cfg, "mitigations", joined);
      }
      if (trials) cfg.trials = *trials;
      if (seed) cfg.seed = *seed;
      cfg.out = out_dir;
      auto result = run_experiment(cfg);
      for (const auto& m : result.messages) std::cerr << m << "\n";
      for (const auto& c : result.cells) {
        std::cout << to_string(c.scenario) << " " << to_string(c.mode) << " " << mitigations_label(c.mitigations)
                  << ": ";
        if (c.not_applicable)
          std::cout << "n/a\n";
        else
          std::cout << "accuracy " << c.summary.accuracy << (c.leak ? " LEAK" : "") << (c.violation() ? " VIOLATION" : "")
                    << "\n";
      }
      return result.exit_code;
    }
    if (*analyze_cmd) {
      auto program = parse_program(slurp(program_path));
      auto analysis = analyze_program(program);
      if (sidecar_path.empty()) {
        print_analysis(std::cout, analysis);
      } else {
        std::ofstream out(sidecar_path);
        print_analysis(out, analysis);
      }
      return kExitOk;
    }
    if (*balance_cmd) {
      auto out = balance_all(parse_program(slurp(balance_path)));
      for (const auto& r : out.refusals) std::cerr << "refused: " << r << "\n";
      std::cout << print_program(out.program);
      return out.refusals.empty() ? kExitOk : kExitUsage;
    }
    if (*sim_cmd) {
      auto program = parse_program(slurp(sim_path));
      SimConfig sim;
      if (!sim_config.empty()) {
        ExperimentConfig cfg = parse_experiment_config(slurp(sim_config));
        sim = cfg.sim;
      }
      DefensePolicy policy;
      auto mode = parse_defense_mode(sim_defense);
      if (!mode) throw ConfigError("unknown defense mode '" + sim_defense + "'");
      policy.mode = *mode;
      if (policy.mode == DefenseMode::DomPlusInvarspec) {
        if (sim_sidecar.empty()) {
          policy.safe_sets = compute_safe_sets(program);
        } else {
          std::ifstream in(sim_sidecar);
          if (!in) throw ConfigError("cannot read " + sim_sidecar);
          policy.safe_sets = read_sidecar(in).safe_sets;
        }
      }
      auto result = run(program, sim, policy);
      const auto& st = result.trace.stats;
      std::cout << "cycles " << st.cycles << " committed " << st.committed << " squashes " << st.squashes
                << " peak_occupancy " << st.peak_occupancy << "\n";
      for (const auto& w : result.trace.warnings) std::cerr << "warning: " << w << "\n";
      if (!uops_path.empty()) std::ofstream(uops_path) << uops_csv(result.trace);
      if (!occ_path.empty()) std::ofstream(occ_path) << occupancy_csv(result.trace);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const AnalysisError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "simulation fault: " << e.what() << "\n";
    return kExitSimulationFault;
  }
  return kExitUsage;
}
