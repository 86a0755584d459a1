#include "robsim/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace robsim {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    auto item = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ConfigError("'" + key + "': expected a non-negative integer, got '" + value + "'");
  return v;
}

std::set<Mitigation> parse_mitigation_set(const std::string& text) {
  std::set<Mitigation> set;
  if (text == "none") return set;
  for (const auto& name : split(text, '+')) {
    auto m = parse_mitigation(name);
    if (!m) throw ConfigError("unknown mitigation '" + name + "'");
    set.insert(*m);
  }
  return set;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void apply_config_entry(ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto& core = c.sim.core;
  auto& cache = c.sim.cache;
  auto u32 = [&] { return parse_number<std::uint32_t>(key, value); };
  auto u64 = [&] { return parse_number<std::uint64_t>(key, value); };

  if (key == "scenarios" || key == "scenario") {
    c.scenarios.clear();
    for (const auto& name : split(value, ',')) {
      if (name == "all") {
        c.scenarios = all_scenarios();
        continue;
      }
      auto k = parse_scenario(name);
      if (!k) throw ConfigError("unknown scenario '" + name + "'");
      c.scenarios.push_back(*k);
    }
  } else if (key == "defenses" || key == "defense") {
    c.defenses.clear();
    for (const auto& name : split(value, ',')) {
      if (name == "all") {
        c.defenses = {DefenseMode::Unprotected, DefenseMode::Dom, DefenseMode::DomPlusInvarspec};
        continue;
      }
      auto m = parse_defense_mode(name);
      if (!m) throw ConfigError("unknown defense mode '" + name + "'");
      c.defenses.push_back(*m);
    }
  } else if (key == "mitigations") {
    c.mitigation_sets.clear();
    for (const auto& set : split(value, ';')) c.mitigation_sets.push_back(parse_mitigation_set(set));
    if (c.mitigation_sets.empty()) c.mitigation_sets.push_back({});
  } else if (key == "trials") {
    c.trials = u64();
  } else if (key == "seed") {
    c.seed = u64();
  } else if (key == "out") {
    c.out = value;
  } else if (key == "window") {
    c.window = u64();
  } else if (key == "predicted_rep_count") {
    c.predicted_rep_count = u64();
  } else if (key == "fixed_variant_rob_size") {
    c.fixed_variant_rob_size = u32();
  } else if (key == "rob_size") {
    core.rob_size = u32();
  } else if (key == "decode_width") {
    core.decode_width = u32();
  } else if (key == "commit_width") {
    core.commit_width = u32();
  } else if (key == "load_ports") {
    core.load_ports = u32();
  } else if (key == "alu_ports") {
    core.alu_ports = u32();
  } else if (key == "alu_latency") {
    core.alu_latency = u64();
  } else if (key == "string_latency") {
    core.string_latency = u64();
  } else if (key == "store_latency") {
    core.store_latency = u64();
  } else if (key == "branch_latency") {
    core.branch_latency = u64();
  } else if (key == "expansion_cap") {
    core.expansion_cap = u64();
  } else if (key == "cycle_limit") {
    core.cycle_limit = u64();
  } else if (key == "num_sets") {
    cache.num_sets = u32();
  } else if (key == "ways") {
    cache.ways = u32();
  } else if (key == "line_bytes") {
    cache.line_bytes = u32();
  } else if (key == "hit_cycles") {
    cache.hit_cycles = u64();
  } else if (key == "miss_cycles") {
    cache.miss_cycles = u64();
  } else if (key == "mshr_entries") {
    cache.mshr_entries = value == "unbounded" ? CacheConfig::kUnboundedMshrs : u32();
  } else if (key == "miss_jitter") {
    cache.miss_jitter = u64();
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected 'key = value'");
    try {
      apply_config_entry(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(no) + ": " + e.what());
    }
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (scenarios.empty()) throw ConfigError("no scenarios selected");
  if (defenses.empty()) throw ConfigError("no defense mode selected");
  if (trials == 0) throw ConfigError("trials must be >= 1");
  if (window == 0) throw ConfigError("window must be >= 1");
  if (fixed_variant_rob_size == 0) throw ConfigError("fixed_variant_rob_size must be >= 1");
  if (out.empty()) throw ConfigError("no output directory given");
  try {
    sim.core.validate();
    sim.cache.validate();
    SimConfig fixed = sim;
    fixed.core.rob_size = fixed_variant_rob_size;
    fixed.core.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Summary summarize(const std::vector<ScenarioReport>& reports, std::uint64_t window) {
  Summary s;
  std::map<int, std::vector<const ScenarioReport*>> by_secret;
  for (const auto& r : reports) {
    ++s.trials;
    if (r.inferred == r.truth) ++s.correct;
    by_secret[r.truth].push_back(&r);
  }
  s.accuracy = s.trials ? static_cast<double>(s.correct) / static_cast<double>(s.trials) : 0.0;
  for (const auto& [secret, rs] : by_secret) {
    LatencyStats st;
    st.secret = secret;
    st.count = rs.size();
    std::vector<Cycle> lat;
    for (const auto* r : rs)
      if (r->observation.latency) lat.push_back(*r->observation.latency);
    if (!lat.empty()) {
      double sum = 0;
      for (auto v : lat) sum += static_cast<double>(v);
      st.mean = sum / static_cast<double>(lat.size());
      st.min = *std::min_element(lat.begin(), lat.end());
      st.max = *std::max_element(lat.begin(), lat.end());
      for (std::size_t i = 0; i < lat.size(); i += window) {
        const std::size_t end = std::min<std::size_t>(lat.size(), i + window);
        double w = 0;
        for (std::size_t j = i; j < end; ++j) w += static_cast<double>(lat[j]);
        st.windows.push_back(w / static_cast<double>(end - i));
      }
    }
    s.per_secret.push_back(std::move(st));
  }
  return s;
}

bool promises_no_leak(ScenarioKind scenario, DefenseMode mode, const std::set<Mitigation>& mitigations) {
  const bool fsi = scenario != ScenarioKind::BsiMshr;
  if (fsi && mode == DefenseMode::Dom) return true;
  if (fsi && mode == DefenseMode::DomPlusInvarspec && mitigations.contains(Mitigation::ConservativeInvariance))
    return true;
  if (scenario == ScenarioKind::FsiV1Fixed && mitigations.contains(Mitigation::PathBalancing)) return true;
  if (scenario == ScenarioKind::FsiV1Rep && mitigations.contains(Mitigation::OperandIndependentFill)) return true;
  return false;
}

bool leak_detected(const Summary& summary) {
  if (summary.per_secret.size() < 2 || summary.trials == 0) return false;
  // A receiver stuck on one answer scores the majority-class rate; only
  // accuracy above both that baseline and 0.6 counts as recovery.
  std::uint64_t majority = 0;
  for (const auto& st : summary.per_secret) majority = std::max(majority, st.count);
  const double baseline = static_cast<double>(majority) / static_cast<double>(summary.trials);
  return summary.accuracy > 0.6 && summary.accuracy > baseline;
}

void write_reports_csv(std::ostream& out, const std::vector<ScenarioReport>& reports, bool header) {
  if (header) out << "trial,scenario,defense,mitigations,observation,inferred,truth,occupancy_peak\n";
  for (const auto& r : reports)
    out << r.trial << ',' << r.scenario << ',' << r.defense << ',' << r.mitigations << ',' << r.observation.str()
        << ',' << r.inferred << ',' << r.truth << ',' << r.occupancy_peak << '\n';
}

void write_summary_csv(std::ostream& out, const std::vector<CellResult>& cells) {
  out << "scenario,defense,mitigations,status,trials,accuracy,leak,promised_no_leak,violation,"
         "secret0_trials,secret0_mean,secret0_min,secret0_max,secret1_trials,secret1_mean,secret1_min,secret1_max,"
         "note\n";
  for (const auto& c : cells) {
    out << to_string(c.scenario) << ',' << to_string(c.mode) << ',' << mitigations_label(c.mitigations) << ','
        << (c.not_applicable ? "n/a" : "ok") << ',' << c.summary.trials << ','
        << (c.not_applicable ? std::string{} : fmt(c.summary.accuracy)) << ',' << (c.leak ? 1 : 0) << ','
        << (c.promised ? 1 : 0) << ',' << (c.violation() ? 1 : 0);
    for (int secret : {0, 1}) {
      const LatencyStats* st = nullptr;
      for (const auto& x : c.summary.per_secret)
        if (x.secret == secret) st = &x;
      out << ',' << (st ? std::to_string(st->count) : "0") << ',' << (st && st->mean ? fmt(*st->mean) : "") << ','
          << (st && st->min ? std::to_string(*st->min) : "") << ',' << (st && st->max ? std::to_string(*st->max) : "");
    }
    std::string note = c.not_applicable.value_or("");
    std::replace(note.begin(), note.end(), ',', ' ');
    out << ',' << note << '\n';
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentResult result;
  try {
    config.validate();
  } catch (const ConfigError& e) {
    result.exit_code = kExitUsage;
    result.messages.push_back(e.what());
    return result;
  }

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.out / "occupancy", ec);
  if (ec) {
    result.exit_code = kExitUsage;
    result.messages.push_back("cannot create output directory " + config.out.string() + ": " + ec.message());
    return result;
  }
  std::ofstream reports_csv(config.out / "reports.csv");
  std::ofstream windows_csv(config.out / "windows.csv");
  write_reports_csv(reports_csv, {}, true);
  windows_csv << "scenario,defense,mitigations,secret,window,mean\n";

  bool fault = false;
  for (ScenarioKind kind : config.scenarios) {
    for (DefenseMode mode : config.defenses) {
      for (const auto& mits : config.mitigation_sets) {
        CellResult cell;
        cell.scenario = kind;
        cell.mode = mode;
        cell.mitigations = mits;
        cell.promised = promises_no_leak(kind, mode, mits);

        TrialSpec spec;
        spec.scenario = kind;
        spec.mode = mode;
        spec.mitigations = mits;
        spec.config = config.sim;
        spec.seed = config.seed;
        spec.predicted_rep_count = config.predicted_rep_count;
        spec.fixed_variant_rob_size = config.fixed_variant_rob_size;

        const std::string cell_name =
            std::string(to_string(kind)) + "/" + std::string(to_string(mode)) + "/" + mitigations_label(mits);
        std::vector<ScenarioReport> reports;
        try {
          reports = run_trials(spec, config.trials);
        } catch (const AnalysisError& e) {
          cell.not_applicable = e.what();
          result.messages.push_back(cell_name + ": n/a (" + e.what() + ")");
          result.cells.push_back(std::move(cell));
          continue;
        } catch (const std::exception& e) {
          fault = true;
          result.messages.push_back(cell_name + ": simulation fault: " + e.what());
          continue;
        }

        write_reports_csv(reports_csv, reports, false);
        cell.summary = summarize(reports, config.window);
        cell.leak = leak_detected(cell.summary);
        for (const auto& st : cell.summary.per_secret)
          for (std::size_t w = 0; w < st.windows.size(); ++w)
            windows_csv << to_string(kind) << ',' << to_string(mode) << ',' << mitigations_label(mits) << ','
                        << st.secret << ',' << w << ',' << fmt(st.windows[w]) << '\n';

        for (int secret : {0, 1}) {
          auto it = std::find_if(reports.begin(), reports.end(), [&](const auto& r) { return r.truth == secret; });
          if (it == reports.end()) continue;
          auto outcome = run_trial(spec, it->trial, secret);
          std::ofstream occ(config.out / "occupancy" /
                            (std::string(to_string(kind)) + "__" + std::string(to_string(mode)) + "__" +
                             mitigations_label(mits) + "__s" + std::to_string(secret) + ".csv"));
          occ << occupancy_csv(outcome.trace);
        }
        if (cell.violation())
          result.messages.push_back(cell_name + ": leak detected where the defense promises none (accuracy " +
                                    fmt(cell.summary.accuracy) + ")");
        result.cells.push_back(std::move(cell));
      }
    }
  }

  std::ofstream summary_csv(config.out / "summary.csv");
  write_summary_csv(summary_csv, result.cells);

  const bool violation = std::any_of(result.cells.begin(), result.cells.end(), [](const auto& c) { return c.violation(); });
  result.exit_code = fault ? kExitSimulationFault : violation ? kExitSecurityViolation : kExitOk;
  return result;
}

}  // namespace robsim
