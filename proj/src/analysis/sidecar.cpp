#include <istream>
#include <ostream>
#include <sstream>

#include "robsim/analysis.hpp"

namespace robsim {

namespace {

std::string bound(std::uint64_t v) { return v == kUnboundedPath ? "inf" : std::to_string(v); }

std::uint64_t parse_bound(const std::string& s) {
  if (s == "inf") return kUnboundedPath;
  return std::stoull(s);
}

std::string expect_word(std::istringstream& in, const char* what) {
  std::string w;
  if (!(in >> w)) throw AnalysisError(std::string("sidecar: missing ") + what);
  return w;
}

void expect_key(std::istringstream& in, const char* key) {
  if (expect_word(in, key) != key) throw AnalysisError(std::string("sidecar: expected '") + key + "'");
}

}  // namespace

void write_sidecar(std::ostream& out, const ProgramAnalysis& a) {
  out << "# robsim analysis sidecar v1\n";
  out << "instructions " << a.safe_sets.size() << "\n";
  for (const auto& ss : a.safe_sets) {
    out << "ss " << ss.instr << ":";
    for (InstrId m : ss.members) out << " " << m;
    out << "\n";
  }
  for (const auto& p : a.profiles) {
    out << "profile " << p.branch << " reconv " << p.reconvergence << " taken " << bound(p.taken.min) << " "
        << bound(p.taken.max) << " fallthrough " << bound(p.fallthrough.min) << " " << bound(p.fallthrough.max)
        << " min " << bound(p.min) << " max " << bound(p.max) << " variable " << (p.variable ? 1 : 0) << " after";
    for (InstrId i : p.after_reconvergence) out << " " << i;
    out << "\n";
  }
  for (const auto& d : a.diagnostics) out << "diag " << d << "\n";
}

ProgramAnalysis read_sidecar(std::istream& in) {
  ProgramAnalysis a;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "instructions") {
      a.safe_sets.resize(std::stoul(expect_word(ls, "count")));
      for (InstrId i = 0; i < a.safe_sets.size(); ++i) a.safe_sets[i].instr = i;
    } else if (kind == "ss") {
      std::string head = expect_word(ls, "instruction id");
      if (head.empty() || head.back() != ':') throw AnalysisError("sidecar: malformed ss line: " + line);
      InstrId id = static_cast<InstrId>(std::stoul(head.substr(0, head.size() - 1)));
      if (id >= a.safe_sets.size()) throw AnalysisError("sidecar: ss id out of range: " + line);
      InstrId m;
      while (ls >> m) a.safe_sets[id].members.insert(m);
    } else if (kind == "profile") {
      PathProfile p;
      p.branch = static_cast<InstrId>(std::stoul(expect_word(ls, "branch")));
      expect_key(ls, "reconv");
      p.reconvergence = static_cast<InstrId>(std::stoul(expect_word(ls, "reconvergence")));
      expect_key(ls, "taken");
      p.taken.min = parse_bound(expect_word(ls, "taken min"));
      p.taken.max = parse_bound(expect_word(ls, "taken max"));
      expect_key(ls, "fallthrough");
      p.fallthrough.min = parse_bound(expect_word(ls, "fallthrough min"));
      p.fallthrough.max = parse_bound(expect_word(ls, "fallthrough max"));
      expect_key(ls, "min");
      p.min = parse_bound(expect_word(ls, "min"));
      expect_key(ls, "max");
      p.max = parse_bound(expect_word(ls, "max"));
      expect_key(ls, "variable");
      p.variable = expect_word(ls, "variable") == "1";
      expect_key(ls, "after");
      InstrId i;
      while (ls >> i) p.after_reconvergence.push_back(i);
      a.profiles.push_back(std::move(p));
    } else if (kind == "diag") {
      a.diagnostics.push_back(line.size() > 5 ? line.substr(5) : std::string{});
    } else {
      throw AnalysisError("sidecar: unknown record '" + kind + "'");
    }
  }
  return a;
}

}  // namespace robsim
