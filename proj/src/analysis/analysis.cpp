#include "robsim/analysis.hpp"

#include <algorithm>
#include <functional>
#include <map>

namespace robsim {

ControlFlowGraph build_cfg(const Program& program) {
  const auto n = static_cast<InstrId>(program.size());
  ControlFlowGraph cfg;
  cfg.succ.resize(n + 1);
  cfg.pred.resize(n + 1);
  auto add = [&](InstrId from, InstrId to) {
    auto& s = cfg.succ[from];
    if (std::find(s.begin(), s.end(), to) != s.end()) return;
    s.push_back(to);
    cfg.pred[to].push_back(from);
  };
  for (InstrId i = 0; i < n; ++i) {
    const auto& in = program.at(i);
    switch (in.opcode) {
      case Opcode::Branch:
        add(i, in.target);
        add(i, i + 1);
        break;
      case Opcode::Jump:
        add(i, in.target);
        break;
      default:
        add(i, i + 1);
    }
  }
  return cfg;
}

std::vector<std::optional<InstrId>> immediate_post_dominators(const ControlFlowGraph& cfg) {
  const std::size_t total = cfg.succ.size();
  const InstrId root = cfg.exit();

  // Postorder over the reversed graph, rooted at the exit.
  std::vector<int> po_index(total, -1);
  std::vector<InstrId> order;
  std::vector<char> seen(total, 0);
  std::vector<std::pair<InstrId, std::size_t>> stack{{root, 0}};
  seen[root] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < cfg.pred[node].size()) {
      InstrId p = cfg.pred[node][next++];
      if (!seen[p]) {
        seen[p] = 1;
        stack.push_back({p, 0});
      }
    } else {
      po_index[node] = static_cast<int>(order.size());
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::vector<std::optional<InstrId>> ipdom(total);
  ipdom[root] = root;
  auto intersect = [&](InstrId a, InstrId b) {
    while (a != b) {
      while (po_index[a] < po_index[b]) a = *ipdom[a];
      while (po_index[b] < po_index[a]) b = *ipdom[b];
    }
    return a;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      InstrId b = *it;
      if (b == root) continue;
      std::optional<InstrId> next;
      for (InstrId s : cfg.succ[b]) {
        if (!ipdom[s]) continue;
        next = next ? intersect(s, *next) : s;
      }
      if (next && ipdom[b] != next) {
        ipdom[b] = next;
        changed = true;
      }
    }
  }
  ipdom[root].reset();
  return ipdom;
}

std::vector<DepEdge> DependenceGraph::into(InstrId to) const {
  std::vector<DepEdge> out;
  for (const auto& e : edges)
    if (e.to == to) out.push_back(e);
  return out;
}

namespace {

// Variables: registers occupy [0, kNumRegs); memory locations follow.
struct VarTable {
  std::map<std::string, int> memory;

  int mem(const AddressExpr& a) {
    auto [it, inserted] = memory.try_emplace(a.canonical(), kNumRegs + static_cast<int>(memory.size()));
    return it->second;
  }
};

}  // namespace

DependenceGraph build_dependence_graph(const Program& program) {
  const auto n = program.size();
  const auto cfg = build_cfg(program);
  VarTable vars;

  std::vector<std::optional<int>> def_var(n);
  std::vector<std::vector<std::pair<int, DepKind>>> uses(n);
  for (InstrId i = 0; i < n; ++i) {
    const auto& in = program.at(i);
    if (auto w = in.written_reg()) def_var[i] = *w;
    if (in.opcode == Opcode::Store) def_var[i] = vars.mem(in.addr);
    for (Reg r : in.read_regs()) uses[i].push_back({r, DepKind::Data});
    if (in.opcode == Opcode::Load) uses[i].push_back({vars.mem(in.addr), DepKind::Memory});
  }

  // Reaching definitions, one def-set per variable.
  using DefSets = std::map<int, std::set<InstrId>>;
  std::vector<DefSets> rd_in(n), rd_out(n);
  for (bool changed = true; changed;) {
    changed = false;
    for (InstrId i = 0; i < n; ++i) {
      DefSets in;
      for (InstrId p : cfg.pred[i])
        for (const auto& [v, defs] : rd_out[p]) in[v].insert(defs.begin(), defs.end());
      DefSets out = in;
      if (def_var[i]) out[*def_var[i]] = {i};
      if (in != rd_in[i] || out != rd_out[i]) {
        rd_in[i] = std::move(in);
        rd_out[i] = std::move(out);
        changed = true;
      }
    }
  }

  std::set<DepEdge> edges;
  for (InstrId u = 0; u < n; ++u) {
    for (auto [v, kind] : uses[u]) {
      auto it = rd_in[u].find(v);
      if (it == rd_in[u].end()) continue;
      for (InstrId d : it->second) edges.insert({d, u, kind});
    }
  }

  const auto ipdom = immediate_post_dominators(cfg);
  for (InstrId b = 0; b < n; ++b) {
    if (program.at(b).opcode != Opcode::Branch || cfg.succ[b].size() < 2) continue;
    for (InstrId s : cfg.succ[b]) {
      std::optional<InstrId> runner = s;
      while (runner && *runner != cfg.exit() && runner != ipdom[b]) {
        if (*runner != b) edges.insert({b, *runner, DepKind::Control});
        runner = ipdom[*runner];
      }
    }
  }

  DependenceGraph g;
  g.num_nodes = n;
  g.edges.assign(edges.begin(), edges.end());
  return g;
}

SafeSets compute_safe_sets(const DependenceGraph& graph) {
  SafeSets sets(graph.num_nodes);
  std::vector<std::vector<InstrId>> sources(graph.num_nodes);
  for (const auto& e : graph.edges)
    if (e.from < e.to) sources[e.to].push_back(e.from);
  for (InstrId i = 0; i < graph.num_nodes; ++i) {
    sets[i].instr = i;
    for (InstrId d : sources[i]) {
      sets[i].members.insert(d);
      sets[i].members.insert(sets[d].members.begin(), sets[d].members.end());
    }
  }
  return sets;
}

SafeSets compute_safe_sets(const Program& program) { return compute_safe_sets(build_dependence_graph(program)); }

Reconvergence find_reconvergence(const Program& program, InstrId branch) {
  const auto tag = "@" + std::to_string(branch) + ": ";
  if (branch >= program.size() || program.at(branch).opcode != Opcode::Branch)
    return {std::nullopt, tag + "not a conditional branch"};
  const auto& in = program.at(branch);
  if (in.target == branch + 1) return {std::nullopt, tag + "both successors coincide"};
  if (in.target <= branch) return {std::nullopt, tag + "loop back-edge; no finite reconvergence in scope"};
  const auto cfg = build_cfg(program);
  const auto ipdom = immediate_post_dominators(cfg);
  if (!ipdom[branch]) return {std::nullopt, tag + "no post-dominator (cannot reach program end)"};
  if (*ipdom[branch] == cfg.exit()) return {std::nullopt, tag + "paths only rejoin at program end"};
  return {*ipdom[branch], {}};
}

namespace {

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
  return (a > kUnboundedPath - b) ? kUnboundedPath : a + b;
}

class PathCounter {
 public:
  PathCounter(const Program& program, const ControlFlowGraph& cfg, InstrId reconv)
      : program_(program), cfg_(cfg), reconv_(reconv), memo_(cfg.succ.size()), state_(cfg.succ.size(), 0) {}

  PathRange from(InstrId node) {
    if (node == reconv_ || node == cfg_.exit()) return {0, 0};
    if (state_[node] == 1) {  // back edge
      variable_ = true;
      return {kUnboundedPath, kUnboundedPath};
    }
    if (state_[node] == 2) return memo_[node];
    state_[node] = 1;

    const auto& in = program_.at(node);
    PathRange self{1, 1};
    if (is_rep(in.opcode)) {
      variable_ = true;
      self = {rep_expansion_count(in.opcode, 0), kUnboundedPath};
    }
    std::optional<PathRange> best;
    bool looped = false;
    for (InstrId s : cfg_.succ[node]) {
      PathRange r = from(s);
      if (r.min == kUnboundedPath) {
        looped = true;
        continue;
      }
      best = best ? PathRange{std::min(best->min, r.min), std::max(best->max, r.max)} : r;
    }
    PathRange out = best ? PathRange{sat_add(self.min, best->min), sat_add(self.max, best->max)} : self;
    if (looped) out.max = kUnboundedPath;
    state_[node] = 2;
    memo_[node] = out;
    return out;
  }

  bool variable() const { return variable_; }

 private:
  const Program& program_;
  const ControlFlowGraph& cfg_;
  InstrId reconv_;
  std::vector<PathRange> memo_;
  std::vector<char> state_;
  bool variable_ = false;
};

}  // namespace

PathProfile analyze_paths(const Program& program, InstrId branch) {
  auto rc = find_reconvergence(program, branch);
  if (!rc.point) throw AnalysisError(rc.diagnostic);
  const auto cfg = build_cfg(program);

  PathProfile prof;
  prof.branch = branch;
  prof.reconvergence = *rc.point;
  // Each side gets its own counter so memoised ranges never leak across sides.
  PathCounter taken(program, cfg, *rc.point);
  PathCounter fall(program, cfg, *rc.point);
  prof.taken = taken.from(program.at(branch).target);
  prof.fallthrough = fall.from(branch + 1);
  prof.variable = taken.variable() || fall.variable();
  if (prof.variable) {
    if (taken.variable()) prof.taken.max = kUnboundedPath;
    if (fall.variable()) prof.fallthrough.max = kUnboundedPath;
  }
  prof.min = std::min(prof.taken.min, prof.fallthrough.min);
  prof.max = std::max(prof.taken.max, prof.fallthrough.max);

  std::vector<char> seen(cfg.succ.size(), 0);
  std::vector<InstrId> work{*rc.point};
  seen[*rc.point] = 1;
  while (!work.empty()) {
    InstrId n = work.back();
    work.pop_back();
    prof.after_reconvergence.push_back(n);
    for (InstrId s : cfg.succ[n])
      if (s != cfg.exit() && !seen[s]) {
        seen[s] = 1;
        work.push_back(s);
      }
  }
  std::sort(prof.after_reconvergence.begin(), prof.after_reconvergence.end());
  return prof;
}

ProgramAnalysis analyze_program(const Program& program) {
  ProgramAnalysis a;
  a.safe_sets = compute_safe_sets(program);
  for (InstrId b = 0; b < program.size(); ++b) {
    if (program.at(b).opcode != Opcode::Branch) continue;
    auto rc = find_reconvergence(program, b);
    if (!rc.point) {
      a.diagnostics.push_back(rc.diagnostic);
      continue;
    }
    a.profiles.push_back(analyze_paths(program, b));
  }
  return a;
}

SafeSets conservative_filter(const SafeSets& safe_sets, const std::vector<PathProfile>& profiles) {
  SafeSets out = safe_sets;
  for (const auto& prof : profiles) {
    if (prof.balanced()) continue;
    for (InstrId i : prof.after_reconvergence)
      if (prof.branch < i && i < out.size()) out[i].members.insert(prof.branch);
  }
  return out;
}

// ---- path balancing ----

namespace {

MacroInstruction make_nop() {
  MacroInstruction n;
  n.opcode = Opcode::Nop;
  return n;
}

void insert_at(Program& p, InstrId pos, std::vector<MacroInstruction> block) {
  const auto shift = static_cast<InstrId>(block.size());
  p.instructions.insert(p.instructions.begin() + pos, std::make_move_iterator(block.begin()),
                        std::make_move_iterator(block.end()));
  auto remap = [&](InstrId id) { return id >= pos ? id + shift : id; };
  std::map<InstrId, bool> preds;
  for (auto [id, t] : p.forced_predictions) preds[remap(id)] = t;
  p.forced_predictions = std::move(preds);
  std::set<InstrId> bal;
  for (auto id : p.balanced_branches) bal.insert(remap(id));
  p.balanced_branches = std::move(bal);
  p.renumber();
}

std::string fresh_label(const Program& p, InstrId branch) {
  for (int k = 0;; ++k) {
    std::string name = "__pad" + std::to_string(branch) + "_" + std::to_string(k);
    if (!p.labels.contains(name)) return name;
  }
}

std::uint64_t side_length(const PathRange& r) { return r.max; }

}  // namespace

Program balance_paths(const Program& program, InstrId branch) {
  const auto tag = "@" + std::to_string(branch) + ": ";
  auto prof = analyze_paths(program, branch);
  if (prof.variable) throw AnalysisError(tag + "path contains a loop or REP; a variable-length path cannot be balanced");
  if (prof.taken.min != prof.taken.max || prof.fallthrough.min != prof.fallthrough.max)
    throw AnalysisError(tag + "a side has unequal inner paths; balance nested branches first");

  Program q = program;
  for (int iter = 0; iter < 8; ++iter) {
    prof = analyze_paths(q, branch);
    const auto taken = side_length(prof.taken);
    const auto fall = side_length(prof.fallthrough);
    if (taken == fall) {
      q.balanced_branches.insert(branch);
      return q;
    }
    if (fall < taken) {
      insert_at(q, branch + 1, std::vector<MacroInstruction>(taken - fall, make_nop()));
      continue;
    }
    // Taken side is shorter: open a NOP block in front of the target. If the
    // previous instruction falls into the target, hop over the block.
    const InstrId target = q.at(branch).target;
    const std::string pad = fresh_label(q, branch);
    std::vector<MacroInstruction> block;
    const auto& prev = q.at(target - 1);
    if (prev.opcode != Opcode::Jump) {
      MacroInstruction hop;
      hop.opcode = Opcode::Jump;
      hop.target_label = q.at(target).label;
      block.push_back(std::move(hop));
    }
    std::vector<MacroInstruction> nops(fall - taken, make_nop());
    nops.front().label = pad;
    block.insert(block.end(), nops.begin(), nops.end());
    insert_at(q, target, std::move(block));
    q.instructions[branch].target_label = pad;
    q.renumber();
  }
  throw std::logic_error(tag + "balancing did not converge");
}

BalanceOutcome balance_all(const Program& program) {
  BalanceOutcome out{program, {}};
  std::set<std::string> refusals;
  for (int pass = 0; pass < 32; ++pass) {
    bool changed = false;
    for (InstrId b = static_cast<InstrId>(out.program.size()); b-- > 0;) {
      if (out.program.at(b).opcode != Opcode::Branch) continue;
      if (!find_reconvergence(out.program, b).point) continue;
      if (analyze_paths(out.program, b).balanced()) {
        out.program.balanced_branches.insert(b);
        continue;
      }
      try {
        out.program = balance_paths(out.program, b);
        changed = true;
      } catch (const AnalysisError& e) {
        refusals.insert(e.what());
      }
    }
    if (!changed) {
      out.refusals.assign(refusals.begin(), refusals.end());
      // Drop certificates invalidated by later padding.
      std::erase_if(out.program.balanced_branches,
                    [&](InstrId b) { return !analyze_paths(out.program, b).balanced(); });
      return out;
    }
  }
  throw std::logic_error("path balancing did not reach a fixed point");
}

void verify_balancing_certificate(const Program& program) {
  if (program.balanced_branches.empty()) throw AnalysisError("program carries no path-balancing certificate");
  for (InstrId b : program.balanced_branches) {
    if (b >= program.size() || program.at(b).opcode != Opcode::Branch)
      throw AnalysisError("certificate names @" + std::to_string(b) + ", which is not a branch");
    if (!analyze_paths(program, b).balanced())
      throw AnalysisError("certificate for @" + std::to_string(b) + " does not hold");
  }
}

}  // namespace robsim
