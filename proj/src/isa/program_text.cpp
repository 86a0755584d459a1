// Line-oriented assembly: parse and canonical print. Grammar in docs/asm_format.md.

#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "robsim/isa.hpp"

namespace robsim {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t depth = 0, start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '[') ++depth;
    if (s[i] == ']' && depth > 0) --depth;
    if (s[i] == sep && depth == 0) {
      parts.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  parts.push_back(trim(s.substr(start)));
  return parts;
}

bool is_ident(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_' || s[0] == '.')) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  return true;
}

class LineParser {
 public:
  explicit LineParser(std::size_t line) : line_(line) {}

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_, msg); }

  Word number(std::string_view s) const {
    s = trim(s);
    bool neg = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
      neg = s[0] == '-';
      s.remove_prefix(1);
    }
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
      base = 16;
      s.remove_prefix(2);
    }
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) fail("bad number '" + std::string(s) + "'");
    return neg ? -static_cast<Word>(v) : static_cast<Word>(v);
  }

  std::optional<Reg> try_reg(std::string_view s) const {
    s = trim(s);
    if (s.size() < 2 || (s[0] != 'r' && s[0] != 'R')) return std::nullopt;
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    if (v >= kNumRegs) fail("register out of range '" + std::string(s) + "'");
    return static_cast<Reg>(v);
  }

  Reg reg(std::string_view s) const {
    auto r = try_reg(s);
    if (!r) fail("expected register, got '" + std::string(s) + "'");
    return *r;
  }

  Operand operand(std::string_view s) const {
    if (auto r = try_reg(s)) return Operand::of_reg(*r);
    s = trim(s);
    if (!s.empty() && s[0] == '#') s.remove_prefix(1);
    return Operand::of_imm(number(s));
  }

  AddressExpr address(std::string_view s) const {
    s = trim(s);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') fail("expected [address], got '" + std::string(s) + "'");
    std::string body;
    for (char c : s.substr(1, s.size() - 2))
      if (!std::isspace(static_cast<unsigned char>(c))) body.push_back(c);
    AddressExpr a;
    std::string_view b = body;
    if (!b.empty() && (b[0] == 'r' || b[0] == 'R')) {
      auto op = b.find_first_of("+-");
      a.base = reg(b.substr(0, op));
      if (op != std::string_view::npos) a.offset = number(b.substr(op));
    } else {
      a.offset = number(b);
    }
    return a;
  }

  std::string label(std::string_view s) const {
    s = trim(s);
    if (!is_ident(s)) fail("bad label '" + std::string(s) + "'");
    return std::string(s);
  }

  void arity(const std::vector<std::string_view>& ops, std::size_t lo, std::size_t hi, std::string_view name) const {
    std::size_t n = (ops.size() == 1 && ops[0].empty()) ? 0 : ops.size();
    if (n < lo || n > hi) fail(std::string(name) + ": wrong operand count");
  }

 private:
  std::size_t line_;
};

std::optional<Opcode> opcode_of(std::string_view mnemonic) {
  static const std::pair<std::string_view, Opcode> table[] = {
      {"load", Opcode::Load},         {"store", Opcode::Store},       {"alu", Opcode::Alu},
      {"branch", Opcode::Branch},     {"jump", Opcode::Jump},         {"rep_movs", Opcode::RepMovs},
      {"rep_lods", Opcode::RepLods},  {"fence", Opcode::Fence},       {"setshift", Opcode::SetShift},
      {"nop", Opcode::Nop},
  };
  for (auto [name, op] : table)
    if (name == mnemonic) return op;
  return std::nullopt;
}

struct PendingRef {
  std::size_t line;
  std::string label;
};

}  // namespace

Program parse_program(std::string_view text, Addr address_space) {
  Program prog;
  std::vector<std::size_t> instr_line;
  std::vector<std::pair<PendingRef, bool>> predictions;
  std::vector<PendingRef> balanced;
  std::string pending_label;
  std::size_t pending_label_line = 0;

  auto check_addr = [&](const LineParser& p, Word a) {
    if (a < 0 || static_cast<Addr>(a) >= address_space) p.fail("address outside address space");
    return static_cast<Addr>(a);
  };

  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    LineParser p(lineno);
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line[0] == '.') {
      auto sp = line.find_first_of(" \t");
      std::string dir = lower(line.substr(0, sp));
      auto args = sp == std::string_view::npos ? std::vector<std::string_view>{}
                                               : split(trim(line.substr(sp)), ' ');
      std::erase_if(args, [](std::string_view a) { return a.empty(); });
      auto need = [&](std::size_t n) {
        if (args.size() != n) p.fail(dir + ": expected " + std::to_string(n) + " argument(s)");
      };
      if (dir == ".data") {
        need(2);
        prog.data_init[check_addr(p, p.number(args[0]))] = p.number(args[1]);
      } else if (dir == ".warm") {
        need(1);
        prog.warm_lines.insert(check_addr(p, p.number(args[0])));
      } else if (dir == ".flush") {
        need(1);
        prog.flush_lines.insert(check_addr(p, p.number(args[0])));
      } else if (dir == ".reg") {
        need(2);
        prog.reg_init[p.reg(args[0])] = p.number(args[1]);
      } else if (dir == ".predict") {
        need(2);
        std::string dirn = lower(args[1]);
        if (dirn != "taken" && dirn != "not-taken") p.fail(".predict: expected taken|not-taken");
        predictions.push_back({{lineno, std::string(args[0])}, dirn == "taken"});
      } else if (dir == ".balanced") {
        need(1);
        balanced.push_back({lineno, std::string(args[0])});
      } else {
        p.fail("unknown directive '" + dir + "'");
      }
      continue;
    }

    // Optional leading label.
    if (auto colon = line.find(':'); colon != std::string_view::npos && line.find('[') > colon) {
      std::string name = p.label(line.substr(0, colon));
      if (!pending_label.empty()) p.fail("instruction already labeled '" + pending_label + "'");
      pending_label = name;
      pending_label_line = lineno;
      line = trim(line.substr(colon + 1));
      if (line.empty()) continue;
    }

    auto sp = line.find_first_of(" \t");
    std::string mnemonic = lower(line.substr(0, sp));
    std::string_view rest = sp == std::string_view::npos ? std::string_view{} : trim(line.substr(sp));
    if (mnemonic == "rep") {  // "rep movs rc" spelling
      auto sp2 = rest.find_first_of(" \t");
      mnemonic = "rep_" + lower(rest.substr(0, sp2));
      rest = sp2 == std::string_view::npos ? std::string_view{} : trim(rest.substr(sp2));
    }
    auto op = opcode_of(mnemonic);
    if (!op) p.fail("unknown opcode '" + mnemonic + "'");

    MacroInstruction mi;
    mi.opcode = *op;
    auto ops = split(rest, ',');
    switch (*op) {
      case Opcode::Load:
        p.arity(ops, 2, 2, mnemonic);
        mi.dest = p.reg(ops[0]);
        mi.addr = p.address(ops[1]);
        break;
      case Opcode::Store:
        p.arity(ops, 2, 2, mnemonic);
        mi.srcs.push_back(Operand::of_reg(p.reg(ops[0])));
        mi.addr = p.address(ops[1]);
        break;
      case Opcode::Alu:
        p.arity(ops, 2, 3, mnemonic);
        mi.dest = p.reg(ops[0]);
        for (std::size_t i = 1; i < ops.size(); ++i) mi.srcs.push_back(p.operand(ops[i]));
        break;
      case Opcode::SetShift: {
        p.arity(ops, 3, 3, mnemonic);
        mi.dest = p.reg(ops[0]);
        mi.srcs.push_back(Operand::of_reg(p.reg(ops[1])));
        Word s = p.operand(ops[2]).imm;
        if (s < 0 || s > 63) p.fail("setshift: shift out of range");
        mi.shift = static_cast<unsigned>(s);
        break;
      }
      case Opcode::Branch:
        p.arity(ops, 2, 2, mnemonic);
        mi.srcs.push_back(Operand::of_reg(p.reg(ops[0])));
        mi.target_label = p.label(ops[1]);
        break;
      case Opcode::Jump:
        p.arity(ops, 1, 1, mnemonic);
        mi.target_label = p.label(ops[0]);
        break;
      case Opcode::RepMovs:
      case Opcode::RepLods:
        p.arity(ops, 1, 1, mnemonic);
        mi.counter = p.reg(ops[0]);
        break;
      case Opcode::Fence:
      case Opcode::Nop:
        p.arity(ops, 0, 0, mnemonic);
        break;
    }
    mi.id = static_cast<InstrId>(prog.instructions.size());
    if (!pending_label.empty()) {
      if (prog.labels.contains(pending_label)) throw ParseError(pending_label_line, "duplicate label '" + pending_label + "'");
      prog.labels[pending_label] = mi.id;
      mi.label = std::move(pending_label);
      pending_label.clear();
    }
    prog.instructions.push_back(std::move(mi));
    instr_line.push_back(lineno);
  }
  if (!pending_label.empty()) throw ParseError(pending_label_line, "label '" + pending_label + "' not followed by an instruction");

  for (auto& mi : prog.instructions) {
    if (!is_control(mi.opcode)) continue;
    auto it = prog.labels.find(mi.target_label);
    if (it == prog.labels.end()) throw ParseError(instr_line[mi.id], "unresolved label '" + mi.target_label + "'");
    mi.target = it->second;
  }

  auto resolve = [&](const PendingRef& ref) -> InstrId {
    if (!ref.label.empty() && ref.label[0] == '@') {
      LineParser p(ref.line);
      Word id = p.number(ref.label.substr(1));
      if (id < 0 || static_cast<std::size_t>(id) >= prog.size()) p.fail("instruction index out of range '" + ref.label + "'");
      return static_cast<InstrId>(id);
    }
    auto it = prog.labels.find(ref.label);
    if (it == prog.labels.end()) throw ParseError(ref.line, "unresolved label '" + ref.label + "'");
    return it->second;
  };
  for (auto& [ref, taken] : predictions) {
    InstrId id = resolve(ref);
    if (prog.at(id).opcode != Opcode::Branch) throw ParseError(ref.line, ".predict target is not a branch");
    prog.forced_predictions[id] = taken;
  }
  for (auto& ref : balanced) prog.balanced_branches.insert(resolve(ref));
  return prog;
}

std::string print_program(const Program& prog) {
  std::ostringstream out;
  char buf[96];
  for (auto [a, v] : prog.data_init) {
    std::snprintf(buf, sizeof buf, ".data 0x%llx %lld\n", static_cast<unsigned long long>(a), static_cast<long long>(v));
    out << buf;
  }
  for (auto a : prog.warm_lines) {
    std::snprintf(buf, sizeof buf, ".warm 0x%llx\n", static_cast<unsigned long long>(a));
    out << buf;
  }
  for (auto a : prog.flush_lines) {
    std::snprintf(buf, sizeof buf, ".flush 0x%llx\n", static_cast<unsigned long long>(a));
    out << buf;
  }
  for (auto [r, v] : prog.reg_init) out << ".reg r" << unsigned{r} << ' ' << v << '\n';
  for (auto [id, taken] : prog.forced_predictions) out << ".predict @" << id << (taken ? " taken\n" : " not-taken\n");
  for (auto id : prog.balanced_branches) out << ".balanced @" << id << '\n';

  auto opnd = [](const Operand& o) {
    return o.is_reg() ? "r" + std::to_string(o.reg) : std::to_string(o.imm);
  };
  for (const auto& mi : prog.instructions) {
    if (!mi.label.empty()) out << mi.label << ": ";
    out << to_string(mi.opcode);
    switch (mi.opcode) {
      case Opcode::Load:
        out << " r" << unsigned{*mi.dest} << ", " << mi.addr.canonical();
        break;
      case Opcode::Store:
        out << ' ' << opnd(mi.srcs[0]) << ", " << mi.addr.canonical();
        break;
      case Opcode::Alu:
        out << " r" << unsigned{*mi.dest};
        for (const auto& s : mi.srcs) out << ", " << opnd(s);
        break;
      case Opcode::SetShift:
        out << " r" << unsigned{*mi.dest} << ", " << opnd(mi.srcs[0]) << ", " << mi.shift;
        break;
      case Opcode::Branch:
        out << ' ' << opnd(mi.srcs[0]) << ", " << mi.target_label;
        break;
      case Opcode::Jump:
        out << ' ' << mi.target_label;
        break;
      case Opcode::RepMovs:
      case Opcode::RepLods:
        out << " r" << unsigned{mi.counter};
        break;
      case Opcode::Fence:
      case Opcode::Nop:
        break;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace robsim
