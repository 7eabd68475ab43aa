#include <algorithm>
#include <map>
#include <stdexcept>

#include "passforge/rng.hpp"
#include "passforge/synthenv.hpp"

namespace passforge::synthenv {

namespace {

// Opcode groups used by sweep and fold masks.
constexpr std::uint32_t kArith = 1, kLogic = 2, kCast = 4, kFloat = 8, kCmp = 16, kMem = 32;
constexpr std::uint32_t kAllPure = kArith | kLogic | kCast | kFloat | kCmp;

std::uint32_t opcode_group(Opcode op) {
  switch (op) {
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::UDiv:
      return kArith;
    case Opcode::And:
    case Opcode::Or:
    case Opcode::Xor:
    case Opcode::Shl:
      return kLogic;
    case Opcode::ZExt:
    case Opcode::Trunc:
    case Opcode::BitCast:
      return kCast;
    case Opcode::FAdd:
    case Opcode::FMul:
      return kFloat;
    case Opcode::ICmp:
    case Opcode::Select:
      return kCmp;
    case Opcode::Alloca:
    case Opcode::Load:
    case Opcode::Gep:
      return kMem;
    default:
      return 0;
  }
}

struct PassEntry {
  PassRule rule;
  std::string name;
};

std::vector<PassEntry> build_table() {
  std::vector<PassEntry> effective;
  auto add = [&](Rule r, std::uint32_t groups, bool exhaustive, int limit, std::string name) {
    effective.push_back({{r, groups, exhaustive, limit}, std::move(name)});
  };
  const std::pair<std::uint32_t, const char*> sweep_groups[] = {
      {kArith, "arith"}, {kLogic, "logic"}, {kCast, "cast"}, {kFloat | kCmp, "cmp"}, {kMem, "mem"}};
  for (const auto& [g, n] : sweep_groups) {
    add(Rule::Dce, g, false, 0, std::string("dce-") + n);
    add(Rule::Dce, g, true, 0, std::string("adce-") + n);
  }
  add(Rule::Dce, kAllPure | kMem, true, 0, "adce-all");
  add(Rule::Dse, 0, false, 0, "dse-unread");
  add(Rule::Dse, 0, true, 0, "dse-overwrite");
  const std::pair<std::uint32_t, const char*> fold_groups[] = {
      {kArith, "arith"}, {kLogic, "logic"}, {kCast | kFloat, "cast"}, {kCmp, "cmp"}};
  for (const auto& [g, n] : fold_groups) {
    add(Rule::ConstFold, g, false, 0, std::string("fold-") + n);
    add(Rule::ConstFold, g, true, 0, std::string("sccp-") + n);
  }
  add(Rule::ConstFold, kAllPure, true, 0, "sccp-all");
  add(Rule::InstSimplify, 0, false, 0, "instsimplify");
  add(Rule::InstSimplify, 1, false, 0, "instcombine");
  add(Rule::Promote, 1, false, 0, "mem2reg-scalar");
  add(Rule::Promote, 3, false, 0, "mem2reg");
  add(Rule::Promote, 2, false, 0, "mem2reg-ptr");
  add(Rule::Sroa, 1, false, 0, "sroa-record");
  add(Rule::Sroa, 3, false, 0, "sroa");
  add(Rule::Cse, 0, false, 0, "early-cse");
  add(Rule::Cse, 1, false, 0, "early-cse-comm");
  add(Rule::Cse, 2, false, 0, "gvn");
  add(Rule::Canonicalize, 0, false, 0, "reassociate");
  add(Rule::Canonicalize, 1, false, 0, "commute");
  add(Rule::BlockMerge, 0, false, 0, "mergeblock");
  add(Rule::BlockMerge, 0, true, 0, "simplifycfg-merge");
  add(Rule::BranchFold, 1, false, 0, "simplifycfg");
  add(Rule::BranchFold, 0, false, 0, "condprop");
  add(Rule::UnreachableElim, 0, false, 0, "unreachable");
  for (int limit : {4, 6, 10, 16}) add(Rule::Inline, 0, false, limit, "inline-" + std::to_string(limit));
  add(Rule::GlobalDce, 0, false, 0, "strip-dead");
  add(Rule::GlobalDce, 0, true, 0, "globaldce");
  add(Rule::ArgProp, 0, false, 0, "ipsccp");
  add(Rule::Demote, 0, false, 2, "reg2mem-2");
  add(Rule::Demote, 0, false, 8, "reg2mem-8");
  add(Rule::Unroll, 0, false, 8, "unroll-8");
  add(Rule::Unroll, 0, false, 16, "unroll-16");

  std::vector<PassEntry> table = effective;
  for (std::size_t i = table.size(); i < kNumPasses; ++i) {
    table.push_back({{Rule::NoOp, 0, false, 0}, "noop-" + std::to_string(i - effective.size())});
  }
  // Fixed shuffle so that ids carry no structure.
  Rng rng(0x7a55e5ULL);
  for (std::size_t i = table.size() - 1; i > 0; --i) {
    std::swap(table[i], table[rng.below(i + 1)]);
  }
  return table;
}

const std::vector<PassEntry>& table() {
  static const std::vector<PassEntry> t = build_table();
  return t;
}

// ---------------------------------------------------------------------------
// Mutable working copy of a program.

struct Use {
  Instruction* ins;
  std::size_t operand;
};

class Work {
 public:
  explicit Work(const Program& p)
      : fns(p.functions()), types(p.types()), next_id(static_cast<std::uint32_t>(p.instruction_count())) {}

  std::vector<Function> fns;
  const TypeTable& types;
  std::uint32_t next_id;

  std::uint32_t fresh() { return next_id++; }

  template <typename F>
  void each(F&& f) {
    for (std::size_t fi = 0; fi < fns.size(); ++fi)
      for (std::size_t bi = 0; bi < fns[fi].blocks.size(); ++bi)
        for (Instruction& ins : fns[fi].blocks[bi].instrs) f(fi, bi, ins);
  }

  std::vector<std::uint32_t> use_counts() {
    std::vector<std::uint32_t> uses(next_id, 0);
    each([&](std::size_t, std::size_t, Instruction& ins) {
      for (const Operand& o : ins.operands())
        if (o.is(Operand::Kind::Value)) ++uses[o.value];
    });
    return uses;
  }

  std::vector<std::vector<Use>> users() {
    std::vector<std::vector<Use>> u(next_id);
    each([&](std::size_t, std::size_t, Instruction& ins) {
      for (std::size_t k = 0; k < ins.num_operands(); ++k) {
        const Operand& o = ins.operand(k);
        if (o.is(Operand::Kind::Value)) u[o.value].push_back({&ins, k});
      }
    });
    return u;
  }

  std::vector<Instruction*> defs() {
    std::vector<Instruction*> d(next_id, nullptr);
    each([&](std::size_t, std::size_t, Instruction& ins) { d[ins.id] = &ins; });
    return d;
  }

  void erase_dead() {
    for (Function& f : fns)
      for (Block& b : f.blocks)
        std::erase_if(b.instrs, [](const Instruction& ins) { return ins.dead; });
  }

  bool is_prim(TypeId t, Prim p) const {
    const TypeDesc& d = types.at(t);
    return d.kind == TypeKind::Primitive && d.prim == p;
  }
};

// Value replacement map with chain following.
class Replacements {
 public:
  explicit Replacements(std::size_t n) : map_(n) {}

  void set(std::uint32_t id, Operand with) {
    if (id >= map_.size()) map_.resize(id + 1);
    map_[id] = with;
    any_ = true;
  }

  Operand resolve(Operand o) const {
    while (o.is(Operand::Kind::Value) && static_cast<std::size_t>(o.value) < map_.size() &&
           map_[o.value]) {
      o = *map_[o.value];
    }
    return o;
  }

  bool empty() const { return !any_; }

  void apply(Work& w) const {
    if (!any_) return;
    w.each([&](std::size_t, std::size_t, Instruction& ins) {
      for (Operand& o : ins.operands()) o = resolve(o);
    });
  }

 private:
  std::vector<std::optional<Operand>> map_;
  bool any_ = false;
};

unsigned type_width(const TypeTable& types, TypeId t) {
  const TypeDesc& d = types.at(t);
  if (d.kind != TypeKind::Primitive) return 64;
  switch (d.prim) {
    case Prim::I1:
      return 1;
    case Prim::I8:
      return 8;
    case Prim::I32:
    case Prim::F32:
      return 32;
    default:
      return 64;
  }
}

std::int64_t wrap(std::uint64_t v, unsigned width) {
  if (width < 64) v &= (std::uint64_t{1} << width) - 1;
  return static_cast<std::int64_t>(v);
}

// Result of folding when every operand is constant.
std::optional<Operand> evaluate(const Instruction& ins, std::span<const Operand> ops,
                                const TypeTable& types) {
  const unsigned w = type_width(types, ins.type);
  auto u = [&](std::size_t i) { return static_cast<std::uint64_t>(ops[i].value); };
  auto c = [&](std::uint64_t v) { return Operand::cst(wrap(v, w)); };
  switch (ins.op) {
    case Opcode::Add:
    case Opcode::FAdd:
      return c(u(0) + u(1));
    case Opcode::Sub:
      return c(u(0) - u(1));
    case Opcode::Mul:
    case Opcode::FMul:
      return c(u(0) * u(1));
    case Opcode::And:
      return c(u(0) & u(1));
    case Opcode::Or:
      return c(u(0) | u(1));
    case Opcode::Xor:
      return c(u(0) ^ u(1));
    case Opcode::Shl:
      return c(u(0) << (u(1) & (w - 1)));
    case Opcode::UDiv: {
      const std::uint64_t d = static_cast<std::uint64_t>(wrap(u(1), w));
      if (d == 0) return std::nullopt;
      return c(static_cast<std::uint64_t>(wrap(u(0), w)) / d);
    }
    case Opcode::ZExt:
    case Opcode::Trunc:
    case Opcode::BitCast:
      return c(u(0));
    case Opcode::ICmp:
      return Operand::cst(ops[0].value < ops[1].value ? 1 : 0);
    default:
      return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Rules. Each returns true when it changed the program.

bool run_dce(Work& w, std::uint32_t groups, bool exhaustive) {
  auto uses = w.use_counts();
  auto defs = w.defs();
  auto removable = [&](const Instruction& ins) {
    return !ins.dead && (opcode_group(ins.op) & groups) != 0 && uses[ins.id] == 0;
  };
  std::vector<Instruction*> work;
  w.each([&](std::size_t, std::size_t, Instruction& ins) {
    if (removable(ins)) work.push_back(&ins);
  });
  if (work.empty()) return false;
  for (Instruction* ins : work) ins->dead = true;
  if (exhaustive) {
    while (!work.empty()) {
      Instruction* ins = work.back();
      work.pop_back();
      for (const Operand& o : ins->operands()) {
        if (!o.is(Operand::Kind::Value)) continue;
        Instruction* d = defs[o.value];
        if (--uses[o.value] == 0 && removable(*d)) {
          d->dead = true;
          work.push_back(d);
        }
      }
    }
  }
  w.erase_dead();
  return true;
}

bool run_dse(Work& w, bool overwrite) {
  bool changed = false;
  auto users = w.users();
  // Allocas that are only ever written: drop the stores, geps and the slot.
  w.each([&](std::size_t, std::size_t, Instruction& ins) {
    if (ins.op != Opcode::Alloca || users[ins.id].empty()) return;
    std::vector<Instruction*> doomed{&ins};
    std::vector<std::uint32_t> frontier{ins.id};
    while (!frontier.empty()) {
      const std::uint32_t v = frontier.back();
      frontier.pop_back();
      for (const Use& u : users[v]) {
        if (u.ins->op == Opcode::Store && u.operand == 1) {
          doomed.push_back(u.ins);
        } else if (u.ins->op == Opcode::Gep && u.operand == 0) {
          doomed.push_back(u.ins);
          frontier.push_back(u.ins->id);
        } else {
          return;
        }
      }
    }
    for (Instruction* d : doomed) d->dead = true;
    changed = true;
  });
  if (overwrite) {
    // Only local slots: the pointee of an argument may be observed by the caller.
    auto defs = w.defs();
    auto local = [&](const Operand& ptr) {
      if (!ptr.is(Operand::Kind::Value)) return false;
      const Instruction* d = defs[ptr.value];
      while (d->op == Opcode::Gep && d->operand(0).is(Operand::Kind::Value)) d = defs[d->operand(0).value];
      return d->op == Opcode::Alloca;
    };
    for (Function& f : w.fns) {
      for (Block& b : f.blocks) {
        for (std::size_t i = 0; i < b.instrs.size(); ++i) {
          Instruction& s = b.instrs[i];
          if (s.op != Opcode::Store || s.dead || !local(s.operand(1))) continue;
          for (std::size_t j = i + 1; j < b.instrs.size(); ++j) {
            const Instruction& t = b.instrs[j];
            if (t.op == Opcode::Load || t.op == Opcode::Call) break;
            if (t.op == Opcode::Store && t.operand(1) == s.operand(1)) {
              s.dead = true;
              changed = true;
              break;
            }
          }
        }
      }
    }
  }
  if (changed) w.erase_dead();
  return changed;
}

bool run_constfold(Work& w, std::uint32_t groups, bool propagate) {
  Replacements repl(w.next_id);
  bool changed = false;
  w.each([&](std::size_t, std::size_t, Instruction& ins) {
    if ((opcode_group(ins.op) & groups) == 0 || (opcode_group(ins.op) & kAllPure) == 0) return;
    std::array<Operand, Instruction::kMaxOperands> ops{};
    for (std::size_t k = 0; k < ins.num_operands(); ++k) {
      ops[k] = propagate ? repl.resolve(ins.operand(k)) : ins.operand(k);
    }
    std::optional<Operand> result;
    if (ins.op == Opcode::Select) {
      if (ops[0].is(Operand::Kind::Const)) result = ops[0].value != 0 ? ops[1] : ops[2];
    } else {
      bool all_const = ins.num_operands() > 0;
      for (std::size_t k = 0; k < ins.num_operands(); ++k) {
        all_const = all_const && ops[k].is(Operand::Kind::Const);
      }
      if (all_const) result = evaluate(ins, {ops.data(), ins.num_operands()}, w.types);
    }
    if (!result) return;
    repl.set(ins.id, *result);
    ins.dead = true;
    changed = true;
  });
  if (!changed) return false;
  repl.apply(w);
  w.erase_dead();
  return true;
}

bool run_instsimplify(Work& w, bool extended) {
  Replacements repl(w.next_id);
  auto defs = w.defs();
  auto is_const = [](const Operand& o, std::int64_t v) { return o.is(Operand::Kind::Const) && o.value == v; };
  w.each([&](std::size_t, std::size_t, Instruction& ins) {
    const std::size_t n = ins.num_operands();
    if (n == 0 || (opcode_group(ins.op) & kAllPure) == 0) return;
    const Operand a = repl.resolve(ins.operand(0));
    const Operand b = n > 1 ? repl.resolve(ins.operand(1)) : Operand{};
    std::optional<Operand> r;
    switch (ins.op) {
      case Opcode::Add:
        if (is_const(b, 0)) r = a;
        else if (is_const(a, 0)) r = b;
        break;
      case Opcode::Sub:
        if (is_const(b, 0)) r = a;
        else if (a == b) r = Operand::cst(0);
        break;
      case Opcode::Mul:
        if (is_const(b, 1)) r = a;
        else if (is_const(a, 1)) r = b;
        else if (is_const(a, 0) || is_const(b, 0)) r = Operand::cst(0);
        break;
      case Opcode::And:
        if (a == b) r = a;
        else if (is_const(a, 0) || is_const(b, 0)) r = Operand::cst(0);
        break;
      case Opcode::Or:
        if (a == b || is_const(b, 0)) r = a;
        else if (is_const(a, 0)) r = b;
        break;
      case Opcode::Xor:
        if (is_const(b, 0)) r = a;
        else if (is_const(a, 0)) r = b;
        else if (a == b) r = Operand::cst(0);
        break;
      case Opcode::Shl:
      case Opcode::UDiv:
        if (is_const(b, ins.op == Opcode::Shl ? 0 : 1)) r = a;
        break;
      case Opcode::FAdd:
        if (extended && is_const(b, 0)) r = a;
        break;
      case Opcode::FMul:
        if (extended && is_const(b, 1)) r = a;
        break;
      case Opcode::Trunc:
        if (extended && a.is(Operand::Kind::Value) && defs[a.value]->op == Opcode::ZExt) {
          r = repl.resolve(defs[a.value]->operand(0));
        }
        break;
      case Opcode::Select:
        if (extended && n == 3 && b == repl.resolve(ins.operand(2))) r = b;
        break;
      default:
        break;
    }
    if (!r) return;
    repl.set(ins.id, *r);
    ins.dead = true;
  });
  if (repl.empty()) return false;
  repl.apply(w);
  w.erase_dead();
  return true;
}

struct Site {
  std::size_t fn;
  std::size_t block;
};

std::vector<Site> sites(Work& w) {
  std::vector<Site> s(w.next_id);
  w.each([&](std::size_t fi, std::size_t bi, Instruction& ins) { s[ins.id] = {fi, bi}; });
  return s;
}

bool run_promote(Work& w, std::uint32_t kinds) {
  auto users = w.users();
  auto where = sites(w);
  Replacements repl(w.next_id);
  bool changed = false;
  w.each([&](std::size_t, std::size_t, Instruction& a) {
    if (a.op != Opcode::Alloca || users[a.id].empty()) return;
    const TypeKind k = w.types.at(a.type).kind;
    const bool ok_kind = (k == TypeKind::Primitive && (kinds & 1)) || (k == TypeKind::Pointer && (kinds & 2));
    if (!ok_kind) return;
    const Site s0 = where[users[a.id].front().ins->id];
    for (const Use& u : users[a.id]) {
      const bool access = (u.ins->op == Opcode::Load && u.operand == 0) ||
                          (u.ins->op == Opcode::Store && u.operand == 1);
      const Site s = where[u.ins->id];
      if (!access || s.fn != s0.fn || s.block != s0.block) return;
    }
    Block& b = w.fns[s0.fn].blocks[s0.block];
    // The first access must be a store; otherwise the slot is read undefined.
    for (const Instruction& ins : b.instrs) {
      if (ins.num_operands() == 0) continue;
      if (ins.op == Opcode::Load && ins.operand(0) == Operand::val(a.id)) return;
      if (ins.op == Opcode::Store && ins.operand(1) == Operand::val(a.id)) break;
    }
    Operand current;
    for (Instruction& ins : b.instrs) {
      if (ins.op == Opcode::Store && ins.operand(1) == Operand::val(a.id)) {
        current = ins.operand(0);
        ins.dead = true;
      } else if (ins.op == Opcode::Load && ins.operand(0) == Operand::val(a.id)) {
        repl.set(ins.id, current);
        ins.dead = true;
      }
    }
    a.dead = true;
    changed = true;
  });
  if (!changed) return false;
  repl.apply(w);
  w.erase_dead();
  return true;
}

bool run_sroa(Work& w, std::uint32_t kinds) {
  auto users = w.users();
  Replacements repl(w.next_id);
  // Alloca id -> (member index -> replacement slot id).
  std::map<std::uint32_t, std::map<std::int64_t, std::uint32_t>> plan;
  w.each([&](std::size_t, std::size_t, Instruction& a) {
    if (a.op != Opcode::Alloca || users[a.id].empty()) return;
    const TypeDesc& d = w.types.at(a.type);
    const bool ok_kind = (d.kind == TypeKind::Record && (kinds & 1)) ||
                         (d.kind == TypeKind::Array && (kinds & 2));
    if (!ok_kind) return;
    const std::size_t n = d.kind == TypeKind::Record ? d.members.size() : d.count;
    for (const Use& u : users[a.id]) {
      const Instruction& g = *u.ins;
      const bool gep = g.op == Opcode::Gep && u.operand == 0 && g.num_operands() == 2 &&
                       g.operand(1).is(Operand::Kind::Const) && g.operand(1).value >= 0 &&
                       static_cast<std::size_t>(g.operand(1).value) < n;
      if (!gep) return;
    }
    auto& slots = plan[a.id];
    for (const Use& u : users[a.id]) slots.emplace(u.ins->operand(1).value, 0);
    for (auto& [k, id] : slots) id = w.fresh();
    for (const Use& u : users[a.id]) {
      repl.set(u.ins->id, Operand::val(slots.at(u.ins->operand(1).value)));
      u.ins->dead = true;
    }
  });
  if (plan.empty()) return false;
  for (Function& f : w.fns) {
    for (Block& b : f.blocks) {
      std::vector<Instruction> out;
      out.reserve(b.instrs.size());
      for (const Instruction& a : b.instrs) {
        auto it = a.op == Opcode::Alloca ? plan.find(a.id) : plan.end();
        if (it == plan.end()) {
          out.push_back(a);
          continue;
        }
        const TypeDesc& d = w.types.at(a.type);
        for (const auto& [k, id] : it->second) {
          Instruction s;
          s.op = Opcode::Alloca;
          s.type = d.kind == TypeKind::Record ? d.members[k] : d.members[0];
          s.id = id;
          out.push_back(s);
        }
      }
      b.instrs = std::move(out);
    }
  }
  repl.apply(w);
  w.erase_dead();
  return true;
}

struct ExprKey {
  Opcode op;
  TypeId type;
  std::uint8_t n;
  std::array<std::pair<std::uint8_t, std::int64_t>, Instruction::kMaxOperands> ops;
  friend auto operator<=>(const ExprKey&, const ExprKey&) = default;
};

bool run_cse(Work& w, int variant) {
  Replacements repl(w.next_id);
  auto key_of = [&](const Instruction& ins) {
    ExprKey k{ins.op, ins.type, static_cast<std::uint8_t>(ins.num_operands()), {}};
    for (std::size_t i = 0; i < ins.num_operands(); ++i) {
      const Operand o = repl.resolve(ins.operand(i));
      k.ops[i] = {static_cast<std::uint8_t>(o.kind), o.value};
    }
    if (variant >= 1 && is_commutative(ins.op) && k.ops[1] < k.ops[0]) std::swap(k.ops[0], k.ops[1]);
    return k;
  };
  for (Function& f : w.fns) {
    std::map<ExprKey, std::uint32_t> entry;
    for (std::size_t bi = 0; bi < f.blocks.size(); ++bi) {
      std::map<ExprKey, std::uint32_t> local = variant == 2 ? entry : std::map<ExprKey, std::uint32_t>{};
      for (Instruction& ins : f.blocks[bi].instrs) {
        const std::uint32_t g = opcode_group(ins.op);
        if ((g & kAllPure) == 0 && ins.op != Opcode::Gep) continue;
        const ExprKey k = key_of(ins);
        auto [it, inserted] = local.emplace(k, ins.id);
        if (!inserted) {
          repl.set(ins.id, Operand::val(it->second));
          ins.dead = true;
        }
      }
      if (bi == 0) entry = local;
    }
  }
  if (repl.empty()) return false;
  repl.apply(w);
  w.erase_dead();
  return true;
}

bool run_canonicalize(Work& w, bool constants_first) {
  bool changed = false;
  auto rank = [](const Operand& o) { return std::pair{o.is(Operand::Kind::Const) ? 1 : 0, o.value}; };
  w.each([&](std::size_t, std::size_t, Instruction& ins) {
    if (!is_commutative(ins.op) || ins.num_operands() != 2) return;
    Operand& a = ins.operand(0);
    Operand& b = ins.operand(1);
    const bool swap = constants_first ? (b.is(Operand::Kind::Const) && !a.is(Operand::Kind::Const))
                                      : rank(b) < rank(a);
    if (swap) {
      std::swap(a, b);
      changed = true;
    }
  });
  return changed;
}

void remove_blocks(Function& f, const std::vector<bool>& drop) {
  std::vector<std::int64_t> remap(f.blocks.size(), -1);
  std::vector<Block> kept;
  for (std::size_t i = 0; i < f.blocks.size(); ++i) {
    if (drop[i]) continue;
    remap[i] = static_cast<std::int64_t>(kept.size());
    kept.push_back(std::move(f.blocks[i]));
  }
  f.blocks = std::move(kept);
  for (Block& b : f.blocks)
    for (Instruction& ins : b.instrs)
      for (Operand& o : ins.operands())
        if (o.is(Operand::Kind::Block)) o.value = remap[o.value];
}

std::vector<std::uint32_t> predecessor_counts(const Function& f) {
  std::vector<std::uint32_t> preds(f.blocks.size(), 0);
  for (const Block& b : f.blocks)
    for (const Operand& o : b.instrs.back().operands())
      if (o.is(Operand::Kind::Block)) ++preds[o.value];
  return preds;
}

bool run_blockmerge(Work& w, bool all) {
  bool changed = false;
  for (Function& f : w.fns) {
    bool merged = true;
    while (merged) {
      merged = false;
      const auto preds = predecessor_counts(f);
      for (std::size_t bi = 0; bi < f.blocks.size(); ++bi) {
        const Instruction& term = f.blocks[bi].instrs.back();
        if (term.op != Opcode::Br) continue;
        const auto c = static_cast<std::size_t>(term.operand(0).value);
        if (c == bi || c == 0 || preds[c] != 1) continue;
        Block& b = f.blocks[bi];
        b.instrs.pop_back();
        for (const Instruction& ins : f.blocks[c].instrs) b.instrs.push_back(ins);
        std::vector<bool> drop(f.blocks.size(), false);
        drop[c] = true;
        remove_blocks(f, drop);
        merged = changed = true;
        break;
      }
      if (changed && !all) return true;
    }
  }
  return changed;
}

bool run_branchfold(Work& w, bool thread) {
  bool changed = false;
  for (Function& f : w.fns) {
    for (Block& b : f.blocks) {
      Instruction& t = b.instrs.back();
      if (t.op != Opcode::CondBr) continue;
      std::optional<Operand> target;
      if (t.operand(0).is(Operand::Kind::Const)) target = t.operand(0).value != 0 ? t.operand(1) : t.operand(2);
      else if (t.operand(1) == t.operand(2)) target = t.operand(1);
      if (!target) continue;
      t.op = Opcode::Br;
      t.clear_operands();
      t.add_operand(*target);
      changed = true;
    }
    if (!thread) continue;
    // Jump threading through blocks that only forward control.
    for (std::size_t bi = 0; bi < f.blocks.size(); ++bi) {
      Instruction& t = f.blocks[bi].instrs.back();
      for (Operand& o : t.operands()) {
        if (!o.is(Operand::Kind::Block)) continue;
        const Block& dst = f.blocks[o.value];
        if (dst.instrs.size() == 1 && dst.instrs[0].op == Opcode::Br &&
            dst.instrs[0].operand(0).value != o.value && static_cast<std::size_t>(o.value) != bi) {
          o = dst.instrs[0].operand(0);
          changed = true;
        }
      }
    }
  }
  return changed;
}

bool run_unreachable(Work& w) {
  bool changed = false;
  for (Function& f : w.fns) {
    std::vector<bool> seen(f.blocks.size(), false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const std::size_t b = stack.back();
      stack.pop_back();
      for (const Operand& o : f.blocks[b].instrs.back().operands()) {
        if (o.is(Operand::Kind::Block) && !seen[o.value]) {
          seen[o.value] = true;
          stack.push_back(static_cast<std::size_t>(o.value));
        }
      }
    }
    if (std::all_of(seen.begin(), seen.end(), [](bool s) { return s; })) continue;
    std::vector<bool> doomed_value(w.next_id, false);
    for (std::size_t b = 0; b < f.blocks.size(); ++b)
      if (!seen[b])
        for (const Instruction& ins : f.blocks[b].instrs) doomed_value[ins.id] = true;
    bool escapes = false;
    for (std::size_t b = 0; b < f.blocks.size() && !escapes; ++b) {
      if (!seen[b]) continue;
      for (const Instruction& ins : f.blocks[b].instrs)
        for (const Operand& o : ins.operands())
          if (o.is(Operand::Kind::Value) && doomed_value[o.value]) escapes = true;
    }
    if (escapes) continue;
    std::vector<bool> drop(f.blocks.size());
    for (std::size_t b = 0; b < f.blocks.size(); ++b) drop[b] = !seen[b];
    remove_blocks(f, drop);
    changed = true;
  }
  return changed;
}

bool run_inline(Work& w, int limit) {
  const std::vector<Function> original = w.fns;
  Replacements repl(w.next_id);
  bool changed = false;
  for (std::size_t fi = 0; fi < w.fns.size(); ++fi) {
    for (Block& b : w.fns[fi].blocks) {
      std::vector<Instruction> out;
      out.reserve(b.instrs.size());
      for (Instruction& call : b.instrs) {
        const bool candidate = call.op == Opcode::Call && call.operand(0).is(Operand::Kind::Func) &&
                               static_cast<std::size_t>(call.operand(0).value) != fi;
        const Function* callee = candidate ? &original[call.operand(0).value] : nullptr;
        if (!callee || callee->blocks.size() != 1 ||
            call.num_operands() != callee->arg_types.size() + 1 ||
            static_cast<int>(callee->blocks[0].instrs.size()) - 1 > limit) {
          out.push_back(call);
          continue;
        }
        std::map<std::int64_t, std::uint32_t> local;
        auto map_operand = [&](Operand o) {
          if (o.is(Operand::Kind::Arg)) return call.operand(static_cast<std::size_t>(o.value) + 1);
          if (o.is(Operand::Kind::Value)) return Operand::val(local.at(o.value));
          return o;
        };
        for (const Instruction& src : callee->blocks[0].instrs) {
          if (src.op == Opcode::Ret) {
            if (src.num_operands() == 1) repl.set(call.id, map_operand(src.operand(0)));
            continue;
          }
          Instruction c;
          c.op = src.op;
          c.type = src.type;
          c.id = w.fresh();
          local[src.id] = c.id;
          for (const Operand& o : src.operands()) c.add_operand(map_operand(o));
          out.push_back(c);
        }
        changed = true;
      }
      b.instrs = std::move(out);
    }
  }
  if (!changed) return false;
  repl.apply(w);
  return true;
}

void remove_functions(Work& w, const std::vector<bool>& live) {
  std::vector<std::int64_t> remap(w.fns.size(), -1);
  std::vector<Function> kept;
  for (std::size_t i = 0; i < w.fns.size(); ++i) {
    if (!live[i]) continue;
    remap[i] = static_cast<std::int64_t>(kept.size());
    kept.push_back(std::move(w.fns[i]));
  }
  w.fns = std::move(kept);
  w.each([&](std::size_t, std::size_t, Instruction& ins) {
    for (Operand& o : ins.operands())
      if (o.is(Operand::Kind::Func)) o.value = remap[o.value];
  });
}

bool run_globaldce(Work& w, bool transitive) {
  const std::size_t n = w.fns.size();
  std::vector<std::vector<std::size_t>> callees(n);
  for (std::size_t fi = 0; fi < n; ++fi)
    for (const Block& b : w.fns[fi].blocks)
      for (const Instruction& ins : b.instrs)
        for (const Operand& o : ins.operands())
          if (o.is(Operand::Kind::Func)) callees[fi].push_back(static_cast<std::size_t>(o.value));
  std::vector<bool> live(n, false);
  live[0] = true;
  if (transitive) {
    std::vector<std::size_t> stack{0};
    while (!stack.empty()) {
      const std::size_t f = stack.back();
      stack.pop_back();
      for (std::size_t g : callees[f]) {
        if (!live[g]) {
          live[g] = true;
          stack.push_back(g);
        }
      }
    }
  } else {
    for (std::size_t fi = 0; fi < n; ++fi)
      for (std::size_t g : callees[fi])
        if (g != fi) live[g] = true;
  }
  if (std::all_of(live.begin(), live.end(), [](bool l) { return l; })) return false;
  remove_functions(w, live);
  return true;
}

bool run_argprop(Work& w) {
  const std::size_t n = w.fns.size();
  std::vector<std::vector<Instruction*>> calls(n);
  w.each([&](std::size_t, std::size_t, Instruction& ins) {
    if (ins.op == Opcode::Call && ins.operand(0).is(Operand::Kind::Func)) {
      calls[ins.operand(0).value].push_back(&ins);
    }
  });
  bool changed = false;
  Replacements repl(w.next_id);
  for (std::size_t g = 1; g < n; ++g) {
    Function& f = w.fns[g];
    if (calls[g].empty() || std::any_of(calls[g].begin(), calls[g].end(), [&](const Instruction* c) {
          return c->num_operands() != f.arg_types.size() + 1;
        })) {
      continue;
    }
    for (std::size_t a = 0; a < f.arg_types.size(); ++a) {
      const Operand first = calls[g][0]->operand(a + 1);
      if (!first.is(Operand::Kind::Const)) continue;
      bool same = true;
      for (const Instruction* c : calls[g]) same = same && c->operand(a + 1) == first;
      if (!same) continue;
      for (Block& b : f.blocks)
        for (Instruction& ins : b.instrs)
          for (Operand& o : ins.operands())
            if (o == Operand::arg(static_cast<std::uint32_t>(a))) {
              o = first;
              changed = true;
            }
    }
    // Return-value propagation for pure callees returning one constant.
    bool pure = true;
    std::optional<Operand> ret;
    bool uniform = true;
    for (const Block& b : f.blocks) {
      for (const Instruction& ins : b.instrs) {
        if (ins.op == Opcode::Store || ins.op == Opcode::Call || ins.op == Opcode::Load) pure = false;
        if (ins.op != Opcode::Ret) continue;
        if (ins.num_operands() != 1 || !ins.operand(0).is(Operand::Kind::Const) ||
            (ret && !(*ret == ins.operand(0)))) {
          uniform = false;
        } else {
          ret = ins.operand(0);
        }
      }
    }
    if (!pure || !uniform || !ret) continue;
    for (Instruction* c : calls[g]) {
      repl.set(c->id, *ret);
      c->dead = true;
      changed = true;
    }
  }
  if (!changed) return false;
  repl.apply(w);
  w.erase_dead();
  return true;
}

bool run_demote(Work& w, int limit) {
  std::optional<TypeId> i32, void_t;
  for (TypeId t = 0; t < w.types.size(); ++t) {
    if (w.is_prim(t, Prim::I32)) i32 = t;
    if (w.is_prim(t, Prim::Void)) void_t = t;
  }
  if (!i32 || !void_t || w.fns.empty()) return false;
  auto users = w.users();
  std::map<std::int64_t, std::uint32_t> reload;
  std::vector<bool> spill(w.next_id + 3 * static_cast<std::size_t>(limit), false);
  Function& f = w.fns[0];
  std::vector<Instruction> slots;
  for (Block& b : f.blocks) {
    std::vector<Instruction> out;
    out.reserve(b.instrs.size());
    for (const Instruction& ins : b.instrs) {
      out.push_back(ins);
      if (static_cast<int>(slots.size()) >= limit || (opcode_group(ins.op) & (kArith | kLogic)) == 0 ||
          ins.type != *i32) {
        continue;
      }
      const auto& us = users[ins.id];
      if (std::none_of(us.begin(), us.end(), [](const Use& u) { return u.ins->op != Opcode::Store; })) {
        continue;
      }
      Instruction slot;
      slot.op = Opcode::Alloca;
      slot.type = *i32;
      slot.id = w.fresh();
      Instruction st;
      st.op = Opcode::Store;
      st.type = *void_t;
      st.id = w.fresh();
      st.add_operand(Operand::val(ins.id));
      st.add_operand(Operand::val(slot.id));
      Instruction ld;
      ld.op = Opcode::Load;
      ld.type = *i32;
      ld.id = w.fresh();
      ld.add_operand(Operand::val(slot.id));
      spill[st.id] = true;
      reload[ins.id] = ld.id;
      out.push_back(st);
      out.push_back(ld);
      slots.push_back(slot);
    }
    b.instrs = std::move(out);
  }
  if (slots.empty()) return false;
  for (Block& b : f.blocks) {
    for (Instruction& ins : b.instrs) {
      if (spill[ins.id]) continue;
      for (Operand& o : ins.operands()) {
        if (!o.is(Operand::Kind::Value)) continue;
        if (auto it = reload.find(o.value); it != reload.end()) o = Operand::val(it->second);
      }
    }
  }
  auto& entry = f.blocks[0].instrs;
  entry.insert(entry.begin(), slots.begin(), slots.end());
  return true;
}

bool run_unroll(Work& w, int limit) {
  bool changed = false;
  for (Function& f : w.fns) {
    const std::size_t nblocks = f.blocks.size();
    for (std::size_t bi = 0; bi < nblocks; ++bi) {
      const Block& b = f.blocks[bi];
      const Instruction& t = b.instrs.back();
      if (t.op != Opcode::CondBr || static_cast<int>(b.instrs.size()) > limit) continue;
      const Operand self = Operand::block(static_cast<std::uint32_t>(bi));
      if (!(t.operand(1) == self) && !(t.operand(2) == self)) continue;
      const Operand copy = Operand::block(static_cast<std::uint32_t>(f.blocks.size()));
      std::map<std::int64_t, std::uint32_t> local;
      Block clone;
      for (const Instruction& src : b.instrs) {
        Instruction c = src;
        c.id = w.fresh();
        local[src.id] = c.id;
        for (Operand& o : c.operands())
          if (o.is(Operand::Kind::Value) && local.count(o.value)) o = Operand::val(local.at(o.value));
        clone.instrs.push_back(c);
      }
      Instruction& head = f.blocks[bi].instrs.back();
      for (Operand& o : head.operands())
        if (o == self) o = copy;
      f.blocks.push_back(std::move(clone));
      changed = true;
    }
  }
  return changed;
}

bool run_rule(Work& w, const PassRule& r) {
  switch (r.rule) {
    case Rule::NoOp:
      return false;
    case Rule::Dce:
      return run_dce(w, r.groups, r.exhaustive);
    case Rule::Dse:
      return run_dse(w, r.exhaustive);
    case Rule::ConstFold:
      return run_constfold(w, r.groups, r.exhaustive);
    case Rule::InstSimplify:
      return run_instsimplify(w, r.groups != 0);
    case Rule::Promote:
      return run_promote(w, r.groups);
    case Rule::Sroa:
      return run_sroa(w, r.groups);
    case Rule::Cse:
      return run_cse(w, static_cast<int>(r.groups));
    case Rule::Canonicalize:
      return run_canonicalize(w, r.groups != 0);
    case Rule::BlockMerge:
      return run_blockmerge(w, r.exhaustive);
    case Rule::BranchFold:
      return run_branchfold(w, r.groups != 0);
    case Rule::UnreachableElim:
      return run_unreachable(w);
    case Rule::Inline:
      return run_inline(w, r.limit);
    case Rule::GlobalDce:
      return run_globaldce(w, r.exhaustive);
    case Rule::ArgProp:
      return run_argprop(w);
    case Rule::Demote:
      return run_demote(w, r.limit);
    case Rule::Unroll:
      return run_unroll(w, r.limit);
  }
  return false;
}

}  // namespace

const PassRule& pass_rule(PassId id) { return table()[id.value()].rule; }

std::string pass_name(PassId id) { return table()[id.value()].name; }

Program apply_pass(const Program& p, PassId a) {
  const PassRule& r = pass_rule(a);
  if (r.rule == Rule::NoOp) return p;
  Work w(p);
  if (!run_rule(w, r)) return p;
  // Removing code never empties a program: main keeps its terminator.
  return Program::assemble(std::move(w.fns), p.types_ptr(), p.seed());
}

}  // namespace passforge::synthenv
