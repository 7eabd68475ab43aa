#include <algorithm>
#include <stdexcept>

#include "passforge/error.hpp"
#include "passforge/rng.hpp"
#include "passforge/synthenv.hpp"

namespace passforge::synthenv {

PassId::PassId(int id) {
  if (id < 0 || id >= static_cast<int>(kNumPasses)) {
    throw std::out_of_range("pass id out of range: " + std::to_string(id));
  }
  id_ = static_cast<std::uint8_t>(id);
}

PassSequence make_sequence(std::initializer_list<int> ids) {
  PassSequence seq;
  seq.reserve(ids.size());
  for (int id : ids) seq.emplace_back(id);
  return seq;
}

PassSequence sequence_from_ints(std::span<const int> ids) {
  PassSequence seq;
  seq.reserve(ids.size());
  for (int id : ids) seq.emplace_back(id);
  return seq;
}

std::vector<int> sequence_to_ints(const PassSequence& seq) {
  std::vector<int> out;
  out.reserve(seq.size());
  for (PassId p : seq) out.push_back(p.value());
  return out;
}

bool length_lex_less(const PassSequence& a, const PassSequence& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

namespace {

constexpr std::array<std::string_view, kNumOpcodes> kOpcodeNames = {
    "add",  "sub",    "mul",  "and",   "or",    "xor",  "shl",    "udiv",
    "zext", "trunc",  "bitcast", "fadd", "fmul", "select", "icmp", "alloca",
    "load", "store",  "getelementptr", "call", "br", "condbr", "ret",
};

constexpr std::array<std::string_view, 7> kPrimNames = {"void", "i1", "i8", "i32", "i64", "float",
                                                         "double"};

}  // namespace

std::string_view opcode_name(Opcode op) { return kOpcodeNames[static_cast<std::size_t>(op)]; }

std::optional<Opcode> opcode_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpcodeNames.size(); ++i) {
    if (kOpcodeNames[i] == name) return static_cast<Opcode>(i);
  }
  return std::nullopt;
}

bool is_terminator(Opcode op) {
  return op == Opcode::Br || op == Opcode::CondBr || op == Opcode::Ret;
}

bool has_side_effects(Opcode op) {
  return op == Opcode::Store || op == Opcode::Call || is_terminator(op);
}

bool is_commutative(Opcode op) {
  switch (op) {
    case Opcode::Add:
    case Opcode::Mul:
    case Opcode::And:
    case Opcode::Or:
    case Opcode::Xor:
    case Opcode::FAdd:
    case Opcode::FMul:
      return true;
    default:
      return false;
  }
}

std::string_view prim_name(Prim p) { return kPrimNames[static_cast<std::size_t>(p)]; }

std::optional<Prim> prim_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kPrimNames.size(); ++i) {
    if (kPrimNames[i] == name) return static_cast<Prim>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

TypeId TypeTable::intern(const TypeDesc& desc) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i] == desc) return static_cast<TypeId>(i);
  }
  for (TypeId m : desc.members) {
    if (m >= entries_.size()) throw std::out_of_range("type member not interned");
  }
  entries_.push_back(desc);
  return static_cast<TypeId>(entries_.size() - 1);
}

TypeId TypeTable::primitive(Prim p) { return intern({TypeKind::Primitive, p, {}, 0}); }

TypeId TypeTable::pointer(TypeId pointee) {
  return intern({TypeKind::Pointer, Prim::Void, {pointee}, 0});
}

TypeId TypeTable::array(TypeId element, std::uint32_t count) {
  return intern({TypeKind::Array, Prim::Void, {element}, count});
}

TypeId TypeTable::record(std::vector<TypeId> members) {
  return intern({TypeKind::Record, Prim::Void, std::move(members), 0});
}

std::string TypeTable::render(TypeId id) const {
  const TypeDesc& d = at(id);
  switch (d.kind) {
    case TypeKind::Primitive:
      return std::string(prim_name(d.prim));
    case TypeKind::Pointer:
      return render(d.members[0]) + "*";
    case TypeKind::Array:
      return "[" + std::to_string(d.count) + " x " + render(d.members[0]) + "]";
    case TypeKind::Record: {
      std::string s = "{";
      for (std::size_t i = 0; i < d.members.size(); ++i) {
        if (i) s += ",";
        s += render(d.members[i]);
      }
      return s + "}";
    }
  }
  return {};
}

void Instruction::add_operand(Operand o) {
  if (count_ == kMaxOperands) throw std::length_error("too many operands");
  ops_[count_++] = o;
}

// ---------------------------------------------------------------------------

namespace {

class Fnv64 {
 public:
  void byte(std::uint8_t b) {
    h_ ^= b;
    h_ *= 0x100000001b3ULL;
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) byte(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) byte(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

// Hash over the canonical binary layout of the program: type table, then
// every function, block, instruction and operand in order.
std::uint64_t structural_hash(const std::vector<Function>& fns, const TypeTable& types) {
  Fnv64 h;
  h.u32(static_cast<std::uint32_t>(types.size()));
  for (const TypeDesc& d : types.entries()) {
    h.byte(static_cast<std::uint8_t>(d.kind));
    h.byte(static_cast<std::uint8_t>(d.prim));
    h.u32(d.count);
    h.u32(static_cast<std::uint32_t>(d.members.size()));
    for (TypeId m : d.members) h.u32(m);
  }
  h.u32(static_cast<std::uint32_t>(fns.size()));
  for (const Function& f : fns) {
    h.u32(static_cast<std::uint32_t>(f.arg_types.size()));
    for (TypeId t : f.arg_types) h.u32(t);
    h.u32(f.ret_type);
    h.u32(static_cast<std::uint32_t>(f.blocks.size()));
    for (const Block& b : f.blocks) {
      h.u32(static_cast<std::uint32_t>(b.instrs.size()));
      for (const Instruction& ins : b.instrs) {
        h.byte(static_cast<std::uint8_t>(ins.op));
        h.u32(ins.type);
        h.byte(static_cast<std::uint8_t>(ins.num_operands()));
        for (const Operand& o : ins.operands()) {
          h.byte(static_cast<std::uint8_t>(o.kind));
          h.u64(static_cast<std::uint64_t>(o.value));
        }
      }
    }
  }
  return h.digest();
}

bool produces_value(const Instruction& ins, const TypeTable& types) {
  if (ins.op == Opcode::Store || ins.op == Opcode::Br || ins.op == Opcode::CondBr ||
      ins.op == Opcode::Ret) {
    return false;
  }
  if (ins.op == Opcode::Call) {
    const TypeDesc& d = types.at(ins.type);
    return !(d.kind == TypeKind::Primitive && d.prim == Prim::Void);
  }
  return true;
}

}  // namespace

std::string validate(const std::vector<Function>& fns, const TypeTable& types) {
  if (fns.empty()) return "program has no functions";
  std::uint32_t max_id = 0;
  for (const Function& f : fns)
    for (const Block& b : f.blocks)
      for (const Instruction& ins : b.instrs) max_id = std::max(max_id, ins.id);
  // Definition site per value id: owning function and instruction.
  std::vector<std::pair<std::int64_t, const Instruction*>> defs(max_id + 1, {-1, nullptr});
  std::size_t total = 0;
  for (std::size_t fi = 0; fi < fns.size(); ++fi) {
    for (const Block& b : fns[fi].blocks) {
      for (const Instruction& ins : b.instrs) {
        if (defs[ins.id].second) return "duplicate value id";
        defs[ins.id] = {static_cast<std::int64_t>(fi), &ins};
      }
    }
  }
  for (std::size_t fi = 0; fi < fns.size(); ++fi) {
    const Function& f = fns[fi];
    const std::string where = "function " + std::to_string(fi);
    if (f.blocks.empty()) return where + " has no blocks";
    if (f.ret_type >= types.size()) return where + " has bad return type";
    for (TypeId t : f.arg_types) {
      if (t >= types.size()) return where + " has bad argument type";
    }
    for (std::size_t bi = 0; bi < f.blocks.size(); ++bi) {
      const Block& b = f.blocks[bi];
      if (b.instrs.empty()) return where + " has an empty block";
      for (std::size_t ii = 0; ii < b.instrs.size(); ++ii) {
        const Instruction& ins = b.instrs[ii];
        const bool last = ii + 1 == b.instrs.size();
        if (is_terminator(ins.op) != last) return where + " has misplaced terminator";
        if (ins.type >= types.size()) return where + " has bad instruction type";
        for (const Operand& o : ins.operands()) {
          switch (o.kind) {
            case Operand::Kind::Value: {
              if (o.value < 0 || o.value > static_cast<std::int64_t>(max_id) ||
                  defs[o.value].first != static_cast<std::int64_t>(fi)) {
                return where + " uses undefined value";
              }
              if (!produces_value(*defs[o.value].second, types)) return where + " uses a void value";
              break;
            }
            case Operand::Kind::Arg:
              if (o.value < 0 || static_cast<std::size_t>(o.value) >= f.arg_types.size())
                return where + " uses missing argument";
              break;
            case Operand::Kind::Block:
              if (o.value < 0 || static_cast<std::size_t>(o.value) >= f.blocks.size())
                return where + " branches to missing block";
              break;
            case Operand::Kind::Func:
              if (o.value < 0 || static_cast<std::size_t>(o.value) >= fns.size())
                return where + " calls missing function";
              break;
            case Operand::Kind::Const:
              break;
          }
        }
      }
      total += b.instrs.size();
    }
  }
  if (total == 0) return "program has no instructions";
  return {};
}

Program Program::assemble(std::vector<Function> functions, std::shared_ptr<const TypeTable> types,
                          std::uint64_t seed) {
  if (!types) throw InputError("program requires a type table");
  // Canonical numbering: value ids follow program order.
  constexpr std::uint32_t kUnset = UINT32_MAX;
  std::uint32_t max_id = 0;
  for (const Function& f : functions)
    for (const Block& b : f.blocks)
      for (const Instruction& ins : b.instrs) max_id = std::max(max_id, ins.id);
  std::vector<std::uint32_t> remap(static_cast<std::size_t>(max_id) + 1, kUnset);
  std::uint32_t next = 0;
  for (Function& f : functions) {
    for (Block& b : f.blocks) {
      for (Instruction& ins : b.instrs) {
        if (remap[ins.id] != kUnset) throw InputError("duplicate value id");
        remap[ins.id] = next;
        ins.id = next++;
        ins.dead = false;
      }
    }
  }
  for (Function& f : functions) {
    for (Block& b : f.blocks) {
      for (Instruction& ins : b.instrs) {
        for (Operand& o : ins.operands()) {
          if (o.kind != Operand::Kind::Value) continue;
          if (o.value < 0 || o.value > static_cast<std::int64_t>(max_id) ||
              remap[o.value] == kUnset) {
            throw InputError("operand refers to an undefined value");
          }
          o.value = remap[o.value];
        }
      }
    }
  }
  if (std::string err = validate(functions, *types); !err.empty()) throw InputError(err);

  Program p;
  p.functions_ = std::move(functions);
  p.types_ = std::move(types);
  p.seed_ = seed;
  p.count_ = next;
  p.hash_ = structural_hash(p.functions_, *p.types_);
  return p;
}

std::size_t Program::block_count() const {
  std::size_t n = 0;
  for (const Function& f : functions_) n += f.blocks.size();
  return n;
}

std::size_t instruction_count(const Program& p) { return p.instruction_count(); }

// ---------------------------------------------------------------------------
// Canonical JSON
//
// {"seed": u64,
//  "types": [{"kind":"primitive","prim":"i32"} | {"kind":"pointer","members":[t]} |
//            {"kind":"array","members":[t],"count":n} | {"kind":"record","members":[...]}],
//  "functions": [{"args":[t...], "ret": t,
//                 "blocks": [[{"op":"add","type":t,"operands":[["v",id],["c",k],...]}...]...]}]}
//
// Operand tags: v = value id, c = constant, a = argument, b = block, f = function.

namespace {

constexpr std::array<std::string_view, 4> kKindNames = {"primitive", "pointer", "record", "array"};
constexpr std::array<std::string_view, 5> kOperandTags = {"v", "c", "a", "b", "f"};

}  // namespace

nlohmann::json Program::to_json() const {
  using nlohmann::json;
  json types = json::array();
  for (const TypeDesc& d : types_->entries()) {
    json t = {{"kind", kKindNames[static_cast<std::size_t>(d.kind)]}};
    if (d.kind == TypeKind::Primitive) t["prim"] = prim_name(d.prim);
    if (d.kind != TypeKind::Primitive) t["members"] = d.members;
    if (d.kind == TypeKind::Array) t["count"] = d.count;
    types.push_back(std::move(t));
  }
  json fns = json::array();
  for (const Function& f : functions_) {
    json blocks = json::array();
    for (const Block& b : f.blocks) {
      json instrs = json::array();
      for (const Instruction& ins : b.instrs) {
        json ops = json::array();
        for (const Operand& o : ins.operands()) {
          ops.push_back(json::array({kOperandTags[static_cast<std::size_t>(o.kind)], o.value}));
        }
        instrs.push_back({{"op", opcode_name(ins.op)}, {"type", ins.type}, {"operands", ops}});
      }
      blocks.push_back(std::move(instrs));
    }
    fns.push_back({{"args", f.arg_types}, {"ret", f.ret_type}, {"blocks", std::move(blocks)}});
  }
  return {{"seed", seed_}, {"types", std::move(types)}, {"functions", std::move(fns)}};
}

Program Program::from_json(const nlohmann::json& j) {
  try {
    auto table = std::make_shared<TypeTable>();
    for (const auto& t : j.at("types")) {
      const std::string kind = t.at("kind").get<std::string>();
      TypeDesc d;
      auto it = std::find(kKindNames.begin(), kKindNames.end(), kind);
      if (it == kKindNames.end()) throw DataError("unknown type kind: " + kind);
      d.kind = static_cast<TypeKind>(it - kKindNames.begin());
      if (d.kind == TypeKind::Primitive) {
        auto prim = prim_from_name(t.at("prim").get<std::string>());
        if (!prim) throw DataError("unknown primitive type");
        d.prim = *prim;
      } else {
        d.members = t.at("members").get<std::vector<TypeId>>();
        if (d.kind != TypeKind::Record && d.members.size() != 1) {
          throw DataError("pointer/array types need exactly one member");
        }
      }
      if (d.kind == TypeKind::Array) d.count = t.at("count").get<std::uint32_t>();
      const std::size_t before = table->size();
      if (table->intern(d) != before) throw DataError("duplicate type table entry");
    }
    std::vector<Function> fns;
    for (const auto& jf : j.at("functions")) {
      Function f;
      f.arg_types = jf.at("args").get<std::vector<TypeId>>();
      f.ret_type = jf.at("ret").get<TypeId>();
      for (const auto& jb : jf.at("blocks")) {
        Block b;
        for (const auto& ji : jb) {
          Instruction ins;
          auto op = opcode_from_name(ji.at("op").get<std::string>());
          if (!op) throw DataError("unknown opcode");
          ins.op = *op;
          ins.type = ji.at("type").get<TypeId>();
          for (const auto& jo : ji.at("operands")) {
            const std::string tag = jo.at(0).get<std::string>();
            auto tit = std::find(kOperandTags.begin(), kOperandTags.end(), tag);
            if (tit == kOperandTags.end()) throw DataError("unknown operand tag: " + tag);
            if (ins.num_operands() == Instruction::kMaxOperands) {
              throw DataError("too many operands");
            }
            ins.add_operand({static_cast<Operand::Kind>(tit - kOperandTags.begin()),
                             jo.at(1).get<std::int64_t>()});
          }
          b.instrs.push_back(ins);
        }
        f.blocks.push_back(std::move(b));
      }
      fns.push_back(std::move(f));
    }
    // Ids in canonical JSON are already dense; assemble re-checks that
    // every operand refers to a definition.
    std::uint32_t next = 0;
    for (Function& f : fns)
      for (Block& b : f.blocks)
        for (Instruction& ins : b.instrs) ins.id = next++;
    return assemble(std::move(fns), std::move(table), j.at("seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("program json: ") + e.what());
  } catch (const InputError& e) {
    throw DataError(std::string("program json: ") + e.what());
  }
}

Program union_programs(const Program& a, const Program& b) {
  auto table = std::make_shared<TypeTable>(a.types());
  // Re-intern b's types in order; members always precede their users.
  std::vector<TypeId> tmap(b.types().size());
  for (std::size_t i = 0; i < b.types().size(); ++i) {
    TypeDesc d = b.types().at(static_cast<TypeId>(i));
    for (TypeId& m : d.members) m = tmap[m];
    tmap[i] = table->intern(d);
  }
  std::vector<Function> fns = a.functions();
  const auto fn_offset = static_cast<std::int64_t>(fns.size());
  const auto id_offset = static_cast<std::uint32_t>(a.instruction_count());
  for (Function f : b.functions()) {
    for (TypeId& t : f.arg_types) t = tmap[t];
    f.ret_type = tmap[f.ret_type];
    for (Block& blk : f.blocks) {
      for (Instruction& ins : blk.instrs) {
        ins.type = tmap[ins.type];
        ins.id += id_offset;
        for (Operand& o : ins.operands()) {
          if (o.kind == Operand::Kind::Value) o.value += id_offset;
          if (o.kind == Operand::Kind::Func) o.value += fn_offset;
        }
      }
    }
    fns.push_back(std::move(f));
  }
  return Program::assemble(std::move(fns), std::move(table), mix_seed(a.seed(), b.seed()));
}

}  // namespace passforge::synthenv
