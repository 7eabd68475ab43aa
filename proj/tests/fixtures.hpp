#pragma once

#include <stdexcept>
#include <string>

#include "passforge/synthenv.hpp"

namespace fixtures {

using namespace passforge::synthenv;

// Hand-built programs. Function 0 has signature (i32* out, i32 x, i32 y) -> void.
struct Builder {
  std::shared_ptr<TypeTable> types = std::make_shared<TypeTable>();
  TypeId v = types->primitive(Prim::Void);
  TypeId i1 = types->primitive(Prim::I1);
  TypeId i32 = types->primitive(Prim::I32);
  TypeId ptr = types->pointer(i32);
  std::vector<Function> fns;
  std::uint32_t next = 0;

  Builder() {
    fns.emplace_back();
    fns[0].arg_types = {ptr, i32, i32};
    fns[0].ret_type = v;
    fns[0].blocks.emplace_back();
  }

  Operand emit(Opcode op, TypeId t, std::initializer_list<Operand> ops, std::size_t block = 0,
               std::size_t fn = 0) {
    Instruction ins;
    ins.op = op;
    ins.type = t;
    ins.id = next++;
    for (const Operand& o : ops) ins.add_operand(o);
    fns.at(fn).blocks.at(block).instrs.push_back(ins);
    return Operand::val(ins.id);
  }

  std::uint32_t add_block(std::size_t fn = 0) {
    fns.at(fn).blocks.emplace_back();
    return static_cast<std::uint32_t>(fns[fn].blocks.size() - 1);
  }

  std::uint32_t add_function(std::size_t nargs) {
    Function f;
    f.arg_types.assign(nargs, i32);
    f.ret_type = i32;
    f.blocks.emplace_back();
    fns.push_back(std::move(f));
    return static_cast<std::uint32_t>(fns.size() - 1);
  }

  Operand store_out(Operand val, std::size_t block = 0) {
    return emit(Opcode::Store, v, {val, Operand::arg(0)}, block);
  }

  Program build(std::uint64_t seed = 0) const { return Program::assemble(fns, types, seed); }
};

inline PassId find_pass(const std::string& name) {
  for (int i = 0; i < static_cast<int>(kNumPasses); ++i) {
    if (pass_name(PassId(i)) == name) return PassId(i);
  }
  throw std::runtime_error("no pass named " + name);
}

inline PassId first_noop() {
  for (int i = 0; i < static_cast<int>(kNumPasses); ++i) {
    if (pass_rule(PassId(i)).rule == Rule::NoOp) return PassId(i);
  }
  throw std::runtime_error("no noop pass");
}

// out = x + 1; two dead adds; ret. Count 5.
inline Program dead_code_program() {
  Builder b;
  Operand x = b.emit(Opcode::Add, b.i32, {Operand::arg(1), Operand::cst(1)});
  b.store_out(x);
  Operand d = b.emit(Opcode::Mul, b.i32, {Operand::arg(2), Operand::cst(3)});
  b.emit(Opcode::Sub, b.i32, {d, Operand::cst(1)});
  b.emit(Opcode::Ret, b.v, {});
  return b.build();
}

// Record slot written and read through geps; needs sroa before mem2reg.
inline Program record_program() {
  Builder b;
  TypeId rec = b.types->record({b.i32, b.i32});
  Operand a = b.emit(Opcode::Alloca, rec, {});
  Operand g0 = b.emit(Opcode::Gep, b.i32, {a, Operand::cst(0)});
  b.emit(Opcode::Store, b.v, {Operand::arg(1), g0});
  Operand g1 = b.emit(Opcode::Gep, b.i32, {a, Operand::cst(0)});
  Operand l = b.emit(Opcode::Load, b.i32, {g1});
  b.store_out(l);
  b.emit(Opcode::Ret, b.v, {});
  return b.build();
}

// Only unreachable-block elimination can shrink this program.
inline Program unreachable_program() {
  Builder b;
  b.store_out(Operand::arg(1));
  b.emit(Opcode::Ret, b.v, {});
  const std::uint32_t dead = b.add_block();
  b.emit(Opcode::Store, b.v, {Operand::arg(2), Operand::arg(0)}, dead);
  b.emit(Opcode::Ret, b.v, {}, dead);
  return b.build();
}

}  // namespace fixtures
