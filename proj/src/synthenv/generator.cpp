#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_map>

#include "passforge/error.hpp"
#include "passforge/rng.hpp"
#include "passforge/synthenv.hpp"

namespace passforge::synthenv {

namespace {

constexpr std::array<std::string_view, 3> kSizeNames = {"small", "medium", "large"};
constexpr std::array<std::string_view, kNumFamilies> kFamilyNames = {"A", "B", "C", "D", "E"};

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::string_view size_class_name(SizeClass s) { return kSizeNames[static_cast<std::size_t>(s)]; }
std::string_view family_name(Family f) { return kFamilyNames[static_cast<std::size_t>(f)]; }

SizeClass parse_size_class(std::string_view s) {
  for (std::size_t i = 0; i < kSizeNames.size(); ++i) {
    if (kSizeNames[i] == s) return static_cast<SizeClass>(i);
  }
  throw ConfigError("invalid size class: " + std::string(s));
}

Family parse_family(std::string_view s) {
  for (std::size_t i = 0; i < kFamilyNames.size(); ++i) {
    if (kFamilyNames[i] == s) return static_cast<Family>(i);
  }
  throw ConfigError("invalid family: " + std::string(s));
}

std::pair<std::size_t, std::size_t> size_band(SizeClass s) {
  switch (s) {
    case SizeClass::Small:
      return {30, 100};
    case SizeClass::Medium:
      return {100, 400};
    case SizeClass::Large:
      return {400, 1500};
  }
  throw ConfigError("invalid size class");
}

GeneratorConfig parse_generator_config(std::string_view text) {
  GeneratorConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value: " + t);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    try {
      if (key == "size_class") {
        cfg.size_class = parse_size_class(value);
      } else if (key == "family") {
        cfg.family = parse_family(value);
      } else if (key == "opcode_alphabet_size") {
        cfg.opcode_alphabet_size = static_cast<unsigned>(std::stoul(value));
      } else if (key == "seed") {
        cfg.seed = std::stoull(value);
      } else {
        throw ConfigError("unknown generator key: " + key);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad value for " + key + ": " + value);
    }
  }
  return cfg;
}

std::string format_generator_config(const GeneratorConfig& cfg) {
  std::ostringstream out;
  out << "size_class=" << size_class_name(cfg.size_class) << "\n"
      << "family=" << family_name(cfg.family) << "\n"
      << "opcode_alphabet_size=" << cfg.opcode_alphabet_size << "\n"
      << "seed=" << cfg.seed << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

enum Motif : std::size_t {
  kLiveArith, kConstChain, kDead, kIdentity, kCse, kLocalPrim, kLocalPtr, kRecord, kArray,
  kConstBranch, kVarBranch, kBrChain, kLoop, kCallConst, kCallVar, kNumMotifs
};

using Weights = std::array<double, kNumMotifs>;

// Base motif weights per family.
Weights family_weights(Family f) {
  switch (f) {
    //         live const dead iden cse  lprm lptr rec  arr  cbr  vbr  brch loop ccal cvar
    case Family::A:
      return {3.0, 4.0, 3.0, 3.0, 3.0, 1.0, 0.2, 0.2, 0.2, 0.3, 0.3, 0.5, 0.3, 0.5, 0.5};
    case Family::B:
      return {2.0, 1.0, 1.0, 0.5, 0.5, 3.0, 2.0, 4.0, 3.0, 0.3, 0.3, 0.5, 0.3, 0.3, 0.3};
    case Family::C:
      return {2.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.2, 0.2, 0.2, 3.0, 2.0, 3.0, 2.0, 0.3, 0.3};
    case Family::D:
      return {2.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.2, 0.3, 0.2, 0.3, 0.3, 0.5, 0.3, 4.0, 3.0};
    case Family::E:
      break;
  }
  Weights w;
  w.fill(1.5);
  return w;
}

struct Helper {
  std::uint32_t index;
  std::size_t nargs;
};

class Generator {
 public:
  Generator(std::uint64_t seed, const GeneratorConfig& cfg)
      : cfg_(cfg), rng_(mix_seed(seed, 0x5eedULL + static_cast<std::uint64_t>(cfg.family))) {}

  Program build(std::uint64_t seed) {
    types_ = std::make_shared<TypeTable>();
    i1_ = types_->primitive(Prim::I1);
    i8_ = types_->primitive(Prim::I8);
    i32_ = types_->primitive(Prim::I32);
    i64_ = types_->primitive(Prim::I64);
    f32_ = types_->primitive(Prim::F32);
    void_ = types_->primitive(Prim::Void);
    ptr_i32_ = types_->pointer(i32_);

    const auto [lo, hi] = size_band(cfg_.size_class);
    const std::size_t span = hi - lo;
    target_ = lo + span / 20 + rng_.below(span - span / 20 - span / 8);

    weights_ = family_weights(cfg_.family);
    for (std::size_t m = 0; m < kNumMotifs; ++m) {
      weights_[m] *= rng_.uniform(0.0, 2.0);
      if (m != kLiveArith && rng_.chance(0.25)) weights_[m] = 0.0;
    }
    weights_[kLiveArith] = std::max(weights_[kLiveArith], 0.5);

    fns_.emplace_back();  // main, filled last
    make_helpers();
    build_main();
    return Program::assemble(std::move(fns_), types_, seed);
  }

 private:
  // ---- helpers -----------------------------------------------------------

  Operand emit(std::size_t fi, std::size_t bi, Opcode op, TypeId type,
               std::initializer_list<Operand> ops) {
    Instruction ins;
    ins.op = op;
    ins.type = type;
    ins.id = next_id_++;
    for (const Operand& o : ops) ins.add_operand(o);
    fns_[fi].blocks[bi].instrs.push_back(ins);
    ++emitted_;
    return Operand::val(ins.id);
  }

  Operand emit(Opcode op, TypeId type, std::initializer_list<Operand> ops) {
    return emit(0, cur_, op, type, ops);
  }

  Operand alloca_of(TypeId allocated) {
    Instruction ins;
    ins.op = Opcode::Alloca;
    ins.type = allocated;
    ins.id = next_id_++;
    allocas_.push_back(ins);
    ++emitted_;
    return Operand::val(ins.id);
  }

  std::uint32_t new_block() {
    fns_[0].blocks.emplace_back();
    return static_cast<std::uint32_t>(fns_[0].blocks.size() - 1);
  }

  std::size_t alphabet() const {
    return std::min<std::size_t>(cfg_.opcode_alphabet_size, kOptionalOpcodes);
  }

  bool available(Opcode op) const { return static_cast<std::size_t>(op) < alphabet(); }

  // Integer binary op from the configured alphabet.
  Opcode int_op() {
    static constexpr std::array<Opcode, 8> kInt = {Opcode::Add, Opcode::Sub, Opcode::Mul,
                                                   Opcode::And, Opcode::Or,  Opcode::Xor,
                                                   Opcode::Shl, Opcode::UDiv};
    const std::size_t n = std::min<std::size_t>(alphabet(), kInt.size());
    if (cfg_.family == Family::A && rng_.chance(0.4)) {
      static constexpr std::array<Opcode, 3> kHot = {Opcode::Mul, Opcode::Xor, Opcode::Shl};
      for (int tries = 0; tries < 3; ++tries) {
        Opcode op = kHot[rng_.below(kHot.size())];
        if (available(op)) return op;
      }
    }
    return kInt[rng_.below(n)];
  }

  Operand small_const() { return Operand::cst(rng_.range(1, 9)); }

  Operand pick_int() {
    if (pool_.empty() || rng_.chance(0.15)) return small_const();
    return pool_[rng_.below(pool_.size())];
  }

  Operand pick_value() {
    if (pool_.empty()) return Operand::arg(1);
    return pool_[rng_.below(pool_.size())];
  }

  Operand binop(Operand a, Operand b) {
    Opcode op = int_op();
    if (op == Opcode::UDiv && b.is(Operand::Kind::Const) && b.value == 0) b = Operand::cst(3);
    return emit(op, i32_, {a, b});
  }

  Operand out() const { return Operand::arg(0); }

  void store_out(Operand v) { emit(Opcode::Store, void_, {v, out()}); }

  TypeId random_record(int depth) {
    const std::size_t n = 2 + rng_.below(3);
    std::vector<TypeId> members;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = rng_.below(10);
      if (r < 5) {
        members.push_back(i32_);
      } else if (r < 7) {
        members.push_back(i64_);
      } else if (r < 8) {
        members.push_back(f32_);
      } else if (r < 9) {
        members.push_back(ptr_i32_);
      } else if (depth == 0) {
        members.push_back(random_record(1));
      } else {
        members.push_back(i8_);
      }
    }
    return types_->record(std::move(members));
  }

  void make_helpers() {
    std::size_t count = 0;
    if (weights_[kCallConst] + weights_[kCallVar] > 0) {
      count = cfg_.family == Family::D ? 3 + rng_.below(4) : rng_.below(3);
    }
    for (std::size_t h = 0; h < count; ++h) {
      Function f;
      const std::size_t nargs = 1 + rng_.below(3);
      f.arg_types.assign(nargs, i32_);
      f.ret_type = i32_;
      f.blocks.emplace_back();
      fns_.push_back(std::move(f));
      const std::size_t fi = fns_.size() - 1;
      const bool multi_block = rng_.chance(cfg_.family == Family::D ? 0.25 : 0.1);
      const std::size_t body = 1 + rng_.below(cfg_.family == Family::D ? 7 : 4);
      std::vector<Operand> vals;
      for (std::size_t a = 0; a < nargs; ++a) vals.push_back(Operand::arg(static_cast<std::uint32_t>(a)));
      Operand last = vals[0];
      for (std::size_t i = 0; i < body; ++i) {
        Operand x = vals[rng_.below(vals.size())];
        Operand y = rng_.chance(0.5) ? vals[rng_.below(vals.size())] : small_const();
        Opcode op = int_op();
        if (op == Opcode::UDiv && y.is(Operand::Kind::Const) && y.value == 0) y = Operand::cst(2);
        last = emit(fi, 0, op, i32_, {x, y});
        vals.push_back(last);
      }
      if (multi_block) {
        Operand c = emit(fi, 0, Opcode::ICmp, i1_, {last, small_const()});
        fns_[fi].blocks.emplace_back();
        fns_[fi].blocks.emplace_back();
        emit(fi, 0, Opcode::CondBr, void_, {c, Operand::block(1), Operand::block(2)});
        Operand t = emit(fi, 1, Opcode::Add, i32_, {last, small_const()});
        emit(fi, 1, Opcode::Ret, void_, {t});
        emit(fi, 2, Opcode::Ret, void_, {last});
      } else {
        emit(fi, 0, Opcode::Ret, void_, {last});
      }
      helpers_.push_back({static_cast<std::uint32_t>(fi), nargs});
    }
  }

  // ---- motifs ------------------------------------------------------------

  void live_arith() {
    Operand v = pick_value();
    const std::size_t n = 1 + rng_.below(3);
    for (std::size_t i = 0; i < n; ++i) v = binop(v, pick_int());
    store_out(v);
    pool_.push_back(v);
  }

  void const_chain() {
    Operand v = binop(small_const(), small_const());
    const std::size_t n = 1 + rng_.below(4);
    for (std::size_t i = 0; i < n; ++i) v = binop(v, small_const());
    store_out(v);
  }

  void dead() {
    const auto group = rng_.below(3);
    const std::size_t n = 1 + rng_.below(3);
    Operand v = pick_value();
    for (std::size_t i = 0; i < n; ++i) {
      if (group == 1 && available(Opcode::Trunc)) {
        v = emit(Opcode::ZExt, i64_, {v});
        v = emit(Opcode::Trunc, i32_, {v});
      } else if (group == 2 && available(Opcode::Select)) {
        Operand c = emit(Opcode::ICmp, i1_, {v, pick_int()});
        v = emit(Opcode::Select, i32_, {c, v, pick_int()});
      } else {
        v = binop(v, pick_int());
      }
    }
  }

  void identity() {
    Operand x = pick_value();
    Operand v;
    switch (rng_.below(4)) {
      case 0:
        v = emit(Opcode::Add, i32_, {x, Operand::cst(0)});
        break;
      case 1:
        v = available(Opcode::Mul) ? emit(Opcode::Mul, i32_, {x, Operand::cst(1)})
                                   : emit(Opcode::Add, i32_, {Operand::cst(0), x});
        break;
      case 2:
        v = available(Opcode::Sub) ? emit(Opcode::Sub, i32_, {x, x})
                                   : emit(Opcode::Add, i32_, {x, Operand::cst(0)});
        break;
      default:
        v = available(Opcode::Xor) ? emit(Opcode::Xor, i32_, {x, Operand::cst(0)})
                                   : emit(Opcode::Add, i32_, {x, Operand::cst(0)});
        break;
    }
    store_out(binop(v, pick_int()));
  }

  void cse() {
    Operand x = pick_value();
    Operand y = pick_value();
    Opcode op = available(Opcode::Mul) && rng_.chance(0.5) ? Opcode::Mul : Opcode::Add;
    Operand a = emit(op, i32_, {x, y});
    Operand b = rng_.chance(0.5) ? emit(op, i32_, {y, x}) : emit(op, i32_, {x, y});
    Operand s = emit(Opcode::Add, i32_, {a, b});
    store_out(s);
    pool_.push_back(a);
  }

  void local_prim() {
    Operand a = alloca_of(i32_);
    Operand v = rng_.chance(0.4) ? small_const() : pick_value();
    emit(Opcode::Store, void_, {v, a});
    if (rng_.chance(0.5)) live_arith();
    Operand l = emit(Opcode::Load, i32_, {a});
    store_out(binop(l, pick_int()));
  }

  void local_ptr() {
    Operand a = alloca_of(ptr_i32_);
    emit(Opcode::Store, void_, {out(), a});
    Operand p = emit(Opcode::Load, ptr_i32_, {a});
    emit(Opcode::Store, void_, {pick_value(), p});
  }

  void record() {
    const TypeId rt = random_record(0);
    const TypeDesc desc = types_->at(rt);
    Operand a = alloca_of(rt);
    std::vector<std::uint32_t> fields;
    for (std::uint32_t k = 0; k < desc.members.size(); ++k) {
      if (rng_.chance(0.7) || fields.empty()) fields.push_back(k);
    }
    for (std::uint32_t k : fields) {
      const TypeId mt = desc.members[k];
      Operand g = emit(Opcode::Gep, mt, {a, Operand::cst(k)});
      if (types_->at(mt).kind == TypeKind::Record) {
        // Nested record: touch its first member through a second gep.
        const TypeId inner = types_->at(mt).members[0];
        Operand g2 = emit(Opcode::Gep, inner, {g, Operand::cst(0)});
        emit(Opcode::Store, void_, {small_const(), g2});
        Operand g3 = emit(Opcode::Gep, mt, {a, Operand::cst(k)});
        Operand g4 = emit(Opcode::Gep, inner, {g3, Operand::cst(0)});
        store_out(emit(Opcode::Load, inner, {g4}));
        continue;
      }
      Operand v = mt == ptr_i32_ ? out() : (rng_.chance(0.5) ? small_const() : pick_value());
      emit(Opcode::Store, void_, {v, g});
    }
    for (std::uint32_t k : fields) {
      const TypeId mt = desc.members[k];
      if (types_->at(mt).kind == TypeKind::Record) continue;
      Operand g = emit(Opcode::Gep, mt, {a, Operand::cst(k)});
      Operand l = emit(Opcode::Load, mt, {g});
      if (mt == i32_) {
        store_out(binop(l, pick_int()));
      } else if (mt == ptr_i32_) {
        emit(Opcode::Store, void_, {pick_value(), l});
      } else {
        store_out(l);
      }
    }
  }

  void array() {
    const std::uint32_t n = 2 + static_cast<std::uint32_t>(rng_.below(4));
    const TypeId at = types_->array(i32_, n);
    Operand a = alloca_of(at);
    const std::uint32_t used = 1 + static_cast<std::uint32_t>(rng_.below(n));
    for (std::uint32_t k = 0; k < used; ++k) {
      Operand g = emit(Opcode::Gep, i32_, {a, Operand::cst(k)});
      emit(Opcode::Store, void_, {rng_.chance(0.5) ? small_const() : pick_value(), g});
    }
    Operand acc = Operand::cst(0);
    for (std::uint32_t k = 0; k < used; ++k) {
      Operand g = emit(Opcode::Gep, i32_, {a, Operand::cst(k)});
      Operand l = emit(Opcode::Load, i32_, {g});
      acc = k == 0 ? l : emit(Opcode::Add, i32_, {acc, l});
    }
    store_out(acc);
  }

  void diamond(bool constant) {
    Operand c = constant ? emit(Opcode::ICmp, i1_, {small_const(), small_const()})
                         : emit(Opcode::ICmp, i1_, {pick_value(), pick_int()});
    const std::uint32_t t = new_block();
    const std::uint32_t f = new_block();
    const std::uint32_t j = new_block();
    emit(Opcode::CondBr, void_, {c, Operand::block(t), Operand::block(f)});
    const auto saved = pool_;
    cur_ = t;
    live_arith();
    if (rng_.chance(0.5)) live_arith();
    emit(Opcode::Br, void_, {Operand::block(j)});
    pool_ = saved;
    cur_ = f;
    live_arith();
    emit(Opcode::Br, void_, {Operand::block(j)});
    pool_ = saved;
    cur_ = j;
  }

  void br_chain() {
    const std::uint32_t n = new_block();
    emit(Opcode::Br, void_, {Operand::block(n)});
    cur_ = n;
    live_arith();
  }

  void loop() {
    const std::uint32_t body = new_block();
    const std::uint32_t exit = new_block();
    emit(Opcode::Br, void_, {Operand::block(body)});
    const auto saved = pool_;
    cur_ = body;
    live_arith();
    Operand c = emit(Opcode::ICmp, i1_, {pool_.back(), small_const()});
    emit(Opcode::CondBr, void_, {c, Operand::block(body), Operand::block(exit)});
    pool_ = saved;
    cur_ = exit;
  }

  void call(bool constant_args) {
    if (helpers_.empty()) return live_arith();
    const Helper& h = helpers_[rng_.below(helpers_.size())];
    // Constant call sites mostly reuse one argument tuple per helper.
    auto& tuple = const_args_[h.index];
    if (tuple.empty()) {
      for (std::size_t i = 0; i < h.nargs; ++i) tuple.push_back(small_const());
    }
    Instruction ins;
    ins.op = Opcode::Call;
    ins.type = i32_;
    ins.id = next_id_++;
    ins.add_operand(Operand::func(h.index));
    for (std::size_t i = 0; i < h.nargs; ++i) {
      if (constant_args) {
        ins.add_operand(rng_.chance(0.8) ? tuple[i] : small_const());
      } else {
        ins.add_operand(pick_value());
      }
    }
    fns_[0].blocks[cur_].instrs.push_back(ins);
    ++emitted_;
    Operand v = Operand::val(ins.id);
    store_out(v);
  }

  void build_main() {
    Function& main = fns_[0];
    main.arg_types = {ptr_i32_, i32_, i32_};
    main.ret_type = void_;
    main.blocks.emplace_back();
    cur_ = 0;
    pool_ = {Operand::arg(1), Operand::arg(2)};

    double total = 0;
    for (double w : weights_) total += w;
    // Reserve room for the final ret.
    while (emitted_ + 1 < target_) {
      double r = rng_.uniform() * total;
      std::size_t m = 0;
      while (m + 1 < kNumMotifs && r >= weights_[m]) r -= weights_[m++];
      switch (static_cast<Motif>(m)) {
        case kLiveArith: live_arith(); break;
        case kConstChain: const_chain(); break;
        case kDead: dead(); break;
        case kIdentity: identity(); break;
        case kCse: cse(); break;
        case kLocalPrim: local_prim(); break;
        case kLocalPtr: local_ptr(); break;
        case kRecord: record(); break;
        case kArray: array(); break;
        case kConstBranch: diamond(true); break;
        case kVarBranch: diamond(false); break;
        case kBrChain: br_chain(); break;
        case kLoop: loop(); break;
        case kCallConst: call(true); break;
        case kCallVar: call(false); break;
        case kNumMotifs: break;
      }
    }
    emit(Opcode::Ret, void_, {});
    auto& entry = fns_[0].blocks[0].instrs;
    entry.insert(entry.begin(), allocas_.begin(), allocas_.end());
  }

  GeneratorConfig cfg_;
  Rng rng_;
  std::shared_ptr<TypeTable> types_;
  TypeId i1_ = 0, i8_ = 0, i32_ = 0, i64_ = 0, f32_ = 0, void_ = 0, ptr_i32_ = 0;
  std::vector<Function> fns_;
  std::vector<Helper> helpers_;
  std::unordered_map<std::uint32_t, std::vector<Operand>> const_args_;
  std::vector<Instruction> allocas_;
  std::vector<Operand> pool_;
  Weights weights_{};
  std::size_t target_ = 0;
  std::size_t emitted_ = 0;
  std::uint32_t cur_ = 0;
  std::uint32_t next_id_ = 0;
};

}  // namespace

Program generate_program(std::uint64_t seed, const GeneratorConfig& config) {
  if (config.opcode_alphabet_size == 0) throw ConfigError("opcode alphabet is empty");
  if (config.opcode_alphabet_size > kOptionalOpcodes) {
    throw ConfigError("opcode_alphabet_size exceeds " + std::to_string(kOptionalOpcodes));
  }
  const auto [lo, hi] = size_band(config.size_class);
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    Generator gen(mix_seed(seed, attempt), config);
    Program p = gen.build(seed);
    if (p.instruction_count() >= lo && p.instruction_count() <= hi) return p;
  }
  throw ConfigError("generator could not meet the size band");
}


std::vector<ProgramRecord> generate_corpus(const CorpusSpec& spec) {
  if (spec.families.empty() || spec.sizes.empty()) throw ConfigError("corpus needs a family and a size class");
  std::vector<ProgramRecord> out;
  out.reserve(spec.count);
  const std::size_t nf = spec.families.size();
  const std::size_t ns = spec.sizes.size();
  for (std::size_t i = 0; i < spec.count; ++i) {
    GeneratorConfig cfg;
    cfg.family = spec.families[i % nf];
    cfg.size_class = spec.sizes[(i / nf) % ns];
    cfg.opcode_alphabet_size = spec.opcode_alphabet_size;
    cfg.seed = mix_seed(spec.seed, i);
    out.push_back({cfg, generate_program(cfg.seed, cfg)});
  }
  return out;
}

std::vector<Program> corpus_programs(const std::vector<ProgramRecord>& corpus) {
  std::vector<Program> out;
  out.reserve(corpus.size());
  for (const auto& r : corpus) out.push_back(r.program);
  return out;
}

nlohmann::json corpus_to_json(const std::vector<ProgramRecord>& corpus) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : corpus) {
    arr.push_back({{"seed", r.config.seed},
                   {"family", family_name(r.config.family)},
                   {"size_class", size_class_name(r.config.size_class)},
                   {"opcode_alphabet_size", r.config.opcode_alphabet_size},
                   {"program", r.program.to_json()}});
  }
  return {{"programs", arr}};
}

std::vector<ProgramRecord> corpus_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("programs") || !j["programs"].is_array()) {
    throw DataError("corpus: expected an object with a \"programs\" array");
  }
  std::vector<ProgramRecord> out;
  for (const auto& e : j["programs"]) {
    try {
      ProgramRecord r;
      r.config.seed = e.at("seed").get<std::uint64_t>();
      r.config.family = parse_family(e.at("family").get<std::string>());
      r.config.size_class = parse_size_class(e.at("size_class").get<std::string>());
      r.config.opcode_alphabet_size = e.at("opcode_alphabet_size").get<unsigned>();
      r.program = Program::from_json(e.at("program"));
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(std::string("corpus entry: ") + ex.what());
    } catch (const ConfigError& ex) {
      throw DataError(std::string("corpus entry: ") + ex.what());
    }
  }
  return out;
}

}  // namespace passforge::synthenv
