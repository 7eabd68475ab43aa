#pragma once

// Deterministic synthetic compiler environment.
//
// A Program is a small SSA-style IR: functions made of basic blocks made of
// instructions. Each of the 124 pass ids maps to a fixed rewrite rule
// (dead-code sweeps, constant folding, memory promotion, block merging,
// inlining, ...). Programs are immutable values; every pass returns a new
// program with canonical value numbering and a structural content hash.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace passforge::synthenv {

inline constexpr std::size_t kNumPasses = 124;
inline constexpr std::size_t kEpisodeLength = 45;

class PassId {
 public:
  constexpr PassId() = default;
  // Throws std::out_of_range for ids outside [0, 124).
  explicit PassId(int id);

  constexpr std::uint8_t value() const { return id_; }
  friend constexpr auto operator<=>(PassId, PassId) = default;

 private:
  std::uint8_t id_ = 0;
};

using PassSequence = std::vector<PassId>;

PassSequence make_sequence(std::initializer_list<int> ids);
PassSequence sequence_from_ints(std::span<const int> ids);
std::vector<int> sequence_to_ints(const PassSequence& seq);
// Length first, then elementwise by id.
bool length_lex_less(const PassSequence& a, const PassSequence& b);

// ---------------------------------------------------------------------------
// IR

enum class Opcode : std::uint8_t {
  Add, Sub, Mul, And, Or, Xor, Shl, UDiv, ZExt, Trunc, BitCast, FAdd, FMul, Select,
  ICmp, Alloca, Load, Store, Gep, Call, Br, CondBr, Ret,
};
inline constexpr std::size_t kNumOpcodes = 23;
// Opcodes the generator may draw arithmetic from; `opcode_alphabet_size`
// selects a prefix of this list.
inline constexpr std::size_t kOptionalOpcodes = 14;

std::string_view opcode_name(Opcode op);
std::optional<Opcode> opcode_from_name(std::string_view name);
bool is_terminator(Opcode op);
bool has_side_effects(Opcode op);
bool is_commutative(Opcode op);

enum class Prim : std::uint8_t { Void, I1, I8, I32, I64, F32, F64 };
std::string_view prim_name(Prim p);
std::optional<Prim> prim_from_name(std::string_view name);

enum class TypeKind : std::uint8_t { Primitive, Pointer, Record, Array };

using TypeId = std::uint32_t;

struct TypeDesc {
  TypeKind kind = TypeKind::Primitive;
  Prim prim = Prim::Void;
  // Pointer: {pointee}. Array: {element}. Record: member types.
  std::vector<TypeId> members;
  std::uint32_t count = 0;  // array length

  friend bool operator==(const TypeDesc&, const TypeDesc&) = default;
};

class TypeTable {
 public:
  TypeId intern(const TypeDesc& desc);
  TypeId primitive(Prim p);
  TypeId pointer(TypeId pointee);
  TypeId array(TypeId element, std::uint32_t count);
  TypeId record(std::vector<TypeId> members);

  const TypeDesc& at(TypeId id) const { return entries_.at(id); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<TypeDesc>& entries() const { return entries_; }

  // LLVM-flavoured rendering: i32, i32*, {i32,f32}, [4 x i32].
  std::string render(TypeId id) const;
  bool is_composite(TypeId id) const { return at(id).kind != TypeKind::Primitive; }

 private:
  std::vector<TypeDesc> entries_;
};

struct Operand {
  enum class Kind : std::uint8_t { Value, Const, Arg, Block, Func };
  Kind kind = Kind::Const;
  std::int64_t value = 0;

  static Operand val(std::uint32_t id) { return {Kind::Value, id}; }
  static Operand cst(std::int64_t v) { return {Kind::Const, v}; }
  static Operand arg(std::uint32_t i) { return {Kind::Arg, i}; }
  static Operand block(std::uint32_t b) { return {Kind::Block, b}; }
  static Operand func(std::uint32_t f) { return {Kind::Func, f}; }

  bool is(Kind k) const { return kind == k; }
  friend bool operator==(const Operand&, const Operand&) = default;
};

struct Instruction {
  static constexpr std::size_t kMaxOperands = 4;

  Opcode op = Opcode::Add;
  // Result type; for Alloca the allocated type, for Gep the member type.
  TypeId type = 0;
  std::uint32_t id = 0;
  bool dead = false;  // scratch flag used while rewriting

  std::span<const Operand> operands() const { return {ops_.data(), count_}; }
  std::span<Operand> operands() { return {ops_.data(), count_}; }
  std::size_t num_operands() const { return count_; }
  const Operand& operand(std::size_t i) const { return ops_[i]; }
  Operand& operand(std::size_t i) { return ops_[i]; }
  void add_operand(Operand o);
  void clear_operands() { count_ = 0; }

 private:
  std::array<Operand, kMaxOperands> ops_{};
  std::uint8_t count_ = 0;
};

struct Block {
  std::vector<Instruction> instrs;
};

struct Function {
  std::vector<TypeId> arg_types;
  TypeId ret_type = 0;
  std::vector<Block> blocks;
};

class Program {
 public:
  Program() = default;
  // Renumbers values in program order, validates, and hashes.
  // Throws InputError if the structure is malformed.
  static Program assemble(std::vector<Function> functions, std::shared_ptr<const TypeTable> types,
                          std::uint64_t seed);

  const std::vector<Function>& functions() const { return functions_; }
  const TypeTable& types() const { return *types_; }
  const std::shared_ptr<const TypeTable>& types_ptr() const { return types_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t content_hash() const { return hash_; }
  std::size_t instruction_count() const { return count_; }
  std::size_t block_count() const;

  nlohmann::json to_json() const;
  // Throws DataError on schema violations.
  static Program from_json(const nlohmann::json& j);

 private:
  std::vector<Function> functions_;
  std::shared_ptr<const TypeTable> types_;
  std::uint64_t seed_ = 0;
  std::uint64_t hash_ = 0;
  std::size_t count_ = 0;
};

std::size_t instruction_count(const Program& p);

// Structural validity check used by tests and by Program::assemble.
// Returns an empty string when valid, otherwise a description.
std::string validate(const std::vector<Function>& functions, const TypeTable& types);

// Disjoint union: functions of `b` are appended after those of `a`.
Program union_programs(const Program& a, const Program& b);

// ---------------------------------------------------------------------------
// Generator

enum class SizeClass : std::uint8_t { Small, Medium, Large };
// A: arithmetic heavy, B: memory/composite types, C: branches and loops,
// D: calls into small helpers, E: even mix of everything.
enum class Family : std::uint8_t { A, B, C, D, E };
inline constexpr std::size_t kNumFamilies = 5;

std::string_view size_class_name(SizeClass s);
std::string_view family_name(Family f);
SizeClass parse_size_class(std::string_view s);  // ConfigError on failure
Family parse_family(std::string_view s);         // ConfigError on failure
std::pair<std::size_t, std::size_t> size_band(SizeClass s);

struct GeneratorConfig {
  SizeClass size_class = SizeClass::Small;
  Family family = Family::A;
  unsigned opcode_alphabet_size = kOptionalOpcodes;
  std::uint64_t seed = 0;

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

// key=value lines; '#' starts a comment. Unknown keys are a ConfigError.
GeneratorConfig parse_generator_config(std::string_view text);
std::string format_generator_config(const GeneratorConfig& cfg);

// Throws ConfigError when the alphabet is empty or too large.
Program generate_program(std::uint64_t seed, const GeneratorConfig& config);

// A generated program with the configuration that produced it; config.seed
// is the program seed.
struct ProgramRecord {
  GeneratorConfig config;
  Program program;
};

// Program i uses family families[i % F], size class sizes[(i / F) % S] and
// seed mix_seed(seed, i).
struct CorpusSpec {
  std::size_t count = 100;
  std::vector<Family> families = {Family::A, Family::B, Family::C, Family::D, Family::E};
  std::vector<SizeClass> sizes = {SizeClass::Small};
  unsigned opcode_alphabet_size = kOptionalOpcodes;
  std::uint64_t seed = 0;
};

std::vector<ProgramRecord> generate_corpus(const CorpusSpec& spec);
std::vector<Program> corpus_programs(const std::vector<ProgramRecord>& corpus);
// {"programs": [{"family", "size_class", "opcode_alphabet_size", "seed", "program"}]}
nlohmann::json corpus_to_json(const std::vector<ProgramRecord>& corpus);
std::vector<ProgramRecord> corpus_from_json(const nlohmann::json& j);  // DataError

// ---------------------------------------------------------------------------
// Passes and rollouts

enum class Rule : std::uint8_t {
  NoOp, Dce, Dse, ConstFold, InstSimplify, Promote, Sroa, Cse, Canonicalize, BlockMerge,
  BranchFold, UnreachableElim, Inline, GlobalDce, ArgProp, Demote, Unroll,
};

struct PassRule {
  Rule rule = Rule::NoOp;
  std::uint32_t groups = 0;  // opcode-group or type-kind mask, rule specific
  bool exhaustive = false;   // iterate to a fixpoint instead of one sweep
  int limit = 0;             // size threshold, rule specific
};

const PassRule& pass_rule(PassId id);
std::string pass_name(PassId id);

Program apply_pass(const Program& p, PassId a);

struct RolloutResult {
  std::vector<std::size_t> sizes;  // sizes[0] is the initial count
  std::vector<std::uint64_t> state_hashes;
  std::size_t best_step = 0;
  std::size_t best_size = 0;
  Program best_state;
};

RolloutResult rollout(const Program& p, const PassSequence& seq);

// Best size reached within the first `allowance` passes (or all of them).
std::size_t best_size_within(const Program& p, const PassSequence& seq,
                             std::size_t allowance = SIZE_MAX);

// Built-in 45-pass sequence standing in for -Oz.
const PassSequence& oz_sequence();

struct BaselineSizes {
  std::size_t size_o0 = 0;
  std::size_t size_oz = 0;
};
BaselineSizes baseline_sizes(const Program& p);

// Exact reward ratio size_O0 / best_size.
struct Ratio {
  std::uint64_t num = 1;
  std::uint64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Ratio& a, const Ratio& b) { return a.num * b.den == b.num * a.den; }
  friend bool operator<(const Ratio& a, const Ratio& b) { return a.num * b.den < b.num * a.den; }
  friend bool operator>(const Ratio& a, const Ratio& b) { return b < a; }
};

Ratio sequence_reward_exact(const Program& p, const PassSequence& seq);
double sequence_reward(const Program& p, const PassSequence& seq);

// Greedy per-step search: at each step pick the pass that minimizes the
// summed current size over `programs` (ties prefer passes that change more programs
// without revisiting an earlier joint state, then the lowest id). This is how
// the built-in -Oz stand-in was produced.
PassSequence greedy_calibrate(const std::vector<Program>& programs, std::size_t length);
// The frozen calibration set used for oz_sequence().
std::vector<Program> oz_calibration_programs();

}  // namespace passforge::synthenv
