#include <doctest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "passforge/error.hpp"
#include "passforge/rng.hpp"

using namespace passforge;
using namespace passforge::synthenv;
using fixtures::Builder;
using fixtures::find_pass;

namespace {

PassSequence random_sequence(Rng& rng, std::size_t n) {
  PassSequence s(n);
  for (PassId& a : s) a = PassId(static_cast<int>(rng.below(kNumPasses)));
  return s;
}

GeneratorConfig config(SizeClass s, Family f) {
  GeneratorConfig c;
  c.size_class = s;
  c.family = f;
  return c;
}

}  // namespace

TEST_CASE("pass ids are range checked") {
  CHECK(PassId(0).value() == 0);
  CHECK(PassId(123).value() == 123);
  CHECK_THROWS_AS(PassId(124), std::out_of_range);
  CHECK_THROWS_AS(PassId(-1), std::out_of_range);
}

TEST_CASE("length-lex ordering") {
  CHECK(length_lex_less(make_sequence({9}), make_sequence({1, 1})));
  CHECK(length_lex_less(make_sequence({1, 2}), make_sequence({1, 3})));
  CHECK_FALSE(length_lex_less(make_sequence({1, 3}), make_sequence({1, 3})));
}

TEST_CASE("generator is deterministic") {
  const auto cfg = config(SizeClass::Small, Family::A);
  const Program a = generate_program(0, cfg);
  const Program b = generate_program(0, cfg);
  CHECK(a.content_hash() == b.content_hash());
  CHECK(a.to_json() == b.to_json());
  CHECK(generate_program(1, cfg).content_hash() != a.content_hash());
}

TEST_CASE("generator respects size bands") {
  CHECK(generate_program(7, config(SizeClass::Medium, Family::B)).instruction_count() >= 100);
  CHECK(generate_program(7, config(SizeClass::Medium, Family::B)).instruction_count() <= 400);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto [lo, hi] = size_band(static_cast<SizeClass>(s));
    for (std::size_t f = 0; f < kNumFamilies; ++f) {
      for (std::uint64_t seed = 0; seed < (s == 2 ? 2u : 6u); ++seed) {
        const Program p = generate_program(seed, config(static_cast<SizeClass>(s), static_cast<Family>(f)));
        CHECK(p.instruction_count() >= lo);
        CHECK(p.instruction_count() <= hi);
      }
    }
  }
}

TEST_CASE("opcode alphabet restricts generated arithmetic") {
  auto cfg = config(SizeClass::Small, Family::A);
  cfg.opcode_alphabet_size = 1;
  const Program p = generate_program(3, cfg);
  for (const Function& f : p.functions())
    for (const Block& b : f.blocks)
      for (const Instruction& ins : b.instrs) {
        const bool optional = static_cast<std::size_t>(ins.op) < kOptionalOpcodes;
        if (optional) CHECK(ins.op == Opcode::Add);
      }
}

TEST_CASE("generator configuration errors") {
  auto cfg = config(SizeClass::Small, Family::A);
  cfg.opcode_alphabet_size = 0;
  CHECK_THROWS_AS(generate_program(0, cfg), ConfigError);
  cfg.opcode_alphabet_size = 15;
  CHECK_THROWS_AS(generate_program(0, cfg), ConfigError);
  CHECK_THROWS_AS(parse_size_class("huge"), ConfigError);
  CHECK_THROWS_AS(parse_family("Z"), ConfigError);
  CHECK_THROWS_AS(parse_generator_config("size_class=tiny\n"), ConfigError);
  CHECK_THROWS_AS(parse_generator_config("colour=blue\n"), ConfigError);
  CHECK_THROWS_AS(parse_generator_config("seed=abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_generator_config("just text\n"), ConfigError);
}

TEST_CASE("generator config text round trip") {
  GeneratorConfig c;
  c.size_class = SizeClass::Large;
  c.family = Family::D;
  c.opcode_alphabet_size = 9;
  c.seed = 12345678901234ULL;
  CHECK(parse_generator_config(format_generator_config(c)) == c);
  const auto parsed = parse_generator_config("# comment\n size_class = medium \nfamily=C\n\nseed=4\n");
  CHECK(parsed.size_class == SizeClass::Medium);
  CHECK(parsed.family == Family::C);
  CHECK(parsed.seed == 4);
  CHECK(parsed.opcode_alphabet_size == kOptionalOpcodes);
}

TEST_CASE("instruction counts") {
  Builder b;
  for (int i = 0; i < 4; ++i) b.emit(Opcode::Add, b.i32, {Operand::arg(1), Operand::cst(i)});
  b.emit(Opcode::Ret, b.v, {});
  const Program five = b.build();
  CHECK(instruction_count(five) == 5);

  const Program p = fixtures::dead_code_program();
  CHECK(p.instruction_count() == 5);
  CHECK(apply_pass(p, find_pass("adce-all")).instruction_count() == 3);

  Builder c;
  for (int i = 0; i < 6; ++i) c.emit(Opcode::Add, c.i32, {Operand::arg(2), Operand::cst(i)});
  c.emit(Opcode::Ret, c.v, {});
  const Program seven = c.build();
  CHECK(instruction_count(union_programs(five, seven)) == 12);
}

TEST_CASE("content hash depends only on structure") {
  const Program a = fixtures::dead_code_program();
  const Program b = Program::assemble(a.functions(), a.types_ptr(), 999);
  CHECK(a.content_hash() == b.content_hash());
  CHECK(a.content_hash() != fixtures::record_program().content_hash());
}

TEST_CASE("malformed programs are rejected") {
  Builder b;
  b.emit(Opcode::Add, b.i32, {Operand::val(7), Operand::cst(1)});
  b.emit(Opcode::Ret, b.v, {});
  CHECK_THROWS_AS(b.build(), InputError);

  Builder c;
  c.emit(Opcode::Ret, c.v, {});
  c.emit(Opcode::Add, c.i32, {Operand::arg(1), Operand::cst(1)});
  CHECK_THROWS_AS(c.build(), InputError);

  Builder d;
  d.emit(Opcode::Br, d.v, {Operand::block(4)});
  CHECK_THROWS_AS(d.build(), InputError);
}

TEST_CASE("canonical JSON round trip") {
  for (std::size_t f = 0; f < kNumFamilies; ++f) {
    const Program p = generate_program(11 + f, config(SizeClass::Small, static_cast<Family>(f)));
    const Program q = Program::from_json(nlohmann::json::parse(p.to_json().dump()));
    CHECK(q.content_hash() == p.content_hash());
    CHECK(q.seed() == p.seed());
    CHECK(q.to_json() == p.to_json());
  }
  CHECK_THROWS_AS(Program::from_json(nlohmann::json::parse(R"({"seed":1})")), DataError);
  CHECK_THROWS_AS(Program::from_json(nlohmann::json::parse(
                      R"({"seed":1,"types":[{"kind":"primitive","prim":"void"}],)"
                      R"("functions":[{"args":[],"ret":0,"blocks":[[{"op":"frobnicate","type":0,"operands":[]}]]}]})")),
                  DataError);
  CHECK_THROWS_AS(Program::from_json(nlohmann::json::parse(
                      R"({"seed":1,"types":[{"kind":"primitive","prim":"void"}],)"
                      R"("functions":[{"args":[],"ret":0,"blocks":[[{"op":"add","type":0,"operands":[["v",5]]},)"
                      R"({"op":"ret","type":0,"operands":[]}]]}]})")),
                  DataError);
}

TEST_CASE("no-op passes leave the hash unchanged") {
  const Program p = generate_program(5, config(SizeClass::Small, Family::E));
  for (int i = 0; i < static_cast<int>(kNumPasses); ++i) {
    if (pass_rule(PassId(i)).rule != Rule::NoOp) continue;
    CHECK(apply_pass(p, PassId(i)).content_hash() == p.content_hash());
  }
}

TEST_CASE("pass table shape") {
  std::size_t noops = 0;
  std::vector<std::string> names;
  for (int i = 0; i < static_cast<int>(kNumPasses); ++i) {
    noops += pass_rule(PassId(i)).rule == Rule::NoOp;
    names.push_back(pass_name(PassId(i)));
  }
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
  CHECK(noops > kNumPasses / 2);
  CHECK(noops < kNumPasses);
}

TEST_CASE("dead code sweeps") {
  const Program p = fixtures::dead_code_program();
  // A single sweep only removes the unused sub; the mul becomes dead afterwards.
  const Program once = apply_pass(p, find_pass("dce-arith"));
  CHECK(once.instruction_count() == 4);
  CHECK(apply_pass(once, find_pass("dce-arith")).instruction_count() == 3);
  const Program full = apply_pass(p, find_pass("adce-arith"));
  CHECK(full.instruction_count() == 3);
  CHECK(apply_pass(full, find_pass("adce-arith")).content_hash() == full.content_hash());
  CHECK(apply_pass(p, find_pass("dce-logic")).content_hash() == p.content_hash());
}

TEST_CASE("constant folding") {
  Builder b;
  Operand x = b.emit(Opcode::Add, b.i32, {Operand::cst(2), Operand::cst(3)});
  Operand y = b.emit(Opcode::Mul, b.i32, {x, Operand::cst(4)});
  b.store_out(y);
  b.emit(Opcode::Ret, b.v, {});
  const Program p = b.build();
  const Program snap = apply_pass(p, find_pass("fold-arith"));
  CHECK(snap.instruction_count() == 3);
  const Program prop = apply_pass(p, find_pass("sccp-arith"));
  REQUIRE(prop.instruction_count() == 2);
  const Instruction& st = prop.functions()[0].blocks[0].instrs[0];
  CHECK(st.op == Opcode::Store);
  CHECK(st.operand(0) == Operand::cst(20));
}

TEST_CASE("folding wraps to the result width and skips division by zero") {
  Builder b;
  Operand big = b.emit(Opcode::Shl, b.i32, {Operand::cst(1), Operand::cst(31)});
  Operand wrapped = b.emit(Opcode::Add, b.i32, {big, big});
  b.store_out(wrapped);
  Operand div = b.emit(Opcode::UDiv, b.i32, {Operand::cst(5), Operand::cst(0)});
  b.store_out(div);
  b.emit(Opcode::Ret, b.v, {});
  const Program p = apply_pass(b.build(), find_pass("sccp-all"));
  CHECK(p.instruction_count() == 4);
  CHECK(p.functions()[0].blocks[0].instrs[0].operand(0) == Operand::cst(0));
}

TEST_CASE("sroa enables mem2reg") {
  const Program p = fixtures::record_program();
  const PassId sroa = find_pass("sroa-record");
  const PassId m2r = find_pass("mem2reg-scalar");
  const std::size_t enable_first = rollout(p, {sroa, m2r}).best_size;
  const std::size_t sweep_first = rollout(p, {m2r, sroa}).best_size;
  CHECK(enable_first == 2);
  CHECK(sweep_first == 5);
  CHECK(enable_first < sweep_first);
}

TEST_CASE("branch folding, threading and block merging") {
  Builder b;
  Operand c = b.emit(Opcode::ICmp, b.i1, {Operand::cst(1), Operand::cst(2)});
  const auto t = b.add_block(), f = b.add_block(), j = b.add_block();
  b.emit(Opcode::CondBr, b.v, {c, Operand::block(t), Operand::block(f)});
  b.store_out(Operand::arg(1), t);
  b.emit(Opcode::Br, b.v, {Operand::block(j)}, t);
  b.store_out(Operand::arg(2), f);
  b.emit(Opcode::Br, b.v, {Operand::block(j)}, f);
  b.emit(Opcode::Ret, b.v, {}, j);
  const Program p = b.build();
  CHECK(p.instruction_count() == 7);
  const PassSequence seq = {find_pass("fold-cmp"), find_pass("condprop"), find_pass("unreachable"),
                            find_pass("simplifycfg-merge"), find_pass("adce-cmp")};
  const RolloutResult r = rollout(p, seq);
  CHECK(r.sizes == std::vector<std::size_t>{7, 6, 6, 4, 2, 2});
  CHECK(r.best_state.block_count() == 1);
}

TEST_CASE("inlining and interprocedural constant propagation") {
  Builder b;
  const auto h = b.add_function(1);
  Operand s = b.emit(Opcode::Add, b.i32, {Operand::arg(0), Operand::cst(5)}, 0, h);
  b.emit(Opcode::Ret, b.v, {s}, 0, h);
  Operand r = b.emit(Opcode::Call, b.i32, {Operand::func(h), Operand::cst(2)});
  b.store_out(r);
  b.emit(Opcode::Ret, b.v, {});
  const Program p = b.build();
  CHECK(p.instruction_count() == 5);

  const Program inl = apply_pass(p, find_pass("inline-4"));
  CHECK(inl.instruction_count() == 5);
  const RolloutResult a = rollout(p, {find_pass("inline-4"), find_pass("sccp-all"), find_pass("globaldce")});
  CHECK(a.best_size == 2);
  const RolloutResult ip = rollout(p, {find_pass("ipsccp"), find_pass("sccp-all"), find_pass("ipsccp"),
                                       find_pass("strip-dead")});
  CHECK(ip.best_size == 2);
}

TEST_CASE("bloating passes grow the program") {
  Builder b;
  Operand x = b.emit(Opcode::Add, b.i32, {Operand::arg(1), Operand::cst(1)});
  Operand y = b.emit(Opcode::Mul, b.i32, {x, Operand::cst(2)});
  b.store_out(y);
  b.emit(Opcode::Ret, b.v, {});
  const Program p = b.build();
  CHECK(apply_pass(p, find_pass("reg2mem-2")).instruction_count() == 7);
  const RolloutResult r = rollout(p, {find_pass("reg2mem-2"), find_pass("mem2reg-scalar")});
  CHECK(r.sizes == std::vector<std::size_t>{4, 7, 4});
  CHECK(r.state_hashes[2] == p.content_hash());
}

TEST_CASE("passes are pure and always produce valid programs") {
  Rng rng(42);
  for (std::size_t f = 0; f < kNumFamilies; ++f) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const Program p = generate_program(seed, config(SizeClass::Small, static_cast<Family>(f)));
      const auto before = p.to_json();
      Program cur = p;
      for (int step = 0; step < 90; ++step) {
        const PassId a = PassId(static_cast<int>(rng.below(kNumPasses)));
        Program next = apply_pass(cur, a);
        CHECK(next.instruction_count() >= 1);
        CHECK(apply_pass(cur, a).content_hash() == next.content_hash());
        CHECK(validate(next.functions(), next.types()).empty());
        cur = std::move(next);
      }
      CHECK(p.to_json() == before);
    }
  }
}

TEST_CASE("rollout bookkeeping") {
  const Program p = generate_program(9, config(SizeClass::Small, Family::C));
  const RolloutResult empty = rollout(p, {});
  CHECK(empty.sizes == std::vector<std::size_t>{p.instruction_count()});
  CHECK(empty.best_step == 0);
  CHECK(empty.best_size == p.instruction_count());

  const PassId noop = fixtures::first_noop();
  const RolloutResult noops = rollout(p, {noop, noop, noop});
  CHECK(noops.sizes == std::vector<std::size_t>(4, p.instruction_count()));

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const PassSequence seq = random_sequence(rng, 1 + rng.below(45));
    const RolloutResult r = rollout(p, seq);
    REQUIRE(r.sizes.size() == seq.size() + 1);
    CHECK(r.state_hashes.size() == seq.size() + 1);
    CHECK(r.sizes[0] == p.instruction_count());
    const auto it = std::min_element(r.sizes.begin(), r.sizes.end());
    CHECK(r.best_size == *it);
    CHECK(r.best_step == static_cast<std::size_t>(it - r.sizes.begin()));
    CHECK(r.best_state.instruction_count() == r.best_size);
    CHECK(r.best_size <= r.sizes[0]);
    CHECK(best_size_within(p, seq) == r.best_size);
    for (std::size_t k = 0; k <= seq.size(); ++k) {
      CHECK(best_size_within(p, seq, k) == *std::min_element(r.sizes.begin(), r.sizes.begin() + k + 1));
    }
  }
}

TEST_CASE("sequence rewards") {
  const Program p = generate_program(4, config(SizeClass::Small, Family::B));
  CHECK(sequence_reward(p, {}) == 1.0);
  const PassId noop = fixtures::first_noop();
  CHECK(sequence_reward(p, {noop, noop}) == 1.0);

  // 80 live instructions plus 20 dead ones.
  Builder b;
  for (int i = 0; i < 39; ++i) {
    Operand x = b.emit(Opcode::Add, b.i32, {Operand::arg(1), Operand::cst(i)});
    b.store_out(x);
  }
  for (int i = 0; i < 20; ++i) b.emit(Opcode::Xor, b.i32, {Operand::arg(2), Operand::cst(i)});
  b.emit(Opcode::Store, b.v, {Operand::arg(2), Operand::arg(0)});
  b.emit(Opcode::Ret, b.v, {});
  const Program hundred = b.build();
  REQUIRE(hundred.instruction_count() == 100);
  CHECK(sequence_reward(hundred, {find_pass("dce-logic")}) == doctest::Approx(1.25).epsilon(1e-15));
  const Ratio exact = sequence_reward_exact(hundred, {find_pass("dce-logic")});
  CHECK(exact == Ratio{5, 4});
}

TEST_CASE("baseline sizes") {
  Builder b;
  b.emit(Opcode::Ret, b.v, {});
  const Program trivial = b.build();
  const BaselineSizes t = baseline_sizes(trivial);
  CHECK(t.size_o0 == 1);
  CHECK(t.size_oz == 1);

  const Program p = generate_program(21, config(SizeClass::Small, Family::E));
  std::size_t best = p.instruction_count();
  Program cur = p;
  for (PassId a : oz_sequence()) {
    cur = apply_pass(cur, a);
    best = std::min(best, cur.instruction_count());
  }
  const BaselineSizes s = baseline_sizes(p);
  CHECK(s.size_o0 == p.instruction_count());
  CHECK(s.size_oz == best);
  CHECK(s.size_oz <= s.size_o0);
}

TEST_CASE("built-in -Oz sequence matches its calibration") {
  CHECK(oz_sequence().size() == kEpisodeLength);
  CHECK(greedy_calibrate(oz_calibration_programs(), kEpisodeLength) == oz_sequence());
}

TEST_CASE("random sequences rarely beat -Oz") {
  Rng rng(2024);
  std::size_t beats = 0;
  const std::size_t trials = 1000;
  for (std::size_t t = 0; t < trials; ++t) {
    GeneratorConfig cfg = config(SizeClass::Small, static_cast<Family>(t % kNumFamilies));
    const Program p = generate_program(50000 + t, cfg);
    const std::size_t oz = baseline_sizes(p).size_oz;
    beats += best_size_within(p, random_sequence(rng, kEpisodeLength)) < oz;
  }
  MESSAGE("fraction beating -Oz: " << static_cast<double>(beats) / trials);
  CHECK(static_cast<double>(beats) / trials < 0.2);
}

TEST_CASE("corpus layout and json round trip") {
  CorpusSpec spec;
  spec.count = 12;
  spec.families = {Family::A, Family::C};
  spec.sizes = {SizeClass::Small, SizeClass::Medium};
  spec.seed = 3;
  const auto corpus = generate_corpus(spec);
  REQUIRE(corpus.size() == 12);
  CHECK(corpus[0].config.family == Family::A);
  CHECK(corpus[1].config.family == Family::C);
  CHECK(corpus[2].config.size_class == SizeClass::Medium);
  CHECK(corpus[4].config.size_class == SizeClass::Small);
  CHECK(corpus[5].config.seed == mix_seed(3, 5));
  CHECK(corpus[5].program.content_hash() == generate_program(mix_seed(3, 5), corpus[5].config).content_hash());

  const auto back = corpus_from_json(corpus_to_json(corpus));
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].config == corpus[i].config);
    CHECK(back[i].program.content_hash() == corpus[i].program.content_hash());
  }
  CHECK_THROWS_AS(corpus_from_json(nlohmann::json::object()), DataError);
  auto bad = corpus_to_json(corpus);
  bad["programs"][0]["family"] = "Z";
  CHECK_THROWS_AS(corpus_from_json(bad), DataError);
}
