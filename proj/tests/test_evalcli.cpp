#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "passforge/error.hpp"
#include "passforge/evalcli.hpp"
#include "passforge/rng.hpp"

using namespace passforge;
using namespace passforge::evalcli;
using synthenv::PassId;

namespace {

std::vector<PassSequence> sequences_of_lengths(std::initializer_list<std::size_t> lens) {
  std::vector<PassSequence> out;
  for (auto n : lens) out.emplace_back(n, PassId(0));
  return out;
}

PassSequence random_sequence(Rng& rng, std::size_t n) {
  PassSequence s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(PassId(static_cast<int>(rng.below(synthenv::kNumPasses))));
  return s;
}

std::vector<synthenv::ProgramRecord> small_corpus(std::size_t n, std::uint64_t seed) {
  synthenv::CorpusSpec spec;
  spec.count = n;
  spec.seed = seed;
  return synthenv::generate_corpus(spec);
}

ReportRow row(std::size_t oz, std::size_t pi) { return {"p", "A", oz, oz, pi, 0}; }

}  // namespace

TEST_CASE("infer truncates the sequence that crosses the budget") {
  const auto seqs = sequences_of_lengths({20, 20, 10});
  const std::vector<double> scores{0.5, 0.3, 0.2};
  const PolicyPlan plan = infer(scores, seqs);
  REQUIRE(plan.steps.size() == 3);
  CHECK(plan.steps[0] == PlanStep{0, 20});
  CHECK(plan.steps[1] == PlanStep{1, 20});
  CHECK(plan.steps[2] == PlanStep{2, 5});
  CHECK(plan.total() == 45);
}

TEST_CASE("infer ordering rules") {
  SUBCASE("single full-length sequence") {
    const auto plan = infer(std::vector<double>{1.0}, sequences_of_lengths({45}));
    REQUIRE(plan.steps.size() == 1);
    CHECK(plan.steps[0] == PlanStep{0, 45});
  }
  SUBCASE("length-one sequences take the top 45 scores") {
    std::vector<PassSequence> seqs(60, PassSequence{PassId(1)});
    std::vector<double> scores(60);
    for (std::size_t i = 0; i < 60; ++i) scores[i] = static_cast<double>((i * 37) % 60);
    const auto plan = infer(scores, seqs);
    REQUIRE(plan.steps.size() == 45);
    for (const auto& s : plan.steps) CHECK(scores[s.index] >= 15.0);
  }
  SUBCASE("ties go to the lower index") {
    const auto plan = infer(std::vector<double>{0.2, 0.7, 0.7, 0.1}, sequences_of_lengths({5, 5, 5, 5}));
    REQUIRE(plan.steps.size() == 4);
    CHECK(plan.steps[0].index == 1);
    CHECK(plan.steps[1].index == 2);
    CHECK(plan.steps[2].index == 0);
    CHECK(plan.steps[3].index == 3);
  }
  CHECK_THROWS_AS(infer(std::vector<double>{1.0}, sequences_of_lengths({1, 2})), InputError);
}

TEST_CASE("randomized plans respect the budget") {
  Rng rng(17);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t k = 1 + rng.below(60);
    std::vector<PassSequence> seqs;
    std::vector<double> scores;
    std::size_t total = 0;
    for (std::size_t i = 0; i < k; ++i) {
      seqs.emplace_back(1 + rng.below(45), PassId(0));
      scores.push_back(rng.uniform());
      total += seqs.back().size();
    }
    const auto plan = infer(scores, seqs);
    REQUIRE(plan.total() <= kBudget);
    REQUIRE(plan.total() == std::min(total, kBudget));
  }
}

TEST_CASE("execute_plan restarts from the original program") {
  const Program p = fixtures::dead_code_program();
  const PassSequence noop(10, fixtures::first_noop());
  CHECK(execute_plan(p, PolicyPlan{}, {}).best_size == p.instruction_count());
  const std::vector<PassSequence> seqs{noop, noop};
  const auto ex = execute_plan(p, infer(std::vector<double>{1, 0}, seqs), seqs);
  CHECK(ex.best_size == p.instruction_count());
  CHECK(ex.passes_used == 20);

  Rng rng(5);
  for (const auto& rec : small_corpus(10, 9)) {
    std::vector<PassSequence> cs;
    for (int i = 0; i < 6; ++i) cs.push_back(random_sequence(rng, 3 + rng.below(20)));
    const std::size_t oracle = oracle_eval(rec.program, cs);
    std::vector<double> scores(cs.size(), 0.0);
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < cs.size(); ++k) {
      if (synthenv::best_size_within(rec.program, cs[k]) == oracle) best_k = k;
    }
    scores[best_k] = 1.0;
    CHECK(execute_plan(rec.program, infer(scores, cs), cs).best_size == oracle);
  }
}

TEST_CASE("size tables agree with direct execution") {
  Rng rng(8);
  for (const auto& rec : small_corpus(8, 4)) {
    std::vector<PassSequence> cs;
    for (int i = 0; i < 8; ++i) cs.push_back(random_sequence(rng, 1 + rng.below(30)));
    const SizeTable table = size_table(rec.program, cs);
    for (int t = 0; t < 20; ++t) {
      std::vector<double> scores;
      for (std::size_t k = 0; k < cs.size(); ++k) scores.push_back(rng.uniform());
      const auto plan = infer(scores, cs, 1 + rng.below(60));
      const auto a = execute_plan(rec.program, plan, cs);
      const auto b = execute_plan(table, plan);
      CHECK(a.best_size == b.best_size);
      CHECK(a.passes_used == b.passes_used);
    }
  }
}

TEST_CASE("oracle matches an exhaustive rollout") {
  Rng rng(21);
  for (const auto& rec : small_corpus(10, 12)) {
    std::vector<PassSequence> cs;
    for (int i = 0; i < 3; ++i) cs.push_back(random_sequence(rng, 15));
    std::size_t expect = rec.program.instruction_count();
    for (const auto& s : cs) {
      Program cur = rec.program;
      for (auto a : s) {
        cur = synthenv::apply_pass(cur, a);
        expect = std::min(expect, cur.instruction_count());
      }
    }
    CHECK(oracle_eval(rec.program, cs) == expect);
    CHECK(oracle_eval(rec.program, {cs[0]}) == synthenv::best_size_within(rec.program, cs[0]));
  }
}

TEST_CASE("popularity counts row maxima") {
  SUBCASE("single column") {
    const auto m = coreset::RewardMatrix::from_rows({{1.0}, {2.0}});
    CHECK(popularity(m, {0}) == std::vector<double>{2.0});
  }
  SUBCASE("column 1 wins three of four rows") {
    const auto m = coreset::RewardMatrix::from_rows({{1.0, 2.0}, {1.0, 3.0}, {4.0, 1.0}, {1.0, 1.5}});
    const auto pop = popularity(m, {0, 1});
    CHECK(pop == std::vector<double>{1.0, 3.0});
    const auto plan = infer(pop, sequences_of_lengths({4, 4}));
    CHECK(plan.steps[0].index == 1);
  }
  SUBCASE("ties split the credit") {
    const auto m = coreset::RewardMatrix::from_rows({{1.0, 1.0, 0.5}, {1.0, 2.0, 2.0}});
    CHECK(popularity(m, {0, 1, 2}) == std::vector<double>{0.5, 1.0, 0.5});
    CHECK(popularity(m, {2, 0}) == std::vector<double>{1.0, 1.0});
  }
  const auto m = coreset::RewardMatrix::from_rows({{1.0}});
  CHECK_THROWS_AS(popularity(m, {}), InputError);
  CHECK_THROWS_AS(popularity(m, {1}), InputError);
}

TEST_CASE("top-45 truncates like infer") {
  const auto rec = small_corpus(1, 3)[0];
  Rng rng(2);
  const std::vector<PassSequence> cs{random_sequence(rng, 30), random_sequence(rng, 30)};
  const std::vector<double> pop{2.0, 1.0};
  const std::size_t expect = std::min(synthenv::best_size_within(rec.program, cs[0]),
                                      synthenv::best_size_within(rec.program, cs[1], 15));
  CHECK(topk_popular_eval(rec.program, cs, pop) == expect);
}

TEST_CASE("metric fixtures") {
  const std::vector<ReportRow> one{row(100, 90)};
  CHECK(std::abs(mean_over_oz(one) - 0.10) < 1e-12);
  const std::vector<ReportRow> two{row(100, 90), row(50, 55)};
  CHECK(std::abs(mean_over_oz(two)) < 1e-12);
  const std::vector<ReportRow> g{row(100, 50), row(200, 400)};
  CHECK(std::abs(gmean_over_oz(g) - 1.0) < 1e-12);
  const std::vector<ReportRow> g1{row(100, 80)};
  CHECK(std::abs(gmean_over_oz(g1) - 1.25) < 1e-12);
  CHECK_THROWS_AS(mean_over_oz(std::vector<ReportRow>{}), InputError);
  CHECK_THROWS_AS(gmean_over_oz(std::vector<ReportRow>{row(10, 0)}), InputError);
}

TEST_CASE("the -Oz policy scores exactly zero and one") {
  const auto rep = evaluate_oz(small_corpus(25, 6));
  CHECK(mean_over_oz(rep.rows) == 0.0);
  CHECK(gmean_over_oz(rep.rows) == 1.0);
  for (const auto& s : rep.by_family()) {
    CHECK(s.mean_over_oz == 0.0);
    CHECK(s.gmean_over_oz == 1.0);
  }
}

TEST_CASE("oracle dominates budgeted policies and reports round trip") {
  const auto corpus = small_corpus(15, 30);
  Rng rng(44);
  std::vector<PassSequence> cs;
  for (int i = 0; i < 8; ++i) cs.push_back(random_sequence(rng, 5 + rng.below(30)));
  const auto oracle = evaluate_oracle(corpus, cs);
  std::vector<std::vector<double>> scores(corpus.size());
  for (auto& s : scores) {
    for (std::size_t k = 0; k < cs.size(); ++k) s.push_back(rng.uniform());
  }
  const auto policy = evaluate("random", corpus, cs, [&](std::size_t i) { return infer(scores[i], cs); });
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(oracle.rows[i].size_policy <= policy.rows[i].size_policy);
    CHECK(policy.rows[i].passes_used <= kBudget);
    CHECK(policy.rows[i].size_policy <= policy.rows[i].size_o0);
  }
  CHECK(oracle.aggregate().mean_over_oz >= policy.aggregate().mean_over_oz);
  CHECK(policy.aggregate().max_passes <= kBudget);

  const auto j = policy.to_json();
  CHECK(j.contains("aggregate"));
  CHECK(j["aggregate"].contains("mean_over_oz"));
  CHECK(j["aggregate"].contains("gmean_over_oz"));
  CHECK(j["families"].size() == 5);
  CHECK(EvalReport::from_json(nlohmann::json::parse(j.dump())) == policy);
  CHECK_THROWS_AS(EvalReport::from_json(nlohmann::json::object()), DataError);

  const std::string csv = policy.summary_csv();
  CHECK(csv.rfind("method,group,programs,mean_over_oz,gmean_over_oz,max_passes\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  CHECK(csv.find("random,all,15,") != std::string::npos);
}
