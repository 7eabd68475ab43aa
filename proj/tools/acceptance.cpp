// Acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "passforge/candidates.hpp"
#include "passforge/cli.hpp"
#include "passforge/coreset.hpp"
#include "passforge/evalcli.hpp"
#include "passforge/gean.hpp"
#include "passforge/gradcheck.hpp"
#include "passforge/graphrep.hpp"
#include "passforge/rng.hpp"
#include "passforge/train.hpp"

using namespace passforge;
namespace fs = std::filesystem;
using M = tensor::Mat<double>;
using Tp = tensor::Tape<double>;

namespace {

// Tolerances.
constexpr double kSubmodularSlack = 1e-12;
constexpr double kGreedyBound = 1.0 - 1.0 / 2.718281828459045;
constexpr double kGradRelErr = 1e-4;  // ratio <= 1 in gradcheck terms
constexpr double kNvpSumTol = 1e-12;
constexpr double kNvpColdMass = 1 - 1e-6;
constexpr double kNvpUniformTol = 1e-6;
constexpr double kOrderingMargin = 0.01;
constexpr double kOverfitGap = 1e-3;
constexpr double kMetricTol = 1e-12;
constexpr double kPermutationTol = 1e-9;
constexpr double kDirectionMin = 1e-6;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::ostringstream line;
  line.precision(4);
  line << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << o.detail << " (" << std::fixed
       << secs << " s)";
  std::cout << line.str() << std::endl;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

coreset::RewardMatrix random_matrix(Rng& rng, std::size_t n, std::size_t m) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(m));
  for (auto& r : rows)
    for (double& x : r) x = rng.uniform(0.01, 2.0);
  return coreset::RewardMatrix::from_rows(rows);
}

// ---------------------------------------------------------------------------

Outcome submodularity() {
  Rng rng(101);
  std::size_t probes = 0, violations = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t n = 1 + rng.below(12), m = 2 + rng.below(11);
    const auto r = random_matrix(rng, n, m);
    for (int p = 0; p < 200; ++p) {
      std::vector<std::size_t> a, b;
      std::vector<std::size_t> outside;
      const std::size_t j = rng.below(m);
      for (std::size_t c = 0; c < m; ++c) {
        if (c == j) continue;
        const auto u = rng.below(3);
        if (u == 0) {
          a.push_back(c);
          b.push_back(c);
        } else if (u == 1) {
          b.push_back(c);
        }
      }
      auto with = [&](std::vector<std::size_t> s) {
        s.push_back(j);
        return s;
      };
      const double ja = coreset::objective(r, a), jb = coreset::objective(r, b);
      const double gain_a = coreset::objective(r, with(a)) - ja;
      const double gain_b = coreset::objective(r, with(b)) - jb;
      violations += ja > jb + kSubmodularSlack;
      violations += gain_a + kSubmodularSlack < gain_b;
      ++probes;
    }
  }
  return {violations == 0, std::to_string(probes) + " probes, " + std::to_string(violations) + " violations"};
}

Outcome greedy_bound() {
  Rng rng(202);
  std::size_t violations = 0;
  double worst = 1e9;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + rng.below(8), m = 1 + rng.below(10);
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(4, m));
    const auto r = coreset::normalize_rows(random_matrix(rng, n, m));
    const auto g = coreset::greedy_select(r, k);
    const auto opt = coreset::brute_force_select(r, k);
    const double jg = coreset::objective(r, g.selected);
    worst = std::min(worst, jg / opt.objective);
    violations += jg < kGreedyBound * opt.objective;
  }
  return {violations == 0, "200 instances, worst greedy/opt " + fmt(worst) + ", " + std::to_string(violations) +
                               " violations"};
}

graphrep::EncodedGraph random_graph(Rng& rng, int vocab) {
  graphrep::EncodedGraph g;
  g.num_nodes = 2 + rng.below(9);
  for (std::size_t i = 0; i < g.num_nodes; ++i) g.tokens.push_back(static_cast<int>(rng.below(vocab)));
  const std::size_t edges = 1 + rng.below(14);
  for (std::size_t e = 0; e < edges; ++e) {
    g.src.push_back(static_cast<int>(rng.below(g.num_nodes)));
    g.dst.push_back(static_cast<int>(rng.below(g.num_nodes)));
    g.flow.push_back(static_cast<int>(rng.below(graphrep::kNumFlows)));
    g.position.push_back(static_cast<int>(rng.below(graphrep::kMaxPosition + 1)));
    g.relpos.push_back(static_cast<int>(rng.below(3)));
  }
  return g;
}

M random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1, double hi = 1) {
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Inputs bounded away from zero, for ops with a kink at the origin.
M away_from_zero(Rng& rng, Eigen::Index r, Eigen::Index c) {
  M m = random_mat(rng, r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += m.data()[i] < 0 ? -0.05 : 0.05;
  return m;
}

Tp::Var project(Tp& t, Tp::Var x, std::uint64_t seed) {
  Rng rng(seed);
  const M& X = t.value(x);
  return t.sum(t.mul(x, t.constant(random_mat(rng, X.rows(), X.cols()))));
}

Outcome gradient_checks() {
  double worst_model = 0;
  Rng rng(303);
  const int vocab = 6, k = 5;
  for (int trial = 0; trial < 10; ++trial) {
    gean::ModelConfig c;
    c.embed_dim = 8;
    c.num_layers = 2;
    c.hidden_dim = 8;
    c.k = k;
    c.vocab_size = vocab;
    c.edge_update = trial % 2 == 0;
    gean::Model<double> model(c, 40 + static_cast<std::uint64_t>(trial));
    gean::Sample s;
    s.graph = random_graph(rng, vocab);
    M target = random_mat(rng, 1, k, 0.1, 1.0);
    target /= target.sum();
    std::vector<tensor::Parameter<double>*> ps;
    for (auto& p : model.parameters()) ps.push_back(&p);
    worst_model = std::max(worst_model, gradcheck::worst_ratio(ps, [&](Tp& t, auto&) {
      const gean::Sample* one[] = {&s};
      return t.cross_entropy_soft(model.forward(t, one), target);
    }));
  }

  using Op = std::function<Tp::Var(Tp&, std::vector<Tp::Var>&)>;
  struct OpCheck {
    std::string name;
    std::vector<M> inputs;
    Op f;
  };
  const std::vector<int> seg{0, 2, 0, 1, 2, 2};
  const std::vector<bool> keep{true, false, true, false, false, true};
  M soft = random_mat(rng, 6, 4, 0.1, 1.0);
  soft = soft.array().colwise() / soft.rowwise().sum().array();
  const M target = random_mat(rng, 6, 4);
  std::vector<OpCheck> ops{
      {"matmul", {random_mat(rng, 6, 4), random_mat(rng, 4, 3)},
       [](Tp& t, auto& v) { return project(t, t.matmul(v[0], v[1]), 1); }},
      {"add", {random_mat(rng, 6, 4), random_mat(rng, 6, 4)},
       [](Tp& t, auto& v) { return project(t, t.add(v[0], v[1]), 2); }},
      {"add_row", {random_mat(rng, 6, 4), random_mat(rng, 1, 4)},
       [](Tp& t, auto& v) { return project(t, t.add_row(v[0], v[1]), 3); }},
      {"scale", {random_mat(rng, 6, 4)}, [](Tp& t, auto& v) { return project(t, t.scale(v[0], -1.7), 4); }},
      {"sum", {random_mat(rng, 6, 4)}, [](Tp& t, auto& v) { return t.sum(v[0]); }},
      {"relu", {away_from_zero(rng, 6, 4)}, [](Tp& t, auto& v) { return project(t, t.relu(v[0]), 5); }},
      {"elu", {away_from_zero(rng, 6, 4)}, [](Tp& t, auto& v) { return project(t, t.elu(v[0]), 6); }},
      {"mul", {random_mat(rng, 6, 4), random_mat(rng, 6, 4)},
       [](Tp& t, auto& v) { return project(t, t.mul(v[0], v[1]), 7); }},
      {"row_scale", {random_mat(rng, 6, 4), random_mat(rng, 6, 1)},
       [](Tp& t, auto& v) { return project(t, t.row_scale(v[0], v[1]), 8); }},
      {"concat_cols", {random_mat(rng, 6, 2), random_mat(rng, 6, 3)},
       [](Tp& t, auto& v) { return project(t, t.concat_cols({v[0], v[1]}), 9); }},
      {"concat_rows", {random_mat(rng, 2, 4), random_mat(rng, 3, 4)},
       [](Tp& t, auto& v) { return project(t, t.concat_rows({v[0], v[1]}), 10); }},
      {"slice_cols", {random_mat(rng, 6, 5)}, [](Tp& t, auto& v) { return project(t, t.slice_cols(v[0], 1, 3), 11); }},
      {"slice_rows", {random_mat(rng, 6, 5)}, [](Tp& t, auto& v) { return project(t, t.slice_rows(v[0], 2, 3), 12); }},
      {"gather_rows", {random_mat(rng, 4, 3)},
       [](Tp& t, auto& v) { return project(t, t.gather_rows(v[0], {3, 0, 0, 2, 1, 3}), 13); }},
      {"segment_sum", {random_mat(rng, 6, 3)},
       [&](Tp& t, auto& v) { return project(t, t.segment_sum(v[0], seg, 4), 14); }},
      {"segment_softmax", {random_mat(rng, 6, 1)},
       [&](Tp& t, auto& v) { return project(t, t.segment_softmax(v[0], seg, 4), 15); }},
      {"mean_rows", {random_mat(rng, 6, 3)}, [](Tp& t, auto& v) { return project(t, t.mean_rows(v[0]), 16); }},
      {"select_rows", {random_mat(rng, 6, 3), random_mat(rng, 6, 3)},
       [&](Tp& t, auto& v) { return project(t, t.select_rows(keep, v[0], v[1]), 17); }},
      {"softmax", {random_mat(rng, 6, 4)}, [](Tp& t, auto& v) { return project(t, t.softmax(v[0]), 18); }},
      {"cross_entropy_soft", {random_mat(rng, 6, 4)},
       [&](Tp& t, auto& v) { return t.cross_entropy_soft(v[0], soft); }},
      {"mse", {random_mat(rng, 6, 4)}, [&](Tp& t, auto& v) { return t.mse(v[0], target); }},
  };
  double worst_op = 0;
  std::string worst_name;
  for (auto& op : ops) {
    std::vector<tensor::Parameter<double>> params;
    for (std::size_t i = 0; i < op.inputs.size(); ++i) params.emplace_back("x" + std::to_string(i), op.inputs[i]);
    std::vector<tensor::Parameter<double>*> ps;
    for (auto& p : params) ps.push_back(&p);
    const double w = gradcheck::worst_ratio(ps, op.f);
    if (w > worst_op) {
      worst_op = w;
      worst_name = op.name;
    }
  }
  const bool ok = worst_model <= 1 && worst_op <= 1;
  return {ok, "model max err " + fmt(worst_model * kGradRelErr) + " over 10 graphs, " + std::to_string(ops.size()) +
                  " ops max err " + fmt(worst_op * kGradRelErr) + " (" + worst_name + "), limit " + fmt(kGradRelErr)};
}

Outcome nvp_properties() {
  Rng rng(404);
  std::size_t bad = 0;
  double worst_sum = 0, worst_cold = 1, worst_uniform = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.below(60);
    std::vector<double> r;
    // Values on a 0.01 grid with one maximum.
    do {
      r.assign(k, 0);
      for (double& x : r) x = static_cast<double>(50 + rng.below(251)) / 100.0;
    } while (std::count(r.begin(), r.end(), *std::max_element(r.begin(), r.end())) != 1);
    const auto am = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    const auto v = train::nvp_targets(r, 0.25);
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    worst_sum = std::max(worst_sum, std::abs(s - 1));
    bad += std::abs(s - 1) > kNvpSumTol;
    bad += static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin()) != am;
    const auto cold = train::nvp_targets(r, 1e-4);
    worst_cold = std::min(worst_cold, cold[am]);
    bad += cold[am] < kNvpColdMass;
    for (double x : train::nvp_targets(r, 1e6)) {
      const double d = std::abs(x - 1.0 / static_cast<double>(k));
      worst_uniform = std::max(worst_uniform, d);
      bad += d > kNvpUniformTol;
    }
  }
  return {bad == 0, "1000 vectors, max |sum-1| " + fmt(worst_sum) + ", min cold mass " + fmt(worst_cold) +
                        ", max uniform dev " + fmt(worst_uniform)};
}

std::vector<const train::Example*> pointers(const std::vector<train::Example>& ex, std::size_t b, std::size_t e) {
  std::vector<const train::Example*> out;
  for (std::size_t i = b; i < e; ++i) out.push_back(&ex[i]);
  return out;
}

struct EndToEnd {
  std::size_t train = 500, val = 100, test = 100, mine_programs = 500, mine_episodes = 50;
  std::size_t epochs = 30;
};

Outcome end_to_end(const EndToEnd& e2e) {
  synthenv::CorpusSpec tr;
  tr.count = e2e.train + e2e.val;
  tr.seed = 1;
  synthenv::CorpusSpec te;
  te.count = e2e.test;
  te.seed = 2;
  const auto train_c = synthenv::generate_corpus(tr);
  const auto test_c = synthenv::generate_corpus(te);
  std::vector<synthenv::Program> train_programs;
  for (std::size_t i = 0; i < e2e.train; ++i) train_programs.push_back(train_c[i].program);
  const std::vector<synthenv::Program> mine(train_programs.begin(),
                                            train_programs.begin() + static_cast<std::ptrdiff_t>(
                                                                         std::min(e2e.mine_programs, e2e.train)));
  const auto cands = candidates::mine_candidates(mine, e2e.mine_episodes, synthenv::kEpisodeLength, 7);
  const auto matrix = coreset::normalize_rows(coreset::build_reward_matrix(train_programs, cands.sequences));
  const auto core = coreset::greedy_select(matrix, 50, &cands.sequences);

  std::vector<synthenv::ProgramRecord> train_only(train_c.begin(), train_c.begin() + static_cast<std::ptrdiff_t>(e2e.train));
  const auto vocab = train::build_vocabulary(train_only);
  const auto ex = train::make_examples(train_c, core.sequences, vocab);
  const auto ex_test = train::make_examples(test_c, core.sequences, vocab);
  const auto p_train = pointers(ex, 0, e2e.train);
  const auto p_val = pointers(ex, e2e.train, ex.size());
  const auto p_test = pointers(ex_test, 0, ex_test.size());

  train::TrainConfig cfg;
  cfg.epochs = e2e.epochs;
  cfg.seed = 1;
  const auto res = train::train_model(p_train, p_val, core.sequences, static_cast<int>(vocab.size()), cfg);
  gean::Model<double> model(res.model, 0);
  model.load_state(res.best_state);
  const double nvp = train::validation_metric(model, p_test, core.sequences, evalcli::kBudget);

  const auto pop = evalcli::popularity(matrix, core.selected);
  const auto top_plan = evalcli::infer(pop, core.sequences);
  std::vector<evalcli::ReportRow> top, oracle;
  std::size_t max_passes = 0;
  for (const auto* e : p_test) {
    const auto x = evalcli::execute_plan(e->table, top_plan);
    top.push_back({e->program_id, e->family, e->table.initial, e->size_oz, x.best_size, x.passes_used});
    std::size_t best = e->table.initial;
    for (std::size_t k = 0; k < core.sequences.size(); ++k) best = std::min(best, e->table.best_within(k, SIZE_MAX));
    oracle.push_back({e->program_id, e->family, e->table.initial, e->size_oz, best, 0});
    max_passes = std::max(max_passes, x.passes_used);
  }
  for (const auto& row : train::evaluate_model(model, p_test, core.sequences, evalcli::kBudget).rows) {
    max_passes = std::max(max_passes, row.passes_used);
  }
  const double m_top = evalcli::mean_over_oz(top), m_oracle = evalcli::mean_over_oz(oracle);
  const bool ok = m_oracle >= nvp && nvp >= m_top + kOrderingMargin && max_passes <= evalcli::kBudget;
  return {ok, std::to_string(e2e.train) + " train / " + std::to_string(e2e.test) + " held-out, K=" +
                  std::to_string(core.sequences.size()) + ", MeanOverOz oracle " + fmt(m_oracle) + " >= nvp " +
                  fmt(nvp) + " >= top45 " + fmt(m_top) + " + " + fmt(kOrderingMargin) + ", best epoch " +
                  std::to_string(res.best_epoch)};
}

Outcome overfit() {
  synthenv::CorpusSpec spec;
  spec.count = 10;
  spec.seed = 77;
  const auto corpus = synthenv::generate_corpus(spec);
  Rng rng(3);
  std::vector<synthenv::PassSequence> seqs;
  for (int i = 0; i < 6; ++i) {
    synthenv::PassSequence s;
    for (int j = 0; j < 12; ++j) s.push_back(synthenv::PassId(static_cast<int>(rng.below(synthenv::kNumPasses))));
    seqs.push_back(s);
  }
  const auto vocab = train::build_vocabulary(corpus);
  const auto ex = train::make_examples(corpus, seqs, vocab);
  const auto ptrs = pointers(ex, 0, ex.size());
  train::TrainConfig cfg;
  cfg.embed_dim = 32;
  cfg.num_layers = 2;
  cfg.hidden_dim = 64;
  cfg.batch_size = 10;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 400;
  cfg.seed = 11;
  const auto res = train::train_model(ptrs, {}, seqs, static_cast<int>(vocab.size()), cfg);
  gean::Model<double> m(res.model, 0);
  m.load_state(res.best_state);
  const double gap = train::dataset_loss(m, ptrs, cfg, seqs) - train::target_entropy(ptrs, cfg.temperature);
  return {gap < kOverfitGap && gap > -1e-12, "10 programs, loss - H(v) = " + fmt(gap) + " < " + fmt(kOverfitGap)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "passforge_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto run = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "passforge");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    if (cli_main(static_cast<int>(argv.size()), argv.data(), out, err) != 0) throw std::runtime_error(err.str());
  };
  auto p = [&](const std::string& f) { return (dir / f).string(); };
  run({"gen", "--count", "40", "--seed", "8", "--out", p("corpus.json")});
  for (const std::string r : {"a", "b"}) {
    run({"mine", "--programs", p("corpus.json"), "--episodes", "10", "--seed", "5", "--out", p("c" + r + ".json")});
    run({"matrix", "--programs", p("corpus.json"), "--candidates", p("c" + r + ".json"), "--out", p("R" + r + ".csv")});
    run({"coreset", "--matrix", p("R" + r + ".csv"), "--k", "8", "--candidates", p("c" + r + ".json"), "--out",
         p("s" + r + ".json")});
  }
  bool same = true;
  for (const std::string f : {"c%.json", "c%.json.provenance.json", "R%.csv", "s%.json"}) {
    std::string a = f, b = f;
    a.replace(a.find('%'), 1, "a");
    b.replace(b.find('%'), 1, "b");
    same = same && slurp(dir / a) == slurp(dir / b) && !slurp(dir / a).empty();
  }

  gean::ModelConfig c;
  c.embed_dim = 12;
  c.num_layers = 2;
  c.hidden_dim = 10;
  c.k = 7;
  c.vocab_size = 20;
  gean::Model<double> model(c, 99);
  gean::save_model(p("m.ckpt"), c, model.state());
  const auto [back_cfg, back_state] = gean::load_model(p("m.ckpt"));
  gean::Model<double> back(back_cfg, 1);
  back.load_state(back_state);
  const bool state_same = back_cfg == c && back.state() == model.state();
  Rng rng(5);
  bool outputs_same = true;
  for (int i = 0; i < 5; ++i) {
    gean::Sample s;
    s.graph = random_graph(rng, 20);
    outputs_same = outputs_same && model.predict(s) == back.predict(s);
  }
  fs::remove_all(dir);
  return {same && state_same && outputs_same,
          std::string("pipeline artifacts ") + (same ? "identical" : "differ") + ", checkpoint " +
              (state_same && outputs_same ? "bit-exact" : "differs")};
}

Outcome budget_invariant() {
  Rng rng(808);
  std::size_t over = 0, max_used = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t k = 1 + rng.below(60);
    std::vector<synthenv::PassSequence> seqs;
    std::vector<double> scores;
    for (std::size_t i = 0; i < k; ++i) {
      seqs.emplace_back(1 + rng.below(45), synthenv::PassId(0));
      scores.push_back(rng.uniform());
    }
    const auto plan = evalcli::infer(scores, seqs);
    evalcli::SizeTable table;
    table.initial = 10;
    for (const auto& s : seqs) table.traces.emplace_back(s.size() + 1, 10);
    const std::size_t used = evalcli::execute_plan(table, plan).passes_used;
    max_used = std::max(max_used, used);
    over += used > evalcli::kBudget || plan.total() > evalcli::kBudget;
  }
  const std::vector<synthenv::PassSequence> ex{synthenv::PassSequence(20), synthenv::PassSequence(20),
                                               synthenv::PassSequence(10)};
  const auto plan = evalcli::infer(std::vector<double>{3, 2, 1}, ex);
  std::vector<std::size_t> allotted;
  for (const auto& s : plan.steps) allotted.push_back(s.allotted);
  const bool trunc = allotted == std::vector<std::size_t>{20, 20, 5};
  return {over == 0 && trunc, "10000 plans, max passes " + std::to_string(max_used) + ", [20,20,10] -> " +
                                  (trunc ? "[20,20,5]" : "wrong")};
}

Outcome closure() {
  std::vector<graphrep::ProgramGraph> graphs;
  std::size_t composite = 0, type_nodes = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    synthenv::GeneratorConfig cfg;
    cfg.family = static_cast<synthenv::Family>(s % synthenv::kNumFamilies);
    cfg.size_class = s % 3 == 0 ? synthenv::SizeClass::Medium : synthenv::SizeClass::Small;
    graphs.push_back(graphrep::program_graph(synthenv::generate_program(7000 + s, cfg)));
    for (const auto& n : graphs.back().nodes) {
      if (n.kind != graphrep::NodeKind::Type) continue;
      ++type_nodes;
      composite += n.text.find_first_of("*{}[]") != std::string::npos;
    }
  }
  const auto vocab = graphrep::Vocabulary::build(graphs);
  std::size_t unknown = 0;
  for (const auto& g : graphs)
    for (const auto& n : g.nodes) unknown += vocab.encode(n.text) == graphrep::Vocabulary::kUnknown;
  const bool novel = vocab.encode("never-seen-token") == graphrep::Vocabulary::kUnknown;
  return {composite == 0 && unknown == 0 && novel && type_nodes > 0,
          std::to_string(type_nodes) + " type nodes, " + std::to_string(composite) + " composite, " +
              std::to_string(unknown) + " training tokens unknown, novel token -> " + (novel ? "0" : "nonzero")};
}

Outcome metric_identities() {
  synthenv::CorpusSpec spec;
  spec.count = 50;
  spec.seed = 9;
  const auto oz = evalcli::evaluate_oz(synthenv::generate_corpus(spec));
  const double m = evalcli::mean_over_oz(oz.rows), g = evalcli::gmean_over_oz(oz.rows);
  auto row = [](std::size_t a, std::size_t b) { return evalcli::ReportRow{"p", "A", a, a, b, 0}; };
  const std::vector<evalcli::ReportRow> f1{row(100, 90)}, f2{row(100, 90), row(50, 55)}, g1{row(100, 50), row(200, 400)},
      g2{row(100, 80)};
  const double e1 = std::abs(evalcli::mean_over_oz(f1) - 0.10), e2 = std::abs(evalcli::mean_over_oz(f2));
  const double e3 = std::abs(evalcli::gmean_over_oz(g1) - 1.0), e4 = std::abs(evalcli::gmean_over_oz(g2) - 1.25);
  const double worst = std::max({e1, e2, e3, e4});
  return {m == 0.0 && g == 1.0 && worst <= kMetricTol,
          "-Oz policy MeanOverOz " + fmt(m) + ", GMeanOverOz " + fmt(g) + ", fixture max err " + fmt(worst)};
}

Outcome permutation() {
  std::vector<graphrep::ProgramGraph> graphs;
  for (std::uint64_t s = 0; s < 50; ++s) {
    synthenv::GeneratorConfig cfg;
    cfg.family = static_cast<synthenv::Family>(s % synthenv::kNumFamilies);
    graphs.push_back(graphrep::program_graph(synthenv::generate_program(9100 + s, cfg)));
  }
  const auto vocab = graphrep::Vocabulary::build(graphs);
  gean::ModelConfig c;
  c.embed_dim = 16;
  c.num_layers = 3;
  c.hidden_dim = 16;
  c.k = 10;
  c.vocab_size = static_cast<int>(vocab.size());
  gean::Model<double> model(c, 12);
  Rng rng(11);
  double worst = 0;
  auto sample = [&](const graphrep::ProgramGraph& g) {
    gean::Sample s;
    s.graph = graphrep::encode(g, vocab);
    return s;
  };
  auto diff = [](const std::vector<double>& a, const std::vector<double>& b) {
    double w = 0;
    for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
    return w;
  };
  for (const auto& g : graphs) {
    std::vector<std::size_t> perm(g.nodes.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    graphrep::ProgramGraph h;
    h.nodes.resize(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) h.nodes[perm[i]] = g.nodes[i];
    for (auto e : g.edges) {
      e.src = perm[e.src];
      e.dst = perm[e.dst];
      h.edges.push_back(e);
    }
    for (std::size_t i = h.edges.size(); i > 1; --i) std::swap(h.edges[i - 1], h.edges[rng.below(i)]);
    worst = std::max(worst, diff(model.predict(sample(g)), model.predict(sample(h))));
  }
  // Direction fixture: a three-node chain with one edge reversed.
  graphrep::ProgramGraph fwd;
  for (const char* t : {"add", "load", "store"}) fwd.nodes.push_back({graphrep::NodeKind::Instruction, t, 0, 0});
  fwd.edges = {{graphrep::Flow::Data, 0, 0, 1}, {graphrep::Flow::Data, 0, 1, 2}};
  graphrep::ProgramGraph flipped = fwd;
  std::swap(flipped.edges[0].src, flipped.edges[0].dst);
  const double dir = diff(model.predict(sample(fwd)), model.predict(sample(flipped)));
  return {worst <= kPermutationTol && dir > kDirectionMin,
          "50 graphs, max relabel diff " + fmt(worst) + ", flipped-edge diff " + fmt(dir)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  EndToEnd e2e;
  app.add_option("--epochs", e2e.epochs, "training epochs for the end-to-end check")->capture_default_str();
  std::vector<int> only;
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  if (want(1)) report(1, "submodularity", submodularity);
  if (want(2)) report(2, "greedy bound", greedy_bound);
  if (want(3)) report(3, "gradient checks", gradient_checks);
  if (want(4)) report(4, "nvp targets", nvp_properties);
  if (want(5)) report(5, "end-to-end ordering", [&] { return end_to_end(e2e); });
  if (want(6)) report(6, "overfit", overfit);
  if (want(7)) report(7, "determinism", determinism);
  if (want(8)) report(8, "budget", budget_invariant);
  if (want(9)) report(9, "type-graph closure", closure);
  if (want(10)) report(10, "metric identities", metric_identities);
  if (want(11)) report(11, "permutation invariance", permutation);
  return failures == 0 ? 0 : 1;
}
