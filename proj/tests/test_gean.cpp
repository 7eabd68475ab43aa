#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "fixtures.hpp"
#include "passforge/error.hpp"
#include "passforge/gradcheck.hpp"
#include "passforge/gean.hpp"
#include "passforge/rng.hpp"

using namespace passforge;
using namespace passforge::gean;
using namespace passforge::graphrep;
using passforge::tensor::Mat;
using M = Mat<double>;
using Tp = tensor::Tape<double>;

namespace {

ModelConfig small_config(int vocab, int k = 3) {
  ModelConfig c;
  c.embed_dim = 4;
  c.num_layers = 2;
  c.hidden_dim = 5;
  c.k = k;
  c.vocab_size = vocab;
  return c;
}

ProgramGraph tiny_graph(std::vector<std::pair<std::size_t, std::size_t>> edges, std::size_t n = 3) {
  ProgramGraph g;
  const char* texts[] = {"add", "i32", "store", "ret", "load"};
  for (std::size_t i = 0; i < n; ++i) g.nodes.push_back({NodeKind::Instruction, texts[i % 5], 0, static_cast<int>(i % 2)});
  for (auto [s, d] : edges) g.edges.push_back({Flow::Data, static_cast<int>(s), s, d});
  return g;
}

Sample sample_of(const ProgramGraph& g, const Vocabulary& v) {
  Sample s;
  s.graph = encode(g, v);
  return s;
}

ProgramGraph permuted(const ProgramGraph& g, const std::vector<std::size_t>& perm) {
  ProgramGraph out;
  out.nodes.resize(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) out.nodes[perm[i]] = g.nodes[i];
  for (GraphEdge e : g.edges) {
    e.src = perm[e.src];
    e.dst = perm[e.dst];
    out.edges.push_back(e);
  }
  return out;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
  return worst;
}

}  // namespace

TEST_CASE("node embeddings") {
  Model<double> m(small_config(6), 1);
  EncodedGraph g;
  g.num_nodes = 3;
  g.tokens = {0, 4, 4};
  Tp t;
  const auto x = m.embed_nodes(t, g);
  const M& node_table = m.parameter("node_embedding").value;
  CHECK(t.value(x).row(0) == node_table.row(0));
  CHECK(t.value(x).row(1) == t.value(x).row(2));
  m.zero_grad();
  t.backward(t.sum(x));
  const M& grad = m.parameter("node_embedding").grad;
  for (int r = 0; r < 6; ++r) {
    const bool looked_up = r == 0 || r == 4;
    CHECK(grad.row(r).isZero() == !looked_up);
  }
  CHECK(grad(4, 0) == 2.0);
  g.tokens = {6, 0, 0};
  Tp t2;
  CHECK_THROWS_AS(m.embed_nodes(t2, g), InputError);
}

TEST_CASE("edge embeddings") {
  Model<double> m(small_config(3), 2);
  ProgramGraph pg;
  pg.nodes = {{NodeKind::Instruction, "a", 0, 0}, {NodeKind::Instruction, "b", 0, 1}};
  pg.edges = {{Flow::Control, 40, 0, 1}, {Flow::Control, 32, 0, 1}, {Flow::Control, 3, 0, 1}, {Flow::Call, 3, 1, 0}};
  const EncodedGraph g = encode(pg, Vocabulary::build({pg}));
  Tp t;
  const M e = t.value(m.embed_edges(t, g));
  CHECK(e.row(0) == e.row(1));
  CHECK(e.row(0) != e.row(2));
  m.parameter("edge_position").value.setZero();
  m.parameter("edge_block").value.setZero();
  Tp t2;
  const M only_type = t2.value(m.embed_edges(t2, g));
  CHECK(only_type.row(2) == m.parameter("edge_type").value.row(static_cast<int>(Flow::Control)));
  CHECK(only_type.row(3) == m.parameter("edge_type").value.row(static_cast<int>(Flow::Call)));
}

TEST_CASE("layer shapes, single contributions and isolated nodes") {
  ProgramGraph pg = tiny_graph({{0, 1}, {1, 2}});
  const Vocabulary v = Vocabulary::build({pg});
  ModelConfig c = small_config(static_cast<int>(v.size()));
  c.embed_dim = 8;
  Model<double> m(c, 3);
  const EncodedGraph g = encode(pg, v);
  Tp t;
  auto [x1, e1] = m.layer(t, 0, m.embed_nodes(t, g), m.embed_edges(t, g), g);
  CHECK(t.value(x1).rows() == 3);
  CHECK(t.value(x1).cols() == 8);
  CHECK(t.value(e1).rows() == 2);
  CHECK(t.value(e1).cols() == 8);

  // One edge 0 -> 1 and an isolated node 2.
  const EncodedGraph one = encode(tiny_graph({{0, 1}}), v);
  Tp t2;
  const auto x0 = m.embed_nodes(t2, one);
  const auto e0 = m.embed_edges(t2, one);
  auto [x, e] = m.layer(t2, 0, x0, e0, one);
  const M& X0 = t2.value(x0);
  const M& W = m.parameter("layer0.weight").value;
  const M& b = m.parameter("layer0.bias").value;
  M triplet(1, 24);
  triplet << X0.row(0), t2.value(e0).row(0), X0.row(1);
  const M out = triplet * W + b;
  auto elu = [](double z) { return z > 0 ? z : std::expm1(z); };
  for (int k = 0; k < 8; ++k) {
    CHECK(t2.value(x)(0, k) == doctest::Approx(elu(out(0, k))).epsilon(1e-12));
    CHECK(t2.value(x)(1, k) == doctest::Approx(elu(out(0, 9 + k))).epsilon(1e-12));
    CHECK(t2.value(e)(0, k) == doctest::Approx(elu(out(0, 18 + k))).epsilon(1e-12));
  }
  CHECK(t2.value(x).row(2) == X0.row(2));
}

TEST_CASE("direction sensitivity") {
  ProgramGraph fwd = tiny_graph({{0, 1}, {1, 2}});
  ProgramGraph flipped = tiny_graph({{1, 0}, {1, 2}});
  flipped.edges[0].position = 0;
  const Vocabulary v = Vocabulary::build({fwd});
  Model<double> m(small_config(static_cast<int>(v.size())), 4);
  CHECK(max_rel_diff(m.predict(sample_of(fwd, v)), m.predict(sample_of(flipped, v))) > 1e-6);
}

TEST_CASE("forward is invariant under node relabeling") {
  std::vector<ProgramGraph> graphs;
  for (std::uint64_t s = 0; s < 5; ++s) {
    synthenv::GeneratorConfig cfg;
    cfg.family = static_cast<synthenv::Family>(s);
    graphs.push_back(program_graph(synthenv::generate_program(s + 60, cfg)));
  }
  const Vocabulary v = Vocabulary::build(graphs);
  ModelConfig c = small_config(static_cast<int>(v.size()), 50);
  c.embed_dim = 16;
  Model<double> m(c, 5);
  Rng rng(6);
  for (const ProgramGraph& g : graphs) {
    std::vector<std::size_t> perm(g.nodes.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const auto a = m.predict(sample_of(g, v));
    CHECK(a.size() == 50);
    CHECK(max_rel_diff(a, m.predict(sample_of(permuted(g, perm), v))) <= 1e-9);
  }
  // Two hand-built isomorphic graphs with different node orders.
  ProgramGraph g1 = tiny_graph({{0, 1}, {1, 2}, {2, 0}}, 3);
  ProgramGraph g2 = permuted(g1, {2, 0, 1});
  const Vocabulary tv = Vocabulary::build({g1});
  Model<double> tm(small_config(static_cast<int>(tv.size())), 7);
  CHECK(max_rel_diff(tm.predict(sample_of(g1, tv)), tm.predict(sample_of(g2, tv))) <= 1e-9);
}

TEST_CASE("batched forward matches single forwards") {
  ProgramGraph a = tiny_graph({{0, 1}, {1, 2}});
  ProgramGraph b = tiny_graph({{1, 0}}, 4);
  const Vocabulary v = Vocabulary::build({a, b});
  Model<double> m(small_config(static_cast<int>(v.size())), 8);
  const Sample sa = sample_of(a, v), sb = sample_of(b, v);
  Tp t;
  const Sample* batch[] = {&sa, &sb};
  const M out = t.value(m.forward(t, batch));
  REQUIRE(out.rows() == 2);
  const auto pa = m.predict(sa), pb = m.predict(sb);
  for (int k = 0; k < 3; ++k) {
    CHECK(out(0, k) == doctest::Approx(pa[static_cast<std::size_t>(k)]).epsilon(1e-12));
    CHECK(out(1, k) == doctest::Approx(pb[static_cast<std::size_t>(k)]).epsilon(1e-12));
  }
  Sample empty;
  const Sample* bad[] = {&empty};
  Tp t2;
  CHECK_THROWS_AS(m.forward(t2, bad), InputError);
}

TEST_CASE("full gradient check") {
  const ProgramGraph pg = program_graph(fixtures::record_program());
  const Vocabulary v = Vocabulary::build({pg});
  for (bool edge_update : {true, false}) {
    ModelConfig c = small_config(static_cast<int>(v.size()));
    c.edge_update = edge_update;
    Model<double> m(c, 9);
    const Sample s = sample_of(pg, v);
    M target(1, 3);
    target << 0.2, 0.5, 0.3;
    std::vector<tensor::Parameter<double>*> ps;
    for (auto& p : m.parameters()) ps.push_back(&p);
    const double worst = gradcheck::worst_ratio(ps, [&](Tp& t, auto&) {
      const Sample* one[] = {&s};
      return t.cross_entropy_soft(m.forward(t, one), target);
    });
    CHECK(worst <= 1);
    if (!edge_update) {
      // The edge map of the last layers never reaches the output.
      const M& w = m.parameter("layer1.weight").grad;
      CHECK(w.rightCols(c.embed_dim).isZero());
    }
  }
}

TEST_CASE("edge update switch changes predictions") {
  const ProgramGraph pg = program_graph(fixtures::dead_code_program());
  const Vocabulary v = Vocabulary::build({pg});
  ModelConfig c = small_config(static_cast<int>(v.size()));
  Model<double> on(c, 10);
  c.edge_update = false;
  Model<double> off(c, 10);
  CHECK(max_rel_diff(on.predict(sample_of(pg, v)), off.predict(sample_of(pg, v))) > 1e-9);
}

TEST_CASE("flat MLP") {
  ModelConfig c = small_config(1, 4);
  c.encoder = Encoder::Flat;
  Model<double> m(c, 11);
  Sample s;
  s.flat = flat_features(fixtures::dead_code_program());
  CHECK(m.predict(s) == m.predict(s));
  CHECK(m.predict(s).size() == 4);

  Model<double> zero(c, 12);
  for (auto& p : zero.parameters())
    if (p.name.ends_with(".weight")) p.value.setZero();
  const M& bias = zero.parameter("mlp.2.bias").value;
  const auto out = zero.predict(s);
  for (int k = 0; k < 4; ++k) CHECK(out[static_cast<std::size_t>(k)] == bias(0, k));

  std::vector<tensor::Parameter<double>*> ps;
  for (auto& p : m.parameters()) ps.push_back(&p);
  const M y = M::Constant(1, 4, 0.5);
  CHECK(gradcheck::worst_ratio(ps, [&](Tp& t, auto&) {
          const Sample* one[] = {&s};
          return t.mse(m.forward(t, one), y);
        }) <= 1);
}

TEST_CASE("config and checkpoint round trip") {
  ModelConfig c = small_config(7, 5);
  c.head = Head::QValue;
  c.edge_update = false;
  CHECK(ModelConfig::from_json(nlohmann::json::parse(c.to_json().dump())) == c);
  CHECK_THROWS_AS(ModelConfig::from_json(nlohmann::json::parse("{}")), ConfigError);
  nlohmann::json bad = c.to_json();
  bad["num_layers"] = 0;
  CHECK_THROWS_AS(ModelConfig::from_json(bad), ConfigError);
  bad = c.to_json();
  bad["head"] = "nope";
  CHECK_THROWS_AS(ModelConfig::from_json(bad), ConfigError);

  Model<double> m(c, 13);
  const auto dir = std::filesystem::temp_directory_path() / "passforge_test_gean";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();
  save_model(path, m.config(), m.state());
  auto [c2, state] = load_model(path);
  CHECK(c2 == c);
  Model<double> back(c2, 99);
  back.load_state(state);
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    CHECK(back.parameters()[i].value == m.parameters()[i].value);
  state.pop_back();
  CHECK_THROWS_AS(back.load_state(state), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("single precision model") {
  const ProgramGraph pg = program_graph(fixtures::dead_code_program());
  const Vocabulary v = Vocabulary::build({pg});
  Model<float> m(small_config(static_cast<int>(v.size())), 14);
  const auto out = m.predict(sample_of(pg, v));
  Model<double> d(small_config(static_cast<int>(v.size())), 14);
  CHECK(max_rel_diff(out, d.predict(sample_of(pg, v))) < 1e-4);
}
