#include "passforge/gean.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

#include "passforge/error.hpp"
#include "passforge/rng.hpp"

namespace passforge::gean {

using nlohmann::json;
using graphrep::EncodedGraph;

namespace {

constexpr std::array<std::string_view, 2> kEncoders = {"gean", "flat"};
constexpr std::array<std::string_view, 3> kHeads = {"nvp", "bc", "qvalue"};
constexpr std::array<std::string_view, 2> kActivations = {"elu", "relu"};

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::string_view, N>& names, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<E>(i);
  throw ConfigError(std::string("unknown ") + what + ": " + std::string(s));
}

EncodedGraph concat_graphs(std::span<const Sample* const> batch, std::vector<int>& graph_of) {
  EncodedGraph big;
  graph_of.clear();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const EncodedGraph& g = batch[b]->graph;
    const int off = static_cast<int>(big.num_nodes);
    big.num_nodes += g.num_nodes;
    big.tokens.insert(big.tokens.end(), g.tokens.begin(), g.tokens.end());
    graph_of.insert(graph_of.end(), g.num_nodes, static_cast<int>(b));
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      big.src.push_back(g.src[e] + off);
      big.dst.push_back(g.dst[e] + off);
    }
    big.flow.insert(big.flow.end(), g.flow.begin(), g.flow.end());
    big.position.insert(big.position.end(), g.position.begin(), g.position.end());
    big.relpos.insert(big.relpos.end(), g.relpos.begin(), g.relpos.end());
  }
  return big;
}

}  // namespace

std::string_view encoder_name(Encoder e) { return kEncoders[static_cast<std::size_t>(e)]; }
std::string_view head_name(Head h) { return kHeads[static_cast<std::size_t>(h)]; }
std::string_view activation_name(Activation a) { return kActivations[static_cast<std::size_t>(a)]; }
Encoder parse_encoder(std::string_view s) { return parse_enum<Encoder>(s, kEncoders, "encoder"); }
Head parse_head(std::string_view s) { return parse_enum<Head>(s, kHeads, "head"); }
Activation parse_activation(std::string_view s) { return parse_enum<Activation>(s, kActivations, "activation"); }

void ModelConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
}

json ModelConfig::to_json() const {
  return {{"encoder", encoder_name(encoder)}, {"embed_dim", embed_dim},   {"num_layers", num_layers},
          {"hidden_dim", hidden_dim},         {"head", head_name(head)}, {"k", k},
          {"vocab_size", vocab_size},         {"activation", activation_name(activation)},
          {"edge_update", edge_update}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  try {
    ModelConfig c;
    c.encoder = parse_encoder(j.at("encoder").get<std::string>());
    c.embed_dim = j.at("embed_dim").get<int>();
    c.num_layers = j.at("num_layers").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.head = parse_head(j.at("head").get<std::string>());
    c.k = j.at("k").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.edge_update = j.at("edge_update").get<bool>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
}

Sample mix_samples(const Sample& a, const Sample& b) {
  Sample s;
  s.graph = graphrep::mixup(a.graph, b.graph);
  for (std::size_t i = 0; i < graphrep::kFlatFeatures; ++i) s.flat[i] = a.flat[i] + b.flat[i];
  return s;
}

// ---------------------------------------------------------------------------

template <class T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int d = config_.embed_dim;
  std::uint64_t s = seed;
  if (config_.encoder == Encoder::Gean) {
    add_param("node_embedding", config_.vocab_size, d, 1.0, ++s);
    add_param("edge_type", static_cast<int>(graphrep::kNumFlows), d, 1.0, ++s);
    add_param("edge_position", graphrep::kMaxPosition + 1, d, 1.0, ++s);
    add_param("edge_block", 3, d, 1.0, ++s);
    for (int l = 0; l < config_.num_layers; ++l) add_affine("layer" + std::to_string(l), 3 * d, 3 * d + 2, ++s);
    add_affine("head.0", d, config_.hidden_dim, ++s);
    add_affine("head.1", config_.hidden_dim, config_.k, ++s);
  } else {
    add_affine("mlp.0", static_cast<int>(graphrep::kFlatFeatures), config_.hidden_dim, ++s);
    add_affine("mlp.1", config_.hidden_dim, config_.hidden_dim, ++s);
    add_affine("mlp.2", config_.hidden_dim, config_.k, ++s);
  }
}

template <class T>
void Model<T>::add_param(const std::string& name, int rows, int cols, double bound, std::uint64_t seed) {
  Rng rng(seed);
  tensor::Mat<T> v(rows, cols);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  params_.emplace_back(name, std::move(v));
}

template <class T>
void Model<T>::add_affine(const std::string& prefix, int in, int out, std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  add_param(prefix + ".weight", in, out, bound, mix_seed(seed, 1));
  add_param(prefix + ".bias", 1, out, bound, mix_seed(seed, 2));
}

template <class T>
tensor::Parameter<T>& Model<T>::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw InputError("no parameter named " + name);
}

template <class T>
typename Model<T>::Var Model<T>::act(Tape& t, Var x) {
  return config_.activation == Activation::Elu ? t.elu(x) : t.relu(x);
}

template <class T>
typename Model<T>::Var Model<T>::affine(Tape& t, Var x, const std::string& prefix) {
  return t.add_row(t.matmul(x, t.param(parameter(prefix + ".weight"))), t.param(parameter(prefix + ".bias")));
}

template <class T>
typename Model<T>::Var Model<T>::embed_nodes(Tape& t, const EncodedGraph& g) {
  for (int tok : g.tokens)
    if (tok < 0 || tok >= config_.vocab_size) throw InputError("node token outside the vocabulary");
  return t.gather_rows(t.param(parameter("node_embedding")), g.tokens);
}

template <class T>
typename Model<T>::Var Model<T>::embed_edges(Tape& t, const EncodedGraph& g) {
  const Var type = t.gather_rows(t.param(parameter("edge_type")), g.flow);
  const Var pos = t.gather_rows(t.param(parameter("edge_position")), g.position);
  const Var blk = t.gather_rows(t.param(parameter("edge_block")), g.relpos);
  return t.add(t.add(type, pos), blk);
}

template <class T>
std::pair<typename Model<T>::Var, typename Model<T>::Var> Model<T>::layer(Tape& t, std::size_t index, Var x, Var e,
                                                                           const EncodedGraph& g) {
  const Eigen::Index d = config_.embed_dim;
  const std::string prefix = "layer" + std::to_string(index);
  const Var w = t.param(parameter(prefix + ".weight"));
  const Var b = t.param(parameter(prefix + ".bias"));
  // Affine map of the concatenated triplet, split by input block.
  const Var from_src = t.gather_rows(t.matmul(x, t.slice_rows(w, 0, d)), g.src);
  const Var from_edge = t.matmul(e, t.slice_rows(w, d, d));
  const Var from_dst = t.gather_rows(t.matmul(x, t.slice_rows(w, 2 * d, d)), g.dst);
  const Var out = t.add_row(t.add(t.add(from_src, from_edge), from_dst), b);

  const Var msg_src = t.slice_cols(out, 0, d);           // M1
  const Var score_src = t.slice_cols(out, d, 1);         // M2
  const Var msg_dst = t.slice_cols(out, d + 1, d);       // M3
  const Var score_dst = t.slice_cols(out, 2 * d + 1, 1); // M4
  const Var edge_next = t.slice_cols(out, 2 * d + 2, d); // M5

  std::vector<int> owner = g.src;
  owner.insert(owner.end(), g.dst.begin(), g.dst.end());
  const Var alpha = t.segment_softmax(t.concat_rows({score_src, score_dst}), owner, g.num_nodes);
  const Var agg = t.segment_sum(t.row_scale(t.concat_rows({msg_src, msg_dst}), alpha), owner, g.num_nodes);

  std::vector<bool> connected(g.num_nodes, false);
  for (int o : owner) connected[static_cast<std::size_t>(o)] = true;
  const Var x_next = t.select_rows(connected, act(t, agg), x);
  const Var e_next = config_.edge_update ? act(t, edge_next) : e;
  return {x_next, e_next};
}

template <class T>
typename Model<T>::Var Model<T>::forward_graphs(Tape& t, std::span<const Sample* const> batch) {
  std::vector<int> graph_of;
  const EncodedGraph big = concat_graphs(batch, graph_of);
  tensor::Mat<T> inv(static_cast<Eigen::Index>(big.num_nodes), 1);
  std::vector<std::size_t> counts(batch.size(), 0);
  for (int gi : graph_of) ++counts[static_cast<std::size_t>(gi)];
  for (std::size_t b = 0; b < batch.size(); ++b)
    if (counts[b] == 0) throw InputError("cannot pool an empty graph");
  for (std::size_t n = 0; n < graph_of.size(); ++n)
    inv(static_cast<Eigen::Index>(n), 0) = T(1) / static_cast<T>(counts[static_cast<std::size_t>(graph_of[n])]);

  Var x = embed_nodes(t, big);
  Var e = embed_edges(t, big);
  for (int l = 0; l < config_.num_layers; ++l) std::tie(x, e) = layer(t, static_cast<std::size_t>(l), x, e, big);
  const Var pooled = t.segment_sum(t.row_scale(x, t.constant(std::move(inv))), graph_of, batch.size());
  return affine(t, act(t, affine(t, pooled, "head.0")), "head.1");
}

template <class T>
typename Model<T>::Var Model<T>::forward_flat(Tape& t, std::span<const Sample* const> batch) {
  tensor::Mat<T> in(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(graphrep::kFlatFeatures));
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (std::size_t k = 0; k < graphrep::kFlatFeatures; ++k)
      in(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) =
          static_cast<T>(std::log1p(static_cast<double>(batch[b]->flat[k])));
  Var h = act(t, affine(t, t.constant(std::move(in)), "mlp.0"));
  h = act(t, affine(t, h, "mlp.1"));
  return affine(t, h, "mlp.2");
}

template <class T>
typename Model<T>::Var Model<T>::forward(Tape& t, std::span<const Sample* const> batch) {
  if (batch.empty()) throw InputError("forward needs at least one sample");
  return config_.encoder == Encoder::Gean ? forward_graphs(t, batch) : forward_flat(t, batch);
}

template <class T>
std::vector<double> Model<T>::predict(const Sample& s) {
  Tape t;
  const Sample* one[] = {&s};
  const tensor::Mat<T>& out = t.value(forward(t, one));
  std::vector<double> v(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index i = 0; i < out.cols(); ++i) v[static_cast<std::size_t>(i)] = static_cast<double>(out(0, i));
  return v;
}

template <class T>
std::vector<tensor::NamedTensor> Model<T>::state() const {
  std::vector<tensor::NamedTensor> out;
  for (const auto& p : params_) out.push_back(tensor::to_named(p));
  return out;
}

template <class T>
void Model<T>::load_state(const std::vector<tensor::NamedTensor>& state) {
  for (auto& p : params_) {
    const auto it = std::find_if(state.begin(), state.end(), [&](const auto& n) { return n.name == p.name; });
    if (it == state.end()) throw DataError("checkpoint lacks " + p.name);
    tensor::assign_named(p, *it);
  }
}

template <class T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Model<double>;
template class Model<float>;

void save_model(const std::string& path, const ModelConfig& config, const std::vector<tensor::NamedTensor>& state) {
  tensor::save_checkpoint(path, state);
  std::ofstream out(path + ".json");
  if (!out) throw InputError("cannot write " + path + ".json");
  out << config.to_json().dump(2) << "\n";
}

std::pair<ModelConfig, std::vector<tensor::NamedTensor>> load_model(const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw DataError("cannot read " + path + ".json");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad model sidecar: ") + e.what());
  }
  ModelConfig c;
  try {
    c = ModelConfig::from_json(j);
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  return {c, tensor::load_checkpoint(path)};
}

}  // namespace passforge::gean
